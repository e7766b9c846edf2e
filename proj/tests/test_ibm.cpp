#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "herdgate/ibm.hpp"
#include "herdgate/stats.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace herdgate;
using namespace herdgate::ibm;

namespace {

WorldSpec single_herd_spec(int size, int initial_t, int initial_i) {
    WorldSpec spec;
    spec.tiles.push_back({"T0", 0.0, 0.0, 0.0});
    spec.herds.push_back({"h0", "T0", AreaType::high_risk, size, initial_t, initial_i});
    return spec;
}

// Parameters with everything switched off; tests enable what they need.
SimParams quiet_params() {
    SimParams p;
    p.beta_c = 0.0;
    p.sigma = 0.0;
    p.env_seed_cattle = 0.0;
    p.env_seed_badger = 0.0;
    p.env_decay = 0.05;
    p.beta_env = 0.0;
    p.beta_env_badger = 0.0;
    p.test.se_t = 0.0;
    p.test.se_i = 0.0;
    p.test.sp = 1.0;
    p.test.severe_se_t = 0.0;
    p.test.severe_se_i = 0.0;
    p.test.severe_sp = 1.0;
    p.confirm_t = 0.5;
    p.confirm_i = 0.9;
    p.routine_interval_high_risk = 1000000;
    p.routine_interval_edge = 1000000;
    p.badger_initial_prevalence = 0.0;
    return p;
}

} // namespace

TEST_CASE("world spec validation catches broken configurations") {
    WorldSpec spec = single_herd_spec(10, 0, 0);
    spec.herds[0].tile = "nope";
    CHECK_THROWS_WITH_AS(spec.validate(), doctest::Contains("missing tile"), Error);

    WorldSpec dup = single_herd_spec(10, 0, 0);
    dup.herds.push_back(dup.herds[0]);
    CHECK_THROWS_WITH_AS(dup.validate(), doctest::Contains("duplicate herd"), Error);

    WorldSpec bad_init = single_herd_spec(5, 3, 3);
    CHECK_THROWS_AS(bad_init.validate(), Error);
}

TEST_CASE("init_world is deterministic and density drives badger groups") {
    WorldSpec spec;
    spec.tiles.push_back({"A", 0.0, 0.0, 4.0});
    spec.tiles.push_back({"B", 10000.0, 0.0, 2.0});
    spec.herds.push_back({"h0", "A", AreaType::high_risk, 50, 0, 0});
    SimParams p = quiet_params();
    p.seed = 5;

    const WorldState w1 = init_world(spec, p);
    const WorldState w2 = init_world(spec, p);
    CHECK(world_hash(w1) == world_hash(w2));

    SimParams p2 = p;
    p2.seed = 6;
    const WorldState w3 = init_world(spec, p2);
    CHECK(world_hash(w1) != world_hash(w3));

    // Mean group counts scale with density (Poisson).
    double mean_a = 0, mean_b = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        SimParams ps = p;
        ps.seed = s;
        const WorldState w = init_world(spec, ps);
        for (const auto& g : w.groups) {
            if (w.tile_ids[static_cast<std::size_t>(g.tile)] == "A") mean_a += 1;
            else mean_b += 1;
        }
    }
    mean_a /= 100.0;
    mean_b /= 100.0;
    CHECK(mean_a / mean_b == doctest::Approx(2.0).epsilon(0.25));

    // Zero density everywhere gives zero groups.
    WorldSpec none = single_herd_spec(10, 0, 0);
    const WorldState w0 = init_world(none, p);
    CHECK(w0.groups.empty());
}

TEST_CASE("density grid aggregates to the nearest tile") {
    WorldSpec spec;
    spec.tiles.push_back({"A", 0.0, 0.0, 0.0});
    spec.tiles.push_back({"B", 10000.0, 0.0, 0.0});
    spec.herds.push_back({"h0", "A", AreaType::high_risk, 10, 0, 0});
    spec.hex_radius_m = 6000.0;
    std::vector<DensityCell> cells = {
        {100.0, 0.0, 2.0},     // near A
        {-250.0, 400.0, 4.0},  // near A
        {9800.0, 0.0, 8.0},    // near B
        {50000.0, 0.0, 99.0},  // outside every hex
    };
    apply_density_grid(spec, cells);
    CHECK(spec.tiles[0].badger_density == doctest::Approx(3.0));
    CHECK(spec.tiles[1].badger_density == doctest::Approx(8.0));
}

TEST_CASE("environment decays geometrically with no seeding") {
    WorldSpec spec = single_herd_spec(20, 0, 0);
    SimParams p = quiet_params();
    p.env_decay = 0.03;
    WorldState w = init_world(spec, p);
    w.tiles[0].env = 5.0;
    const double factor = std::exp(-0.03);
    double expected = 5.0;
    for (int d = 0; d < 50; ++d) {
        step_day(w, p);
        expected *= factor;
        REQUIRE(w.tiles[0].env == expected);  // exact: the update is one multiply
    }
    CHECK(w.tiles[0].env == doctest::Approx(5.0 * std::exp(-0.03 * 50)).epsilon(1e-9));
}

TEST_CASE("no-transmission null keeps the state fixed") {
    WorldSpec spec = single_herd_spec(30, 0, 0);
    SimParams p = quiet_params();
    WorldState w = init_world(spec, p);
    for (int d = 0; d < 100; ++d) step_day(w, p);
    CHECK(w.herds[0].s == 30);
    CHECK(w.herds[0].t == 0);
    CHECK(w.herds[0].i == 0);
    CHECK(w.removed == 0);
    CHECK(w.episodes.empty());
    CHECK(w.tiles[0].env == 0.0);
}

TEST_CASE("closed-herd final size matches the chain-binomial oracle") {
    struct Config {
        int n;
        double beta;
        double sigma;
    };
    const int days = 60;
    const int reps = 5000;
    for (const Config c : {Config{12, 0.5, 10.0}, Config{16, 0.25, 10.0}, Config{14, 0.4, 0.08}}) {
        WorldSpec spec = single_herd_spec(c.n, 0, 1);
        SimParams p = quiet_params();
        p.beta_c = c.beta;
        p.sigma = c.sigma;
        double mean_final = 0.0;
        for (int r = 0; r < reps; ++r) {
            SimParams pr = p;
            pr.seed = static_cast<std::uint64_t>(r) * 977 + 13;
            WorldState w = init_world(spec, pr);
            for (int d = 0; d < days; ++d) step_day(w, pr);
            mean_final += static_cast<double>(c.n) - static_cast<double>(w.herds[0].s);
        }
        mean_final /= static_cast<double>(reps);
        const double oracle =
            oracles::chain_binomial_mean_final_size(c.n, 1, c.beta, c.sigma, days);
        REQUIRE(std::fabs(mean_final - oracle) / oracle < 0.02);
    }
}

TEST_CASE("herd test basics") {
    SUBCASE("all-susceptible herd with perfect specificity is clear") {
        WorldSpec spec = single_herd_spec(40, 0, 0);
        SimParams p = quiet_params();
        WorldState w = init_world(spec, p);
        const HerdTestOutcome out = run_herd_test(w, 0, p, Interpretation::standard);
        CHECK(out.clear);
        CHECK(out.reactors == 0);
        CHECK(w.herds[0].status == OtfStatus::otf);
    }
    SUBCASE("an infectious animal with perfect sensitivity is found and removed") {
        WorldSpec spec = single_herd_spec(10, 0, 1);
        SimParams p = quiet_params();
        p.test.se_i = 1.0;
        p.test.severe_se_i = 1.0;
        WorldState w = init_world(spec, p);
        const HerdTestOutcome out = run_herd_test(w, 0, p, Interpretation::standard);
        CHECK_FALSE(out.clear);
        CHECK(out.reactors == 1);
        CHECK(w.herds[0].i == 0);
        CHECK(w.removed == 1);
        CHECK(w.herds[0].status != OtfStatus::otf);
    }
    SUBCASE("herd false-positive rate matches 1 - sp^n") {
        const int n = 25;
        const double sp = 0.97;
        WorldSpec spec = single_herd_spec(n, 0, 0);
        SimParams p = quiet_params();
        p.test.sp = sp;
        p.test.severe_sp = sp;
        int not_clear = 0;
        const int reps = 10000;
        for (int r = 0; r < reps; ++r) {
            SimParams pr = p;
            pr.seed = static_cast<std::uint64_t>(r);
            WorldState w = init_world(spec, pr);
            if (!run_herd_test(w, 0, pr, Interpretation::standard).clear) ++not_clear;
        }
        const double expected = 1.0 - std::pow(sp, n);
        const double se_hat = std::sqrt(expected * (1.0 - expected) / reps);
        CHECK(std::fabs(not_clear / double(reps) - expected) < 4.0 * se_hat);
    }
}

TEST_CASE("breakdown lifecycle: suspend, short-interval retests, restore") {
    WorldSpec spec = single_herd_spec(10, 0, 1);
    SimParams p = quiet_params();
    p.test.se_i = 1.0;
    p.test.severe_se_i = 1.0;
    p.confirm_i = 1.0;
    p.routine_interval_high_risk = 30;
    p.seed = 3;
    WorldState w = init_world(spec, p);

    int breakdown_day = -1;
    for (int d = 0; d < 365; ++d) {
        step_day(w, p);
        if (breakdown_day < 0 && w.herds[0].status != OtfStatus::otf) breakdown_day = w.day - 1;
    }
    REQUIRE(breakdown_day >= 0);
    REQUIRE(w.episodes.size() == 1);
    const BreakdownRecord& ep = w.episodes[0];
    CHECK(ep.start_day == breakdown_day);
    CHECK(ep.confirmed);
    // Two consecutive clear severe tests at the 60-day cadence.
    CHECK(ep.end_day - ep.start_day == 120);
    CHECK(w.herds[0].status == OtfStatus::otf);
    CHECK(w.removed == 1);
    CHECK(w.breakdowns_by_year.at(0) == 1);
    CHECK(w.confirmed_by_year.at(0) == 1);
    CHECK(w.reactors_by_year.at(0) == 1);

    int severe_tests = 0;
    for (const auto& ev : w.tests)
        if (ev.interpretation == Interpretation::severe) ++severe_tests;
    CHECK(severe_tests == 2);
}

TEST_CASE("restricted herds never export and pre-movement tests catch infection") {
    WorldSpec spec;
    spec.tiles.push_back({"T", 0.0, 0.0, 0.0});
    spec.herds.push_back({"src", "T", AreaType::high_risk, 30, 0, 10});
    spec.herds.push_back({"dst", "T", AreaType::high_risk, 20, 0, 0});
    spec.movements.push_back({"src", "dst", 1.5, 4});

    SUBCASE("with pre-movement testing, infectious batches are intercepted") {
        SimParams p = quiet_params();
        p.test.se_i = 1.0;
        p.test.severe_se_i = 1.0;
        p.pre_movement_testing = true;
        p.seed = 9;
        WorldState w = init_world(spec, p);
        for (int d = 0; d < 60; ++d) step_day(w, p);
        // Once a batch contains an I animal it reacts, the source is suspended,
        // and no animal may leave afterwards.
        CHECK(w.herds[1].alive() == 20);
        CHECK(w.herds[0].status != OtfStatus::otf);
        bool saw_batch_test = false;
        for (const auto& ev : w.tests) saw_batch_test = saw_batch_test || !ev.whole_herd;
        CHECK(saw_batch_test);
    }
    SUBCASE("without pre-movement testing animals do move") {
        SimParams p = quiet_params();
        p.pre_movement_testing = false;
        p.seed = 9;
        WorldState w = init_world(spec, p);
        for (int d = 0; d < 60; ++d) step_day(w, p);
        CHECK(w.herds[1].alive() > 20);
        CHECK(w.herds[0].alive() + w.herds[1].alive() == 50);
    }
}

TEST_CASE("measured HSe/HSp behave as closed forms predict") {
    SUBCASE("perfect test gives perfect herd-level characteristics") {
        WorldSpec spec;
        spec.tiles.push_back({"T", 0.0, 0.0, 0.0});
        spec.herds.push_back({"hi", "T", AreaType::high_risk, 20, 5, 5});
        spec.herds.push_back({"hc", "T", AreaType::high_risk, 20, 0, 0});
        SimParams p = quiet_params();
        p.test.se_t = 1.0;
        p.test.se_i = 1.0;
        p.test.severe_se_t = 1.0;
        p.test.severe_se_i = 1.0;
        p.routine_interval_high_risk = 50;
        p.seed = 4;
        WorldState w = init_world(spec, p);
        for (int d = 0; d < 200; ++d) step_day(w, p);
        const HerdSeSp m = measure_herd_se_sp(w.tests);
        CHECK(m.hse == doctest::Approx(1.0));
        CHECK(m.hsp == doctest::Approx(1.0));
    }
    SUBCASE("fully susceptible world: HSp equals mean sp^n") {
        WorldSpec spec = single_herd_spec(10, 0, 0);
        SimParams p = quiet_params();
        p.test.sp = 0.98;
        p.test.severe_sp = 0.98;
        p.routine_interval_high_risk = 10;
        double expected_sum = 0.0;
        long long clear_count = 0, total = 0;
        for (int r = 0; r < 400; ++r) {
            SimParams pr = p;
            pr.seed = static_cast<std::uint64_t>(r);
            WorldState w = init_world(spec, pr);
            for (int d = 0; d < 300; ++d) step_day(w, pr);
            for (const auto& ev : w.tests) {
                if (!ev.whole_herd) continue;
                expected_sum += std::pow(0.98, static_cast<double>(ev.n_animals));
                clear_count += ev.clear ? 1 : 0;
                total += 1;
            }
        }
        const double expected = expected_sum / static_cast<double>(total);
        const double observed = static_cast<double>(clear_count) / static_cast<double>(total);
        const double se_hat = std::sqrt(expected * (1.0 - expected) / static_cast<double>(total));
        CHECK(std::fabs(observed - expected) < 4.0 * se_hat);
    }
    SUBCASE("raising se_i raises HSe across paired seeds") {
        WorldSpec spec;
        spec.tiles.push_back({"T", 0.0, 0.0, 0.0});
        for (int h = 0; h < 10; ++h)
            spec.herds.push_back({"h" + std::to_string(h), "T", AreaType::high_risk, 30, 2, 3});
        SimParams lo = quiet_params();
        lo.beta_c = 0.02;
        lo.sigma = 0.05;
        lo.test.se_t = 0.4;
        lo.test.severe_se_t = 0.4;
        lo.test.se_i = 0.5;
        lo.test.severe_se_i = 0.5;
        lo.routine_interval_high_risk = 60;
        SimParams hi = lo;
        hi.test.se_i = 0.9;
        hi.test.severe_se_i = 0.9;
        double mean_lo = 0, mean_hi = 0;
        for (int r = 0; r < 30; ++r) {
            lo.seed = hi.seed = static_cast<std::uint64_t>(1000 + r);
            WorldState wl = init_world(spec, lo);
            WorldState wh = init_world(spec, hi);
            for (int d = 0; d < 365; ++d) {
                step_day(wl, lo);
                step_day(wh, hi);
            }
            mean_lo += measure_herd_se_sp(wl.tests).hse;
            mean_hi += measure_herd_se_sp(wh.tests).hse;
        }
        CHECK(mean_hi / 30.0 > mean_lo / 30.0);
    }
    SUBCASE("empty trace is an error") {
        CHECK_THROWS_AS(measure_herd_se_sp({}), Error);
    }
}

TEST_CASE("conservation holds across a busy world") {
    WorldSpec spec;
    spec.tiles.push_back({"T0", 0.0, 0.0, 1.0});
    spec.tiles.push_back({"T1", 5000.0, 0.0, 2.0});
    for (int h = 0; h < 20; ++h)
        spec.herds.push_back({"h" + std::to_string(h), h % 2 ? "T0" : "T1",
                              h % 2 ? AreaType::high_risk : AreaType::edge, 40, h % 5 == 0 ? 2 : 0,
                              h % 7 == 0 ? 1 : 0});
    for (int e = 0; e < 15; ++e)
        spec.movements.push_back({"h" + std::to_string(e), "h" + std::to_string((e + 7) % 20),
                                  0.2, 3});
    SimParams p = quiet_params();
    p.beta_c = 0.05;
    p.sigma = 0.02;
    p.env_seed_cattle = 0.01;
    p.env_decay = 0.05;
    p.beta_env = 0.001;
    p.beta_env_badger = 0.001;
    p.test.se_t = 0.5;
    p.test.se_i = 0.8;
    p.test.sp = 0.995;
    p.test.severe_se_t = 0.6;
    p.test.severe_se_i = 0.9;
    p.test.severe_sp = 0.99;
    p.routine_interval_high_risk = 180;
    p.routine_interval_edge = 90;
    p.badger_initial_prevalence = 0.2;
    p.seed = 77;

    WorldState w = init_world(spec, p);
    for (int d = 0; d < 400; ++d) step_day(w, p);  // throws if conservation breaks
    long long alive = 0;
    for (const auto& h : w.herds) alive += h.alive();
    CHECK(alive + w.removed == w.initial_animals);
    CHECK(w.removed > 0);
    for (const auto& t : w.tiles) CHECK(t.env >= 0.0);
}

TEST_CASE("identical runs hash identically, different seeds differ") {
    WorldSpec spec;
    spec.tiles.push_back({"T", 0.0, 0.0, 1.0});
    for (int h = 0; h < 5; ++h)
        spec.herds.push_back({"h" + std::to_string(h), "T", AreaType::high_risk, 25, 1, 1});
    SimParams p = quiet_params();
    p.beta_c = 0.05;
    p.sigma = 0.02;
    p.test.se_t = 0.5;
    p.test.se_i = 0.8;
    p.test.severe_se_t = 0.6;
    p.test.severe_se_i = 0.9;
    p.test.sp = 0.99;
    p.test.severe_sp = 0.99;
    p.routine_interval_high_risk = 90;
    p.seed = 123;

    auto run = [&](std::uint64_t seed) {
        SimParams ps = p;
        ps.seed = seed;
        WorldState w = init_world(spec, ps);
        for (int d = 0; d < 200; ++d) step_day(w, ps);
        return world_hash(w);
    };
    CHECK(run(123) == run(123));
    CHECK(run(123) != run(124));
}

TEST_CASE("dose-response: more transmission means more infections, more sensitivity fewer undetected days") {
    WorldSpec spec;
    spec.tiles.push_back({"T", 0.0, 0.0, 0.0});
    for (int h = 0; h < 8; ++h)
        spec.herds.push_back({"h" + std::to_string(h), "T", AreaType::high_risk, 30, 1, 1});

    SimParams base = quiet_params();
    base.beta_c = 0.03;
    base.sigma = 0.02;
    base.test.se_t = 0.5;
    base.test.se_i = 0.8;
    base.test.severe_se_t = 0.6;
    base.test.severe_se_i = 0.9;
    base.test.sp = 1.0;
    base.test.severe_sp = 1.0;
    base.routine_interval_high_risk = 120;

    auto run_metrics = [&](const SimParams& p, std::uint64_t seed) {
        SimParams ps = p;
        ps.seed = seed;
        WorldState w = init_world(spec, ps);
        double undetected_days = 0.0;
        for (int d = 0; d < 365; ++d) {
            step_day(w, ps);
            for (const auto& h : w.herds) undetected_days += static_cast<double>(h.t + h.i);
        }
        long long alive_s = 0;
        for (const auto& h : w.herds) alive_s += h.s;
        const double infections = static_cast<double>(w.initial_animals) -
                                  static_cast<double>(alive_s) -
                                  0.0;  // removals were all reactors here (sp = 1)
        return std::pair<double, double>(infections, undetected_days);
    };

    SimParams hot = base;
    hot.beta_c = 0.12;
    double base_inf = 0, hot_inf = 0;
    for (int r = 0; r < 30; ++r) {
        base_inf += run_metrics(base, 500 + r).first;
        hot_inf += run_metrics(hot, 500 + r).first;
    }
    CHECK(hot_inf > base_inf);

    SimParams sharp = base;
    sharp.test.se_t = 0.9;
    sharp.test.se_i = 1.0;
    sharp.test.severe_se_t = 0.95;
    sharp.test.severe_se_i = 1.0;
    double base_days = 0, sharp_days = 0;
    for (int r = 0; r < 30; ++r) {
        base_days += run_metrics(base, 900 + r).second;
        sharp_days += run_metrics(sharp, 900 + r).second;
    }
    CHECK(sharp_days < base_days);
}

TEST_CASE("run_scenario with one replicate equals a manual run") {
    WorldSpec spec;
    spec.tiles.push_back({"T", 0.0, 0.0, 0.0});
    for (int h = 0; h < 4; ++h)
        spec.herds.push_back({"h" + std::to_string(h), "T", AreaType::high_risk, 20, 1, 1});
    SimParams p = quiet_params();
    p.beta_c = 0.04;
    p.sigma = 0.02;
    p.test.se_t = 0.5;
    p.test.se_i = 0.8;
    p.test.severe_se_t = 0.6;
    p.test.severe_se_i = 0.9;
    p.test.sp = 0.99;
    p.test.severe_sp = 0.99;
    p.routine_interval_high_risk = 100;
    p.seed = 55;

    const ScenarioReport rep = run_scenario(spec, p, 1, 1);
    SimParams manual = p;
    manual.seed = derive_seed(p.seed, "scenario-replicate", 0);
    WorldState w = init_world(spec, manual);
    for (int d = 0; d < 365; ++d) step_day(w, manual);
    const double breakdowns =
        w.breakdowns_by_year.empty() ? 0.0 : static_cast<double>(w.breakdowns_by_year[0]);
    const double reactors =
        w.reactors_by_year.empty() ? 0.0 : static_cast<double>(w.reactors_by_year[0]);
    CHECK(rep.annual_breakdowns_mean == doctest::Approx(breakdowns));
    CHECK(rep.annual_reactors_mean == doctest::Approx(reactors));
    CHECK(rep.breakdowns_lo[0] == doctest::Approx(breakdowns));
    CHECK(rep.breakdowns_hi[0] == doctest::Approx(breakdowns));
}

TEST_CASE("a blind test finds nothing") {
    WorldSpec spec;
    spec.tiles.push_back({"T", 0.0, 0.0, 0.0});
    for (int h = 0; h < 5; ++h)
        spec.herds.push_back({"h" + std::to_string(h), "T", AreaType::high_risk, 20, 2, 2});
    SimParams p = quiet_params();  // se = 0, sp = 1 exactly
    p.beta_c = 0.05;
    p.sigma = 0.02;
    p.routine_interval_high_risk = 60;
    p.seed = 31;
    const ScenarioReport rep = run_scenario(spec, p, 1, 5);
    CHECK(rep.annual_reactors_mean == 0.0);
    CHECK(rep.annual_breakdowns_mean == 0.0);
}

TEST_CASE("posterior particles steer scenario parameters") {
    WorldSpec spec;
    spec.tiles.push_back({"T", 0.0, 0.0, 0.0});
    spec.herds.push_back({"h0", "T", AreaType::high_risk, 30, 0, 3});
    SimParams p = quiet_params();
    p.routine_interval_high_risk = 30;
    p.seed = 71;
    // One particle with weight 1 forces se_i = 1.
    PosteriorParticle part;
    part.weight = 1.0;
    part.values = {{"se_i", 1.0}, {"severe_se_i", 1.0}};
    const ScenarioReport rep = run_scenario(spec, p, 1, 4, {part});
    CHECK(rep.annual_reactors_mean > 0.0);  // base se_i is 0; the particle made tests see
}

TEST_CASE("se shift equivalent for a target HSe") {
    WorldSpec spec;
    spec.tiles.push_back({"T", 0.0, 0.0, 0.0});
    for (int h = 0; h < 30; ++h)
        spec.herds.push_back({"h" + std::to_string(h), "T", AreaType::high_risk, 40,
                              h % 2 ? 2 : 0, h % 3 ? 1 : 2});
    SimParams p = quiet_params();
    p.beta_c = 0.02;
    p.sigma = 0.02;
    p.test.se_t = 0.45;
    p.test.se_i = 0.7;
    p.test.severe_se_t = 0.55;
    p.test.severe_se_i = 0.8;
    p.test.sp = 1.0;
    p.test.severe_sp = 1.0;
    p.routine_interval_high_risk = 90;
    p.seed = 77;

    SeEquivalentOptions opts;
    opts.years = 1;
    opts.n_replicates = 8;
    opts.tolerance = 0.01;
    opts.threads = 4;

    SUBCASE("fixed point: the current HSe needs no shift") {
        const ScenarioReport base = run_scenario(spec, p, 1, 8, {}, {.threads = 4});
        const SeEquivalentResult r =
            se_equivalent_for_target_hse(spec, p, base.hse_mean, opts);
        CHECK(std::fabs(r.shift) < 0.02);
        CHECK(std::fabs(r.achieved_hse - base.hse_mean) <= opts.tolerance);
    }
    SUBCASE("target 1 saturates the sensitivities") {
        const SeEquivalentResult r = se_equivalent_for_target_hse(spec, p, 0.999, opts);
        CHECK(r.achieved_hse >= 0.99);
        CHECK(r.shift + std::min(p.test.se_t, p.test.se_i) >= 0.9);
    }
    SUBCASE("bisection agrees with a grid search") {
        const ScenarioReport base = run_scenario(spec, p, 1, 8, {}, {.threads = 4});
        const double target = std::min(0.98, base.hse_mean + 0.12);
        const SeEquivalentResult r = se_equivalent_for_target_hse(spec, p, target, opts);

        double best_shift = 0.0, best_err = 1e9;
        for (int k = 0; k <= 40; ++k) {
            const double shift = 0.01 * k;
            SimParams ps = p;
            ps.test.se_t = std::min(1.0, p.test.se_t + shift);
            ps.test.se_i = std::min(1.0, p.test.se_i + shift);
            ps.test.severe_se_t = std::clamp(p.test.severe_se_t + shift, ps.test.se_t, 1.0);
            ps.test.severe_se_i = std::clamp(p.test.severe_se_i + shift, ps.test.se_i, 1.0);
            const ScenarioReport rep = run_scenario(spec, ps, 1, 8, {}, {.threads = 4});
            const double err = std::fabs(rep.hse_mean - target);
            if (err < best_err) {
                best_err = err;
                best_shift = shift;
            }
        }
        CHECK(std::fabs(r.shift - best_shift) <= 0.015);
        CHECK(std::fabs(r.achieved_hse - target) <= best_err + opts.tolerance + 1e-12);
    }
}

TEST_CASE("world and params JSON round trip") {
    const std::string world_json = R"({
      "hex_radius_m": 4000,
      "tiles": [{"id": "T0", "easting": 0, "northing": 0, "badger_density": 1.5}],
      "herds": [{"id": "h0", "tile": "T0", "area": "edge", "size": 55, "initial_i": 2}],
      "movements": []
    })";
    const WorldSpec spec = world_spec_from_json(world_json);
    CHECK(spec.herds[0].area == AreaType::edge);
    CHECK(spec.herds[0].size == 55);
    CHECK(spec.tiles[0].badger_density == doctest::Approx(1.5));

    const std::string params_json = R"({
      "beta_c": 0.01, "sigma": 0.005, "env_seed_cattle": 0.002, "env_decay": 0.04,
      "beta_env": 0.001, "beta_env_badger": 0.0005,
      "test": {"se_t": 0.5, "se_i": 0.8, "sp": 0.998,
               "severe_se_t": 0.6, "severe_se_i": 0.9, "severe_sp": 0.99},
      "confirm_t": 0.4, "confirm_i": 0.85,
      "routine_interval_high_risk": 365, "routine_interval_edge": 180
    })";
    const SimParams p = sim_params_from_json(params_json);
    CHECK(p.beta_c == doctest::Approx(0.01));
    CHECK(p.env_seed_badger == doctest::Approx(0.002));  // defaults to the cattle rate
    CHECK(p.test.severe_se_i == doctest::Approx(0.9));

    CHECK_THROWS_AS(sim_params_from_json("{\"beta_c\": -1}"), Error);
    CHECK_THROWS_AS(world_spec_from_json("{\"tiles\": [], \"herds\": []}"), Error);

    SimParams named = p;
    apply_named_param(named, "se_i", 0.95);
    CHECK(named.test.se_i == doctest::Approx(0.95));
    CHECK_THROWS_AS(apply_named_param(named, "bogus", 1.0), Error);
}

TEST_CASE("event log captures the day/event/herd/animal/detail schema") {
    testutil::TempDir tmp;
    WorldSpec spec = single_herd_spec(10, 0, 2);
    SimParams p = quiet_params();
    p.test.se_i = 1.0;
    p.test.severe_se_i = 1.0;
    p.routine_interval_high_risk = 5;
    p.seed = 2;
    WorldState w = init_world(spec, p, true);
    for (int d = 0; d < 20; ++d) step_day(w, p);
    REQUIRE(!w.events.empty());
    write_event_log(w, tmp.file("events.csv"));
    const std::string text = testutil::slurp(tmp.file("events.csv"));
    CHECK(text.rfind("day,event,herd,animal,detail\n", 0) == 0);
    CHECK(text.find("herd_test") != std::string::npos);
    CHECK(text.find("reactor_removed") != std::string::npos);
}
