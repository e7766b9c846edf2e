#include "herdgate/ibm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <numeric>

#include <json.hpp>

#include "herdgate/csv.hpp"
#include "herdgate/parallel.hpp"
#include "herdgate/stats.hpp"

namespace herdgate::ibm {

using nlohmann::json;

void TestCharacteristics::validate() const {
    auto prob = [](double p, const char* name) {
        require(p >= 0.0 && p <= 1.0, std::string("test characteristics: ") + name + " out of [0,1]");
    };
    prob(se_t, "se_t");
    prob(se_i, "se_i");
    prob(sp, "sp");
    prob(severe_se_t, "severe_se_t");
    prob(severe_se_i, "severe_se_i");
    prob(severe_sp, "severe_sp");
    require(severe_se_t >= se_t && severe_se_i >= se_i,
            "test characteristics: severe sensitivity must be >= standard");
    require(severe_sp <= sp, "test characteristics: severe specificity must be <= standard");
}

void SimParams::validate() const {
    auto rate = [](double r, const char* name) {
        require(r >= 0.0 && std::isfinite(r), std::string("sim params: ") + name + " must be >= 0");
    };
    rate(beta_c, "beta_c");
    rate(sigma, "sigma");
    rate(env_seed_cattle, "env_seed_cattle");
    rate(env_seed_badger, "env_seed_badger");
    rate(env_decay, "env_decay");
    rate(beta_env, "beta_env");
    rate(beta_env_badger, "beta_env_badger");
    test.validate();
    require(confirm_t >= 0.0 && confirm_t <= 1.0, "sim params: confirm_t out of [0,1]");
    require(confirm_i >= 0.0 && confirm_i <= 1.0, "sim params: confirm_i out of [0,1]");
    require(routine_interval_high_risk >= 1 && routine_interval_edge >= 1,
            "sim params: routine intervals must be >= 1 day");
    require(short_interval_days >= 1, "sim params: short_interval_days must be >= 1");
    require(clear_tests_to_restore >= 1, "sim params: clear_tests_to_restore must be >= 1");
    require(badger_group_size >= 1, "sim params: badger_group_size must be >= 1");
    require(badger_initial_prevalence >= 0.0 && badger_initial_prevalence <= 1.0,
            "sim params: badger_initial_prevalence out of [0,1]");
}

SimParams sim_params_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(std::string("sim params: invalid JSON: ") + e.what());
    }
    SimParams p;
    auto num = [&](const json& obj, const char* key, double& into) {
        if (obj.contains(key)) into = obj.at(key).get<double>();
    };
    auto integer = [&](const json& obj, const char* key, int& into) {
        if (obj.contains(key)) into = obj.at(key).get<int>();
    };
    try {
        num(j, "beta_c", p.beta_c);
        num(j, "sigma", p.sigma);
        num(j, "env_seed_cattle", p.env_seed_cattle);
        p.env_seed_badger = p.env_seed_cattle;  // defaults to the cattle seeding rate
        num(j, "env_seed_badger", p.env_seed_badger);
        num(j, "env_decay", p.env_decay);
        num(j, "beta_env", p.beta_env);
        num(j, "beta_env_badger", p.beta_env_badger);
        if (j.contains("test")) {
            const auto& t = j.at("test");
            num(t, "se_t", p.test.se_t);
            num(t, "se_i", p.test.se_i);
            num(t, "sp", p.test.sp);
            p.test.severe_se_t = std::max(p.test.severe_se_t, p.test.se_t);
            p.test.severe_se_i = std::max(p.test.severe_se_i, p.test.se_i);
            p.test.severe_sp = std::min(p.test.severe_sp, p.test.sp);
            num(t, "severe_se_t", p.test.severe_se_t);
            num(t, "severe_se_i", p.test.severe_se_i);
            num(t, "severe_sp", p.test.severe_sp);
        }
        num(j, "confirm_t", p.confirm_t);
        num(j, "confirm_i", p.confirm_i);
        integer(j, "routine_interval_high_risk", p.routine_interval_high_risk);
        integer(j, "routine_interval_edge", p.routine_interval_edge);
        integer(j, "short_interval_days", p.short_interval_days);
        integer(j, "clear_tests_to_restore", p.clear_tests_to_restore);
        if (j.contains("pre_movement_testing"))
            p.pre_movement_testing = j.at("pre_movement_testing").get<bool>();
        integer(j, "badger_group_size", p.badger_group_size);
        num(j, "badger_initial_prevalence", p.badger_initial_prevalence);
        if (j.contains("seed")) p.seed = j.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw Error(std::string("sim params: ") + e.what());
    }
    p.validate();
    return p;
}

const std::vector<std::string>& fittable_param_names() {
    static const std::vector<std::string> names = {
        "beta_c", "sigma", "env_seed_cattle", "env_seed_badger", "env_decay",
        "beta_env", "beta_env_badger", "se_t", "se_i", "sp",
        "severe_se_t", "severe_se_i", "severe_sp", "confirm_t", "confirm_i",
        "badger_initial_prevalence"};
    return names;
}

void apply_named_param(SimParams& params, const std::string& name, double value) {
    if (name == "beta_c") params.beta_c = value;
    else if (name == "sigma") params.sigma = value;
    else if (name == "env_seed_cattle") params.env_seed_cattle = value;
    else if (name == "env_seed_badger") params.env_seed_badger = value;
    else if (name == "env_decay") params.env_decay = value;
    else if (name == "beta_env") params.beta_env = value;
    else if (name == "beta_env_badger") params.beta_env_badger = value;
    else if (name == "se_t") params.test.se_t = value;
    else if (name == "se_i") params.test.se_i = value;
    else if (name == "sp") params.test.sp = value;
    else if (name == "severe_se_t") params.test.severe_se_t = value;
    else if (name == "severe_se_i") params.test.severe_se_i = value;
    else if (name == "severe_sp") params.test.severe_sp = value;
    else if (name == "confirm_t") params.confirm_t = value;
    else if (name == "confirm_i") params.confirm_i = value;
    else if (name == "badger_initial_prevalence") params.badger_initial_prevalence = value;
    else throw Error("unknown simulator parameter '" + name + "'");
}

void WorldSpec::validate() const {
    require(!tiles.empty(), "world spec: no tiles");
    require(!herds.empty(), "world spec: no herds");
    std::map<std::string, int> tile_idx;
    for (const auto& t : tiles) {
        require(!t.id.empty(), "world spec: tile with empty id");
        require(tile_idx.emplace(t.id, 1).second, "world spec: duplicate tile '" + t.id + "'");
        require(t.badger_density >= 0.0, "world spec: negative badger density on '" + t.id + "'");
    }
    std::map<std::string, int> herd_idx;
    for (const auto& h : herds) {
        require(!h.id.empty(), "world spec: herd with empty id");
        require(herd_idx.emplace(h.id, 1).second, "world spec: duplicate herd '" + h.id + "'");
        require(tile_idx.count(h.tile) > 0,
                "world spec: herd '" + h.id + "' is on missing tile '" + h.tile + "'");
        require(h.size >= 0 && h.initial_t >= 0 && h.initial_i >= 0 &&
                    h.initial_t + h.initial_i <= h.size,
                "world spec: herd '" + h.id + "' has inconsistent initial states");
    }
    for (const auto& e : movements) {
        require(herd_idx.count(e.src) > 0 && herd_idx.count(e.dst) > 0,
                "world spec: movement references unknown herd");
        require(e.src != e.dst, "world spec: self-movement for herd '" + e.src + "'");
        require(e.batches_per_day >= 0.0 && e.batch_size >= 1, "world spec: bad movement edge");
    }
}

WorldSpec world_spec_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(std::string("world spec: invalid JSON: ") + e.what());
    }
    WorldSpec spec;
    try {
        if (j.contains("hex_radius_m")) spec.hex_radius_m = j.at("hex_radius_m").get<double>();
        for (const auto& tj : j.at("tiles")) {
            TileSpec t;
            t.id = tj.at("id").get<std::string>();
            t.easting = tj.value("easting", 0.0);
            t.northing = tj.value("northing", 0.0);
            t.badger_density = tj.value("badger_density", 0.0);
            spec.tiles.push_back(std::move(t));
        }
        for (const auto& hj : j.at("herds")) {
            HerdSpec h;
            h.id = hj.at("id").get<std::string>();
            h.tile = hj.at("tile").get<std::string>();
            const std::string area = hj.value("area", "high_risk");
            if (area == "high_risk") h.area = AreaType::high_risk;
            else if (area == "edge") h.area = AreaType::edge;
            else throw Error("world spec: herd '" + h.id + "' has unknown area '" + area + "'");
            h.size = hj.at("size").get<int>();
            h.initial_t = hj.value("initial_t", 0);
            h.initial_i = hj.value("initial_i", 0);
            spec.herds.push_back(std::move(h));
        }
        if (j.contains("movements"))
            for (const auto& mj : j.at("movements")) {
                MovementEdgeSpec e;
                e.src = mj.at("src").get<std::string>();
                e.dst = mj.at("dst").get<std::string>();
                e.batches_per_day = mj.at("batches_per_day").get<double>();
                e.batch_size = mj.value("batch_size", 1);
                spec.movements.push_back(std::move(e));
            }
    } catch (const json::exception& e) {
        throw Error(std::string("world spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

std::vector<DensityCell> load_density_grid(const std::string& path) {
    csv::Table t = csv::read_file(path);
    require(t.header == std::vector<std::string>({"easting", "northing", "density"}),
            "'" + path + "': density grid schema mismatch");
    std::vector<DensityCell> cells;
    cells.reserve(t.rows.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const std::string ctx = "'" + path + "' row " + std::to_string(i + 2);
        require(t.rows[i].size() == 3, ctx + ": wrong cell count");
        DensityCell c{csv::parse_double(t.rows[i][0], ctx),
                      csv::parse_double(t.rows[i][1], ctx),
                      csv::parse_double(t.rows[i][2], ctx)};
        require(c.density >= 0.0, ctx + ": negative density");
        cells.push_back(c);
    }
    return cells;
}

void apply_density_grid(WorldSpec& spec, const std::vector<DensityCell>& cells) {
    require(!spec.tiles.empty(), "apply_density_grid: no tiles");
    std::vector<double> sum(spec.tiles.size(), 0.0);
    std::vector<long long> count(spec.tiles.size(), 0);
    for (const auto& cell : cells) {
        std::size_t best = 0;
        double best_d2 = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < spec.tiles.size(); ++t) {
            const double dx = cell.easting - spec.tiles[t].easting;
            const double dy = cell.northing - spec.tiles[t].northing;
            const double d2 = dx * dx + dy * dy;
            if (d2 < best_d2) {
                best_d2 = d2;
                best = t;
            }
        }
        if (best_d2 <= spec.hex_radius_m * spec.hex_radius_m) {
            sum[best] += cell.density;
            count[best] += 1;
        }
    }
    for (std::size_t t = 0; t < spec.tiles.size(); ++t)
        if (count[t] > 0) spec.tiles[t].badger_density = sum[t] / static_cast<double>(count[t]);
}

void WorldState::bump_year(std::vector<long long>& v, int y, long long amount) {
    if (static_cast<int>(v.size()) <= y) v.resize(static_cast<std::size_t>(y) + 1, 0);
    v[static_cast<std::size_t>(y)] += amount;
}

WorldState init_world(const WorldSpec& spec, const SimParams& params, bool log_events) {
    spec.validate();
    params.validate();
    WorldState w;
    w.log_events = log_events;
    w.rng = Rng(derive_seed(params.seed, "world"));

    std::map<std::string, std::int32_t> tile_idx;
    for (const auto& t : spec.tiles) {
        tile_idx[t.id] = static_cast<std::int32_t>(w.tiles.size());
        w.tile_ids.push_back(t.id);
        Tile tile;
        tile.badger_density = t.badger_density;
        w.tiles.push_back(tile);
    }
    for (const auto& h : spec.herds) {
        Herd herd;
        herd.tile = tile_idx.at(h.tile);
        herd.area = h.area;
        herd.s = h.size - h.initial_t - h.initial_i;
        herd.t = h.initial_t;
        herd.i = h.initial_i;
        w.herd_ids.push_back(h.id);
        w.herds.push_back(herd);
        w.initial_animals += h.size;
    }
    std::map<std::string, std::int32_t> herd_idx;
    for (std::size_t i = 0; i < w.herd_ids.size(); ++i)
        herd_idx[w.herd_ids[i]] = static_cast<std::int32_t>(i);
    for (const auto& e : spec.movements)
        w.edges.push_back({herd_idx.at(e.src), herd_idx.at(e.dst), e.batches_per_day, e.batch_size});

    // Badger groups per tile, Poisson in the tile's density.
    for (std::size_t t = 0; t < w.tiles.size(); ++t) {
        const long long n_groups = w.rng.poisson(w.tiles[t].badger_density);
        for (long long g = 0; g < n_groups; ++g) {
            BadgerGroup group;
            group.tile = static_cast<std::int32_t>(t);
            group.s = params.badger_group_size;
            group.i = 0;
            if (params.badger_initial_prevalence > 0.0) {
                group.i = w.rng.binomial(group.s, params.badger_initial_prevalence);
                group.s -= group.i;
            }
            w.groups.push_back(group);
        }
    }

    // Stagger routine tests across the interval.
    for (std::size_t h = 0; h < w.herds.size(); ++h) {
        const int interval = w.herds[h].area == AreaType::high_risk
                                 ? params.routine_interval_high_risk
                                 : params.routine_interval_edge;
        w.herds[h].next_routine_day = static_cast<int>(w.rng.below(static_cast<std::uint64_t>(interval)));
    }
    return w;
}

namespace {

void log_event(WorldState& w, const std::string& type, std::int32_t herd,
               const std::string& animal, const std::string& detail) {
    if (!w.log_events) return;
    w.events.push_back({w.day, type, herd >= 0 ? w.herd_ids[static_cast<std::size_t>(herd)] : "",
                        animal, detail});
}

// Shared breakdown bookkeeping for any test with at least one reactor.
void apply_not_clear(WorldState& w, std::int32_t herd_idx, const SimParams& params,
                     long long confirmed) {
    Herd& h = w.herds[static_cast<std::size_t>(herd_idx)];
    if (h.status == OtfStatus::otf) {
        h.status = OtfStatus::suspended;
        h.episode_start = w.day;
        h.episode_confirmed = false;
        w.bump_year(w.breakdowns_by_year, w.year());
        log_event(w, "breakdown_start", herd_idx, "", "");
    }
    h.consecutive_clear = 0;
    h.next_si_day = w.day + params.short_interval_days;
    if (confirmed > 0 && !h.episode_confirmed) {
        h.episode_confirmed = true;
        h.status = OtfStatus::withdrawn;
        w.bump_year(w.confirmed_by_year, h.episode_start / 365);
        log_event(w, "breakdown_confirmed", herd_idx, "", "");
    }
}

void maybe_restore(WorldState& w, std::int32_t herd_idx, const SimParams& params) {
    Herd& h = w.herds[static_cast<std::size_t>(herd_idx)];
    if (h.consecutive_clear < params.clear_tests_to_restore) return;
    BreakdownRecord rec;
    rec.herd = herd_idx;
    rec.start_day = h.episode_start;
    rec.end_day = w.day;
    rec.confirmed = h.episode_confirmed;
    w.episodes.push_back(rec);
    h.status = OtfStatus::otf;
    h.episode_start = -1;
    h.episode_confirmed = false;
    h.consecutive_clear = 0;
    h.next_si_day = -1;
    const int interval = h.area == AreaType::high_risk ? params.routine_interval_high_risk
                                                       : params.routine_interval_edge;
    h.next_routine_day = w.day + interval;
    log_event(w, "otf_restored", herd_idx, "", "");
}

struct ReactorDraw {
    long long from_s = 0, from_t = 0, from_i = 0;
    long long total() const { return from_s + from_t + from_i; }
};

ReactorDraw draw_reactors(Rng& rng, long long s, long long t, long long i,
                          const TestCharacteristics& chars, Interpretation interp) {
    ReactorDraw r;
    r.from_s = rng.binomial(s, 1.0 - chars.spec(interp));
    r.from_t = rng.binomial(t, chars.sens_t(interp));
    r.from_i = rng.binomial(i, chars.sens_i(interp));
    return r;
}

void remove_reactors(WorldState& w, std::int32_t herd_idx, const ReactorDraw& r) {
    Herd& h = w.herds[static_cast<std::size_t>(herd_idx)];
    h.s -= r.from_s;
    h.t -= r.from_t;
    h.i -= r.from_i;
    w.removed += r.total();
    w.bump_year(w.reactors_by_year, w.year(), r.total());
    if (w.log_events)
        for (long long k = 0; k < r.total(); ++k)
            log_event(w, "reactor_removed", herd_idx, "a" + std::to_string(++w.animal_counter), "");
}

} // namespace

HerdTestOutcome run_herd_test(WorldState& w, std::int32_t herd_idx, const SimParams& params,
                              Interpretation interp) {
    require(herd_idx >= 0 && herd_idx < static_cast<std::int32_t>(w.herds.size()),
            "run_herd_test: herd out of range");
    Herd& h = w.herds[static_cast<std::size_t>(herd_idx)];

    TestEventRecord ev;
    ev.day = w.day;
    ev.herd = herd_idx;
    ev.interpretation = interp;
    ev.whole_herd = true;
    ev.truly_infected = (h.t + h.i) > 0;
    ev.n_animals = h.alive();

    const ReactorDraw r = draw_reactors(w.rng, h.s, h.t, h.i, params.test, interp);
    long long confirmed = 0;
    if (r.total() > 0) {
        confirmed = w.rng.binomial(r.from_t, params.confirm_t) +
                    w.rng.binomial(r.from_i, params.confirm_i);
        remove_reactors(w, herd_idx, r);
    }

    HerdTestOutcome out;
    out.reactors = r.total();
    out.confirmed = confirmed;
    out.clear = r.total() == 0;
    ev.clear = out.clear;
    ev.reactors = out.reactors;
    ev.confirmed = confirmed;
    w.tests.push_back(ev);
    log_event(w, "herd_test", herd_idx, "",
              std::string(out.clear ? "clear" : "not_clear") + ";reactors=" +
                  std::to_string(out.reactors) + ";confirmed=" + std::to_string(confirmed) +
                  ";interp=" + (interp == Interpretation::severe ? "severe" : "standard"));

    if (!out.clear) {
        apply_not_clear(w, herd_idx, params, confirmed);
    } else if (h.restricted()) {
        h.consecutive_clear += 1;
        maybe_restore(w, herd_idx, params);
        Herd& after = w.herds[static_cast<std::size_t>(herd_idx)];
        if (after.restricted()) after.next_si_day = w.day + params.short_interval_days;
    }
    return out;
}

void step_day(WorldState& w, const SimParams& params) {
    const std::size_t n_herds = w.herds.size();

    // (i)+(ii) within-herd transitions from start-of-day states.
    const double p_prog = 1.0 - std::exp(-params.sigma);
    for (std::size_t hi = 0; hi < n_herds; ++hi) {
        Herd& h = w.herds[hi];
        const long long n = h.alive();
        if (n == 0) continue;
        const double env = w.tiles[static_cast<std::size_t>(h.tile)].env;
        const double hazard =
            params.beta_c * static_cast<double>(h.i) / static_cast<double>(n) +
            params.beta_env * env;
        const long long new_t = hazard > 0.0 ? w.rng.binomial(h.s, 1.0 - std::exp(-hazard)) : 0;
        const long long progressed = w.rng.binomial(h.t, p_prog);
        h.s -= new_t;
        h.t += new_t - progressed;
        h.i += progressed;
        if (new_t > 0) log_event(w, "cattle_infected", static_cast<std::int32_t>(hi), "",
                                 "n=" + std::to_string(new_t));
    }

    // (iii) environment: exponential decay plus seeding by infectious cattle
    // and infected badgers resident on the tile.
    {
        std::vector<double> cattle_i(w.tiles.size(), 0.0), badger_i(w.tiles.size(), 0.0);
        for (const Herd& h : w.herds)
            cattle_i[static_cast<std::size_t>(h.tile)] += static_cast<double>(h.i);
        for (const BadgerGroup& g : w.groups)
            badger_i[static_cast<std::size_t>(g.tile)] += static_cast<double>(g.i);
        const double decay = std::exp(-params.env_decay);
        for (std::size_t t = 0; t < w.tiles.size(); ++t) {
            w.tiles[t].env = w.tiles[t].env * decay + params.env_seed_cattle * cattle_i[t] +
                             params.env_seed_badger * badger_i[t];
        }
    }

    // (iv) badger exposure, uniform within the tile.
    for (BadgerGroup& g : w.groups) {
        if (g.s == 0) continue;
        const double env = w.tiles[static_cast<std::size_t>(g.tile)].env;
        if (env <= 0.0) continue;
        const long long inf = w.rng.binomial(g.s, 1.0 - std::exp(-params.beta_env_badger * env));
        g.s -= inf;
        g.i += inf;
    }

    // (v) movements; restricted herds never export.
    for (const auto& edge : w.edges) {
        const long long batches = w.rng.poisson(edge.rate);
        for (long long b = 0; b < batches; ++b) {
            Herd& src = w.herds[static_cast<std::size_t>(edge.src)];
            if (src.restricted()) {
                log_event(w, "movement_blocked", edge.src, "", "restricted");
                continue;
            }
            const long long avail = src.alive();
            if (avail == 0) continue;
            const long long n_move = std::min<long long>(edge.batch_size, avail);
            // Batch composition drawn without replacement.
            long long rs = src.s, rt = src.t, ri = src.i;
            long long ms = 0, mt = 0, mi = 0;
            for (long long k = 0; k < n_move; ++k) {
                const std::uint64_t u = w.rng.below(static_cast<std::uint64_t>(rs + rt + ri));
                if (u < static_cast<std::uint64_t>(rs)) {
                    ++ms; --rs;
                } else if (u < static_cast<std::uint64_t>(rs + rt)) {
                    ++mt; --rt;
                } else {
                    ++mi; --ri;
                }
            }
            if (params.pre_movement_testing) {
                TestEventRecord ev;
                ev.day = w.day;
                ev.herd = edge.src;
                ev.interpretation = Interpretation::standard;
                ev.whole_herd = false;
                ev.truly_infected = (mt + mi) > 0;
                ev.n_animals = n_move;
                const ReactorDraw r =
                    draw_reactors(w.rng, ms, mt, mi, params.test, Interpretation::standard);
                if (r.total() > 0) {
                    const long long confirmed = w.rng.binomial(r.from_t, params.confirm_t) +
                                                w.rng.binomial(r.from_i, params.confirm_i);
                    remove_reactors(w, edge.src, r);
                    ev.clear = false;
                    ev.reactors = r.total();
                    ev.confirmed = confirmed;
                    w.tests.push_back(ev);
                    log_event(w, "pre_movement_test", edge.src, "",
                              "not_clear;reactors=" + std::to_string(r.total()));
                    apply_not_clear(w, edge.src, params, confirmed);
                    continue;  // movement cancelled
                }
                ev.clear = true;
                w.tests.push_back(ev);
                log_event(w, "pre_movement_test", edge.src, "", "clear");
            }
            src.s -= ms;
            src.t -= mt;
            src.i -= mi;
            Herd& dst = w.herds[static_cast<std::size_t>(edge.dst)];
            dst.s += ms;
            dst.t += mt;
            dst.i += mi;
            log_event(w, "movement", edge.src, "",
                      "to=" + w.herd_ids[static_cast<std::size_t>(edge.dst)] + ";n=" +
                          std::to_string(n_move));
        }
    }

    // (vi) statutory tests.
    for (std::size_t hi = 0; hi < n_herds; ++hi) {
        Herd& h = w.herds[hi];
        if (!h.restricted() && w.day == h.next_routine_day) {
            run_herd_test(w, static_cast<std::int32_t>(hi), params, Interpretation::standard);
            Herd& after = w.herds[hi];
            if (!after.restricted()) {
                const int interval = after.area == AreaType::high_risk
                                         ? params.routine_interval_high_risk
                                         : params.routine_interval_edge;
                after.next_routine_day = w.day + interval;
            }
        } else if (h.restricted() && w.day == h.next_si_day) {
            run_herd_test(w, static_cast<std::int32_t>(hi), params, Interpretation::severe);
        }
    }

    // Conservation: every animal is alive in some herd or in the removed ledger.
    long long alive = 0;
    for (const Herd& h : w.herds) alive += h.alive();
    require(alive + w.removed == w.initial_animals, "conservation violated on day " +
                                                        std::to_string(w.day));
    w.day += 1;
}

std::uint64_t world_hash(const WorldState& w) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t v) {
        h ^= v;
        h *= 0x100000001b3ULL;
    };
    auto mix_double = [&](double d) {
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(d));
        std::memcpy(&bits, &d, sizeof(bits));
        mix(bits);
    };
    mix(static_cast<std::uint64_t>(w.day));
    mix(static_cast<std::uint64_t>(w.removed));
    for (const Herd& herd : w.herds) {
        mix(static_cast<std::uint64_t>(herd.s));
        mix(static_cast<std::uint64_t>(herd.t));
        mix(static_cast<std::uint64_t>(herd.i));
        mix(static_cast<std::uint64_t>(herd.status));
        mix(static_cast<std::uint64_t>(static_cast<std::int64_t>(herd.next_routine_day)));
        mix(static_cast<std::uint64_t>(static_cast<std::int64_t>(herd.next_si_day)));
    }
    for (const Tile& t : w.tiles) mix_double(t.env);
    for (const BadgerGroup& g : w.groups) {
        mix(static_cast<std::uint64_t>(g.s));
        mix(static_cast<std::uint64_t>(g.i));
    }
    for (const TestEventRecord& ev : w.tests) {
        mix(static_cast<std::uint64_t>(ev.day));
        mix(static_cast<std::uint64_t>(ev.herd));
        mix(static_cast<std::uint64_t>(ev.reactors));
        mix(static_cast<std::uint64_t>(ev.clear ? 1 : 0));
    }
    return h;
}

HerdSeSp measure_herd_se_sp(const std::vector<TestEventRecord>& tests) {
    long long infected = 0, infected_not_clear = 0, clean = 0, clean_clear = 0;
    for (const auto& ev : tests) {
        if (!ev.whole_herd) continue;
        if (ev.truly_infected) {
            ++infected;
            if (!ev.clear) ++infected_not_clear;
        } else {
            ++clean;
            if (ev.clear) ++clean_clear;
        }
    }
    require(infected + clean > 0, "measure_herd_se_sp: no whole-herd tests in trace");
    HerdSeSp out;
    out.infected_tests = infected;
    out.clean_tests = clean;
    out.hse = infected > 0 ? static_cast<double>(infected_not_clear) / static_cast<double>(infected)
                           : 0.0;
    out.hsp = clean > 0 ? static_cast<double>(clean_clear) / static_cast<double>(clean) : 0.0;
    return out;
}

namespace {

SimParams params_for_replicate(const SimParams& base,
                               const std::vector<PosteriorParticle>& particles,
                               std::uint64_t replicate_seed) {
    SimParams p = base;
    if (!particles.empty()) {
        Rng rng(derive_seed(replicate_seed, "posterior-draw"));
        double total = 0.0;
        for (const auto& part : particles) total += part.weight;
        require(total > 0.0, "run_scenario: posterior weights sum to zero");
        double u = rng.uniform01() * total;
        std::size_t pick = particles.size() - 1;
        for (std::size_t i = 0; i < particles.size(); ++i) {
            u -= particles[i].weight;
            if (u <= 0.0) {
                pick = i;
                break;
            }
        }
        for (const auto& [name, value] : particles[pick].values) apply_named_param(p, name, value);
        p.test.reconcile_severe();
    }
    p.seed = replicate_seed;
    return p;
}

} // namespace

ScenarioReport run_scenario(const WorldSpec& spec, const SimParams& params, int years,
                            int n_replicates, const std::vector<PosteriorParticle>& particles,
                            const ScenarioOptions& opts) {
    require(years >= 1, "run_scenario: years must be >= 1");
    require(n_replicates >= 1, "run_scenario: n_replicates must be >= 1");
    spec.validate();
    params.validate();

    struct PerRep {
        std::vector<long long> breakdowns, confirmed, reactors;
        ReplicateSummary summary;
    };
    std::vector<PerRep> reps(static_cast<std::size_t>(n_replicates));

    parallel_for(static_cast<std::size_t>(n_replicates), opts.threads, [&](std::size_t r) {
        const std::uint64_t rep_seed = derive_seed(params.seed, "scenario-replicate", r);
        const SimParams rep_params = params_for_replicate(params, particles, rep_seed);
        WorldState w = init_world(spec, rep_params, opts.log_events && r == 0);
        const int days = years * 365;
        for (int d = 0; d < days; ++d) step_day(w, rep_params);

        PerRep& out = reps[r];
        auto fill = [&](const std::vector<long long>& src, std::vector<long long>& dst) {
            dst.assign(static_cast<std::size_t>(years), 0);
            for (std::size_t y = 0; y < dst.size() && y < src.size(); ++y) dst[y] = src[y];
        };
        fill(w.breakdowns_by_year, out.breakdowns);
        fill(w.confirmed_by_year, out.confirmed);
        fill(w.reactors_by_year, out.reactors);
        auto annual_mean = [&](const std::vector<long long>& v) {
            long long s = 0;
            for (long long x : v) s += x;
            return static_cast<double>(s) / static_cast<double>(years);
        };
        out.summary.annual_breakdowns = annual_mean(out.breakdowns);
        out.summary.annual_confirmed = annual_mean(out.confirmed);
        out.summary.annual_reactors = annual_mean(out.reactors);
        double dur_sum = 0.0;
        for (const auto& ep : w.episodes) dur_sum += static_cast<double>(ep.end_day - ep.start_day);
        out.summary.mean_breakdown_duration =
            w.episodes.empty() ? 0.0 : dur_sum / static_cast<double>(w.episodes.size());
        const HerdSeSp sesp = measure_herd_se_sp(w.tests);
        out.summary.hse = sesp.hse;
        out.summary.hsp = sesp.hsp;
        out.summary.infected_tests = sesp.infected_tests;
        out.summary.clean_tests = sesp.clean_tests;
    });

    ScenarioReport report;
    report.years = years;
    report.n_replicates = n_replicates;
    for (int y = 0; y < years; ++y) {
        auto collect = [&](auto member) {
            std::vector<double> v;
            for (const auto& rep : reps)
                v.push_back(static_cast<double>((rep.*member)[static_cast<std::size_t>(y)]));
            return v;
        };
        const auto b = collect(&PerRep::breakdowns);
        const auto c = collect(&PerRep::confirmed);
        const auto x = collect(&PerRep::reactors);
        report.breakdowns_mean.push_back(stats::mean(b));
        report.breakdowns_lo.push_back(stats::quantile(b, 0.025));
        report.breakdowns_hi.push_back(stats::quantile(b, 0.975));
        report.confirmed_mean.push_back(stats::mean(c));
        report.confirmed_lo.push_back(stats::quantile(c, 0.025));
        report.confirmed_hi.push_back(stats::quantile(c, 0.975));
        report.reactors_mean.push_back(stats::mean(x));
        report.reactors_lo.push_back(stats::quantile(x, 0.025));
        report.reactors_hi.push_back(stats::quantile(x, 0.975));
    }
    double hse_inf = 0, hse_n = 0, hsp_inf = 0, hsp_n = 0;
    for (const auto& rep : reps) {
        report.annual_breakdowns_mean += rep.summary.annual_breakdowns;
        report.annual_confirmed_mean += rep.summary.annual_confirmed;
        report.annual_reactors_mean += rep.summary.annual_reactors;
        report.mean_breakdown_duration += rep.summary.mean_breakdown_duration;
        hse_inf += rep.summary.hse * static_cast<double>(rep.summary.infected_tests);
        hse_n += static_cast<double>(rep.summary.infected_tests);
        hsp_inf += rep.summary.hsp * static_cast<double>(rep.summary.clean_tests);
        hsp_n += static_cast<double>(rep.summary.clean_tests);
        report.replicates.push_back(rep.summary);
    }
    const double nrep = static_cast<double>(n_replicates);
    report.annual_breakdowns_mean /= nrep;
    report.annual_confirmed_mean /= nrep;
    report.annual_reactors_mean /= nrep;
    report.mean_breakdown_duration /= nrep;
    report.hse_mean = hse_n > 0 ? hse_inf / hse_n : 0.0;
    report.hsp_mean = hsp_n > 0 ? hsp_inf / hsp_n : 0.0;
    return report;
}

SeEquivalentResult se_equivalent_for_target_hse(const WorldSpec& spec, const SimParams& params,
                                                double target_hse,
                                                const SeEquivalentOptions& opts) {
    require(target_hse > 0.0 && target_hse < 1.0, "se_equivalent: target must be in (0,1)");

    auto hse_at = [&](double shift) {
        SimParams p = params;
        p.test.se_t = std::clamp(params.test.se_t + shift, 0.0, 1.0);
        p.test.se_i = std::clamp(params.test.se_i + shift, 0.0, 1.0);
        p.test.severe_se_t = std::clamp(params.test.severe_se_t + shift, p.test.se_t, 1.0);
        p.test.severe_se_i = std::clamp(params.test.severe_se_i + shift, p.test.se_i, 1.0);
        // Common random numbers: the replicate seeds do not depend on the shift.
        ScenarioReport rep = run_scenario(spec, p, opts.years, opts.n_replicates, {},
                                          {.threads = opts.threads});
        return std::pair<double, double>(rep.hse_mean, rep.hsp_mean);
    };

    SeEquivalentResult out;
    const auto [base_hse, base_hsp] = hse_at(0.0);
    out.baseline_hse = base_hse;

    double lo = -std::min(params.test.se_t, params.test.se_i);
    double hi = 1.0;
    const auto [hse_floor, hsp_floor] = hse_at(lo);
    const auto [hse_cap, hsp_cap] = hse_at(hi);
    (void)hsp_floor;
    (void)hsp_cap;
    require(target_hse <= hse_cap + opts.tolerance,
            "se_equivalent: target HSe unreachable even with sensitivity saturated at 1");
    require(target_hse >= hse_floor - opts.tolerance,
            "se_equivalent: target HSe below the floor of the sensitivity range");

    double best_shift = 0.0, best_hse = base_hse, best_hsp = base_hsp;
    if (std::fabs(best_hse - target_hse) > opts.tolerance) {
        for (int it = 0; it < opts.max_iterations; ++it) {
            const double mid = 0.5 * (lo + hi);
            const auto [hse_mid, hsp_mid] = hse_at(mid);
            if (std::fabs(hse_mid - target_hse) < std::fabs(best_hse - target_hse)) {
                best_shift = mid;
                best_hse = hse_mid;
                best_hsp = hsp_mid;
            }
            if (std::fabs(hse_mid - target_hse) <= opts.tolerance || hi - lo < 1e-4) break;
            (hse_mid < target_hse ? lo : hi) = mid;
        }
    }
    out.shift = best_shift;
    out.achieved_hse = best_hse;
    out.achieved_hsp = best_hsp;
    const double base_mean_se = 0.5 * (params.test.se_t + params.test.se_i);
    out.relative_change = base_mean_se > 0.0 ? best_shift / base_mean_se : 0.0;
    return out;
}

void write_event_log(const WorldState& world, const std::string& path) {
    csv::Writer w(path);
    w.row({"day", "event", "herd", "animal", "detail"});
    for (const auto& e : world.events)
        w.row({csv::format_int(e.day), e.type, e.herd, e.animal, e.detail});
    w.close();
}

} // namespace herdgate::ibm
