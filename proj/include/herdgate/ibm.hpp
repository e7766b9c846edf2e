#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "herdgate/error.hpp"
#include "herdgate/rng.hpp"

namespace herdgate::ibm {

enum class Interpretation { standard, severe };
enum class OtfStatus { otf, suspended, withdrawn };
enum class AreaType { high_risk, edge };

// Individual SICCT characteristics.  Sensitivity is fitted separately for the
// test-sensitive (T) and infectious (I) stages; the severe interpretation
// trades specificity for sensitivity.
struct TestCharacteristics {
    double se_t = 0.5;
    double se_i = 0.8;
    double sp = 0.998;
    double severe_se_t = 0.6;
    double severe_se_i = 0.9;
    double severe_sp = 0.995;

    void validate() const;
    double sens_t(Interpretation in) const { return in == Interpretation::severe ? severe_se_t : se_t; }
    double sens_i(Interpretation in) const { return in == Interpretation::severe ? severe_se_i : se_i; }
    double spec(Interpretation in) const { return in == Interpretation::severe ? severe_sp : sp; }

    // Drag the severe variant along when a fitted standard value crosses it:
    // severe stays at least as sensitive and at most as specific.
    void reconcile_severe() {
        severe_se_t = std::max(severe_se_t, se_t);
        severe_se_i = std::max(severe_se_i, se_i);
        severe_sp = std::min(severe_sp, sp);
    }
};

struct SimParams {
    double beta_c = 0.005;          // within-herd transmission, per infectious per day (freq.-dep.)
    double sigma = 1.0 / 180.0;     // T -> I progression per day
    double env_seed_cattle = 0.001; // environment units per resident I animal per day
    double env_seed_badger = 0.001; // environment units per infected badger per day
    double env_decay = 0.02;        // per day
    double beta_env = 0.002;        // environment -> cattle hazard per unit load
    double beta_env_badger = 0.002; // environment -> badger hazard per unit load
    TestCharacteristics test;
    double confirm_t = 0.5;         // lesion/culture confirmation per removed T reactor
    double confirm_i = 0.9;         // ... per removed I reactor
    int routine_interval_high_risk = 365;
    int routine_interval_edge = 183;
    int short_interval_days = 60;
    int clear_tests_to_restore = 2;
    bool pre_movement_testing = true;
    int badger_group_size = 8;
    double badger_initial_prevalence = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

SimParams sim_params_from_json(const std::string& text);
// Fittable-by-name access used by the ABC layer and scenario sweeps.
void apply_named_param(SimParams& params, const std::string& name, double value);
const std::vector<std::string>& fittable_param_names();

struct TileSpec {
    std::string id;
    double easting = 0.0;
    double northing = 0.0;
    double badger_density = 0.0;  // mean badger groups per tile
};

struct HerdSpec {
    std::string id;
    std::string tile;
    AreaType area = AreaType::high_risk;
    int size = 0;
    int initial_t = 0;
    int initial_i = 0;
};

struct MovementEdgeSpec {
    std::string src;
    std::string dst;
    double batches_per_day = 0.0;  // Poisson rate
    int batch_size = 1;
};

struct WorldSpec {
    std::vector<TileSpec> tiles;
    std::vector<HerdSpec> herds;
    std::vector<MovementEdgeSpec> movements;
    double hex_radius_m = 5000.0;

    void validate() const;
};

WorldSpec world_spec_from_json(const std::string& text);

struct DensityCell {
    double easting, northing, density;
};

std::vector<DensityCell> load_density_grid(const std::string& path);
// Each grid cell is assigned to the nearest tile centre (the Voronoi cell of
// a hexagonal lattice is the hexagon); tile density = mean of its cells.
void apply_density_grid(WorldSpec& spec, const std::vector<DensityCell>& cells);

struct Herd {
    std::int32_t tile = 0;
    AreaType area = AreaType::high_risk;
    long long s = 0, t = 0, i = 0;
    OtfStatus status = OtfStatus::otf;
    int next_routine_day = 0;
    int next_si_day = -1;
    int consecutive_clear = 0;
    int episode_start = -1;
    bool episode_confirmed = false;

    long long alive() const { return s + t + i; }
    bool restricted() const { return status != OtfStatus::otf; }
};

struct Tile {
    double env = 0.0;
    double badger_density = 0.0;
};

struct BadgerGroup {
    std::int32_t tile = 0;
    long long s = 0;
    long long i = 0;
};

struct TestEventRecord {
    int day = 0;
    std::int32_t herd = 0;
    Interpretation interpretation = Interpretation::standard;
    bool whole_herd = true;
    bool truly_infected = false;
    bool clear = true;
    long long n_animals = 0;
    long long reactors = 0;
    long long confirmed = 0;
};

struct BreakdownRecord {
    std::int32_t herd = 0;
    int start_day = 0;
    int end_day = -1;
    bool confirmed = false;
};

struct EventLogRow {
    int day = 0;
    std::string type;
    std::string herd;
    std::string animal;
    std::string detail;
};

struct WorldState {
    std::vector<std::string> herd_ids;
    std::vector<std::string> tile_ids;
    std::vector<Herd> herds;
    std::vector<Tile> tiles;
    std::vector<BadgerGroup> groups;
    struct Edge {
        std::int32_t src, dst;
        double rate;
        int batch_size;
    };
    std::vector<Edge> edges;
    int day = 0;
    long long initial_animals = 0;
    long long removed = 0;
    long long animal_counter = 0;  // ids for logged reactors
    std::vector<long long> breakdowns_by_year;
    std::vector<long long> confirmed_by_year;
    std::vector<long long> reactors_by_year;
    std::vector<TestEventRecord> tests;
    std::vector<BreakdownRecord> episodes;  // completed ones
    bool log_events = false;
    std::vector<EventLogRow> events;
    Rng rng{0};

    int year() const { return day / 365; }
    void bump_year(std::vector<long long>& v, int y, long long amount = 1);
};

WorldState init_world(const WorldSpec& spec, const SimParams& params, bool log_events = false);

void step_day(WorldState& world, const SimParams& params);

struct HerdTestOutcome {
    bool clear = true;
    long long reactors = 0;
    long long confirmed = 0;
};

HerdTestOutcome run_herd_test(WorldState& world, std::int32_t herd, const SimParams& params,
                              Interpretation interpretation);

std::uint64_t world_hash(const WorldState& world);

struct HerdSeSp {
    double hse = 0.0;
    double hsp = 0.0;
    long long infected_tests = 0;
    long long clean_tests = 0;
};

// Whole-herd statutory tests only; batch pre-movement tests are excluded.
HerdSeSp measure_herd_se_sp(const std::vector<TestEventRecord>& tests);

struct ReplicateSummary {
    double annual_breakdowns = 0.0;
    double annual_confirmed = 0.0;
    double annual_reactors = 0.0;
    double mean_breakdown_duration = 0.0;
    double hse = 0.0;
    double hsp = 0.0;
    long long infected_tests = 0;
    long long clean_tests = 0;
};

struct ScenarioReport {
    int years = 0;
    int n_replicates = 0;
    std::vector<double> breakdowns_mean, breakdowns_lo, breakdowns_hi;      // per year
    std::vector<double> confirmed_mean, confirmed_lo, confirmed_hi;
    std::vector<double> reactors_mean, reactors_lo, reactors_hi;
    double annual_breakdowns_mean = 0.0;
    double annual_confirmed_mean = 0.0;
    double annual_reactors_mean = 0.0;
    double mean_breakdown_duration = 0.0;
    double hse_mean = 0.0;
    double hsp_mean = 0.0;
    std::vector<ReplicateSummary> replicates;
};

// Weighted posterior particle for scenario sampling.
struct PosteriorParticle {
    std::vector<std::pair<std::string, double>> values;
    double weight = 1.0;
};

struct ScenarioOptions {
    int threads = 1;
    bool log_events = false;
};

ScenarioReport run_scenario(const WorldSpec& spec, const SimParams& params, int years,
                            int n_replicates, const std::vector<PosteriorParticle>& particles = {},
                            const ScenarioOptions& opts = {});

struct SeEquivalentResult {
    double shift = 0.0;            // additive change applied to both se_t and se_i (capped at 1)
    double relative_change = 0.0;  // shift / mean baseline sensitivity
    double achieved_hse = 0.0;
    double achieved_hsp = 0.0;
    double baseline_hse = 0.0;
};

struct SeEquivalentOptions {
    int years = 2;
    int n_replicates = 10;
    double tolerance = 0.01;
    int max_iterations = 40;
    int threads = 1;
};

SeEquivalentResult se_equivalent_for_target_hse(const WorldSpec& spec, const SimParams& params,
                                                double target_hse,
                                                const SeEquivalentOptions& opts = {});

void write_event_log(const WorldState& world, const std::string& path);

} // namespace herdgate::ibm
