#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "herdgate/error.hpp"

namespace herdgate::abcsmc {

enum class PriorKind { uniform, log_uniform };

struct PriorComponent {
    std::string name;
    PriorKind kind = PriorKind::uniform;
    double lo = 0.0;
    double hi = 1.0;

    void validate() const;
    double sample(double u01) const;
    double pdf(double x) const;      // 0 outside support
    bool in_support(double x) const { return x >= lo && x <= hi; }
};

struct Prior {
    std::vector<PriorComponent> components;

    void validate() const;
    double pdf(std::span<const double> theta) const;
};

struct Particle {
    std::vector<double> theta;
    double weight = 0.0;
    double distance = 0.0;
};

struct Population {
    std::vector<Particle> particles;
    double epsilon = 0.0;
    double acceptance_rate = 1.0;
};

struct AbcConfig {
    int n_particles = 100;
    int n_generations = 5;
    double alpha = 0.5;                 // tolerance quantile of the previous generation
    double kernel_scale = 0.5;          // kernel half-width = scale * weighted component range
    std::vector<double> distance_weights;  // per summary component; empty = all 1
    // Non-empty overrides the adaptive quantile schedule; entry g is the
    // tolerance of generation g (+inf allowed).
    std::vector<double> fixed_tolerances;
    long long max_simulator_calls = 1000000;
    std::uint64_t seed = 0;

    void validate() const;
};

// Standardization scales derived from the fit target: |t_c|, or 1 where the
// target component is 0.  The scales are fixed per fit, which keeps the
// distance a symmetric metric.
std::vector<double> standard_scales(std::span<const double> target);

double distance(std::span<const double> a, std::span<const double> b,
                std::span<const double> weights = {}, std::span<const double> scales = {});

// A simulator maps a parameter vector and a seed to a summary vector.
using SimulatorFn =
    std::function<std::vector<double>(std::span<const double> theta, std::uint64_t seed)>;

struct FitResult {
    std::vector<Population> generations;
    long long simulator_calls = 0;
    bool budget_exhausted = false;
    bool stalled = false;  // tolerance could not strictly decrease or acceptance collapsed
};

struct FitOptions {
    int threads = 1;
    // Invoked after every completed generation with all generations so far;
    // used for resumable checkpoints.
    std::function<void(const std::vector<Population>&)> on_generation;
    // Completed generations from an earlier run; the fit continues after them.
    std::vector<Population> resume;
};

FitResult fit(const SimulatorFn& simulator, const Prior& prior,
              const std::vector<double>& target, const AbcConfig& config,
              const FitOptions& opts = {});

std::vector<std::vector<double>> posterior_sample(const std::vector<Population>& generations,
                                                  std::size_t n, std::uint64_t seed);

Prior prior_from_json(const std::string& text);
AbcConfig abc_config_from_json(const std::string& text);

void save_populations(const std::vector<Population>& generations,
                      const std::vector<std::string>& param_names, const std::string& path);
std::vector<Population> load_populations(const std::string& path,
                                         std::vector<std::string>* param_names = nullptr);

} // namespace herdgate::abcsmc

// --- simulator glue ---------------------------------------------------------

#include "herdgate/ibm.hpp"

namespace herdgate::abcsmc {

// Summary statistics of a scenario run: mean annual breakdowns, mean annual
// confirmed breakdowns, mean annual reactors, mean breakdown duration.
const std::vector<std::string>& summary_names();
std::vector<double> summarize(const ibm::ScenarioReport& report);

SimulatorFn make_ibm_simulator(ibm::WorldSpec spec, ibm::SimParams base,
                               std::vector<std::string> param_names, int years,
                               int replicates_per_eval);

} // namespace herdgate::abcsmc
