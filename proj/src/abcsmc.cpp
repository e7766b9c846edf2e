#include "herdgate/abcsmc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "herdgate/csv.hpp"
#include "herdgate/parallel.hpp"
#include "herdgate/rng.hpp"
#include "herdgate/stats.hpp"

namespace herdgate::abcsmc {

using nlohmann::json;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

void PriorComponent::validate() const {
    require(!name.empty(), "prior: component with empty name");
    require(lo < hi, "prior '" + name + "': lo must be < hi");
    if (kind == PriorKind::log_uniform)
        require(lo > 0.0, "prior '" + name + "': log-uniform requires lo > 0");
}

double PriorComponent::sample(double u01) const {
    if (kind == PriorKind::uniform) return lo + (hi - lo) * u01;
    return std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * u01);
}

double PriorComponent::pdf(double x) const {
    if (!in_support(x)) return 0.0;
    if (kind == PriorKind::uniform) return 1.0 / (hi - lo);
    return 1.0 / (x * (std::log(hi) - std::log(lo)));
}

void Prior::validate() const {
    require(!components.empty(), "prior: no components");
    for (const auto& c : components) c.validate();
}

double Prior::pdf(std::span<const double> theta) const {
    require(theta.size() == components.size(), "prior pdf: dimension mismatch");
    double p = 1.0;
    for (std::size_t c = 0; c < components.size(); ++c) p *= components[c].pdf(theta[c]);
    return p;
}

void AbcConfig::validate() const {
    require(n_particles >= 10, "abc config: n_particles must be >= 10");
    require(n_generations >= 1, "abc config: n_generations must be >= 1");
    require(alpha > 0.0 && alpha < 1.0, "abc config: alpha must be in (0,1)");
    require(kernel_scale > 0.0, "abc config: kernel_scale must be > 0");
    require(max_simulator_calls >= 1, "abc config: max_simulator_calls must be >= 1");
    for (double w : distance_weights)
        require(w >= 0.0, "abc config: distance weights must be >= 0");
    for (double e : fixed_tolerances)
        require(!(e < 0.0), "abc config: tolerances must be >= 0");
}

std::vector<double> standard_scales(std::span<const double> target) {
    std::vector<double> scales(target.size(), 1.0);
    for (std::size_t c = 0; c < target.size(); ++c)
        if (std::fabs(target[c]) > 0.0) scales[c] = std::fabs(target[c]);
    return scales;
}

double distance(std::span<const double> a, std::span<const double> b,
                std::span<const double> weights, std::span<const double> scales) {
    require(a.size() == b.size(), "distance: summary/target length mismatch");
    require(weights.empty() || weights.size() == a.size(), "distance: weights length mismatch");
    require(scales.empty() || scales.size() == a.size(), "distance: scales length mismatch");
    double total = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) {
        const double scale = scales.empty() ? 1.0 : scales[c];
        const double z = (a[c] - b[c]) / scale;
        const double w = weights.empty() ? 1.0 : weights[c];
        total += w * z * z;
    }
    return std::sqrt(total);
}

namespace {

struct Proposal {
    std::vector<double> theta;
    double dist = kInf;
    bool in_support = false;
    bool evaluated = false;
};

// Component-wise uniform kernel density; zero-width components must match.
double kernel_pdf(std::span<const double> a, std::span<const double> b,
                  std::span<const double> half_width) {
    double k = 1.0;
    for (std::size_t c = 0; c < a.size(); ++c) {
        const double hw = half_width[c];
        const double diff = std::fabs(a[c] - b[c]);
        if (hw <= 0.0) {
            if (diff != 0.0) return 0.0;
            continue;
        }
        if (diff > hw) return 0.0;
        k *= 1.0 / (2.0 * hw);
    }
    return k;
}

std::vector<double> component_half_widths(const Population& pop, double scale) {
    const std::size_t dim = pop.particles.front().theta.size();
    std::vector<double> lo(dim, kInf), hi(dim, -kInf);
    for (const auto& p : pop.particles) {
        if (p.weight <= 0.0) continue;
        for (std::size_t c = 0; c < dim; ++c) {
            lo[c] = std::min(lo[c], p.theta[c]);
            hi[c] = std::max(hi[c], p.theta[c]);
        }
    }
    std::vector<double> hw(dim, 0.0);
    for (std::size_t c = 0; c < dim; ++c)
        hw[c] = hi[c] > lo[c] ? scale * (hi[c] - lo[c]) : 0.0;
    return hw;
}

} // namespace

FitResult fit(const SimulatorFn& simulator, const Prior& prior,
              const std::vector<double>& target, const AbcConfig& config,
              const FitOptions& opts) {
    prior.validate();
    config.validate();
    const std::size_t dim = prior.components.size();
    const bool adaptive = config.fixed_tolerances.empty();
    if (!adaptive)
        require(static_cast<int>(config.fixed_tolerances.size()) >= config.n_generations,
                "abc config: fixed tolerance list shorter than n_generations");

    FitResult result;
    const std::vector<double> weights_span(config.distance_weights);
    const std::vector<double> scales = standard_scales(target);

    auto evaluate = [&](std::span<const double> theta, std::uint64_t sim_seed) {
        const std::vector<double> summary = simulator(theta, sim_seed);
        return distance(summary, target, weights_span, scales);
    };

    if (!opts.resume.empty()) {
        require(static_cast<int>(opts.resume.size()) <= config.n_generations,
                "abc: resumed populations exceed n_generations");
        for (const auto& pop : opts.resume)
            require(static_cast<int>(pop.particles.size()) == config.n_particles,
                    "abc: resumed population has the wrong particle count");
        result.generations = opts.resume;
    }

    // Generation 0.
    if (result.generations.empty()) {
        Population gen0;
        if (adaptive) {
            // Pilot batch from the prior; epsilon_0 is the alpha-quantile of the
            // pilot distances and the best n_particles pilots form generation 0.
            const long long pilot_size = std::max<long long>(
                config.n_particles,
                static_cast<long long>(std::ceil(static_cast<double>(config.n_particles) /
                                                 config.alpha)));
            require(pilot_size <= config.max_simulator_calls,
                    "abc: simulator budget cannot cover the pilot batch");
            std::vector<Proposal> pilots(static_cast<std::size_t>(pilot_size));
            parallel_for(pilots.size(), opts.threads, [&](std::size_t i) {
                Rng rng(derive_seed(config.seed, "abc-g0-draw", i));
                Proposal& p = pilots[i];
                p.theta.resize(dim);
                for (std::size_t c = 0; c < dim; ++c)
                    p.theta[c] = prior.components[c].sample(rng.uniform01());
                p.dist = evaluate(p.theta, derive_seed(config.seed, "abc-g0-sim", i));
                p.evaluated = true;
            });
            result.simulator_calls += pilot_size;

            std::vector<double> dists;
            for (const auto& p : pilots) dists.push_back(p.dist);
            gen0.epsilon = stats::quantile(dists, config.alpha);
            std::vector<std::size_t> order(pilots.size());
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return pilots[a].dist < pilots[b].dist;
            });
            for (int k = 0; k < config.n_particles; ++k) {
                const Proposal& p = pilots[order[static_cast<std::size_t>(k)]];
                gen0.particles.push_back(
                    {p.theta, 1.0 / static_cast<double>(config.n_particles), p.dist});
            }
            gen0.acceptance_rate =
                static_cast<double>(config.n_particles) / static_cast<double>(pilot_size);
        } else {
            gen0.epsilon = config.fixed_tolerances[0];
            long long proposed = 0;
            std::size_t counter = 0;
            while (static_cast<int>(gen0.particles.size()) < config.n_particles) {
                const long long remaining_budget = config.max_simulator_calls - result.simulator_calls;
                if (remaining_budget <= 0) {
                    result.budget_exhausted = true;
                    break;
                }
                const std::size_t wave = static_cast<std::size_t>(
                    std::min<long long>(config.n_particles, remaining_budget));
                std::vector<Proposal> batch(wave);
                parallel_for(wave, opts.threads, [&](std::size_t i) {
                    Rng rng(derive_seed(config.seed, "abc-g0-draw", counter + i));
                    Proposal& p = batch[i];
                    p.theta.resize(dim);
                    for (std::size_t c = 0; c < dim; ++c)
                        p.theta[c] = prior.components[c].sample(rng.uniform01());
                    p.dist = evaluate(p.theta, derive_seed(config.seed, "abc-g0-sim", counter + i));
                });
                counter += wave;
                result.simulator_calls += static_cast<long long>(wave);
                proposed += static_cast<long long>(wave);
                for (const auto& p : batch) {
                    if (static_cast<int>(gen0.particles.size()) >= config.n_particles) break;
                    if (p.dist <= gen0.epsilon)
                        gen0.particles.push_back(
                            {p.theta, 1.0 / static_cast<double>(config.n_particles), p.dist});
                }
                gen0.acceptance_rate = static_cast<double>(gen0.particles.size()) /
                                       static_cast<double>(proposed);
                if (proposed >= 5LL * config.n_particles && gen0.acceptance_rate < 0.01) {
                    result.stalled = true;
                    break;
                }
            }
            if (static_cast<int>(gen0.particles.size()) < config.n_particles) {
                if (!gen0.particles.empty()) {
                    double total = 0.0;
                    for (auto& p : gen0.particles) total += p.weight;
                    for (auto& p : gen0.particles) p.weight /= total;
                    result.generations.push_back(std::move(gen0));
                    if (opts.on_generation) opts.on_generation(result.generations);
                }
                return result;
            }
        }
        result.generations.push_back(std::move(gen0));
        if (opts.on_generation) opts.on_generation(result.generations);
    }

    // Later generations.
    for (int g = static_cast<int>(result.generations.size()); g < config.n_generations; ++g) {
        const Population& prev = result.generations.back();
        double epsilon;
        if (adaptive) {
            std::vector<double> dists;
            for (const auto& p : prev.particles) dists.push_back(p.distance);
            epsilon = stats::quantile(dists, config.alpha);
            if (!(epsilon < prev.epsilon)) {
                result.stalled = true;  // tolerance cannot strictly decrease
                break;
            }
        } else {
            epsilon = config.fixed_tolerances[static_cast<std::size_t>(g)];
        }

        const std::vector<double> half_width = component_half_widths(prev, config.kernel_scale);
        std::vector<double> cum_weight;
        {
            double acc = 0.0;
            for (const auto& p : prev.particles) {
                acc += p.weight;
                cum_weight.push_back(acc);
            }
        }

        Population pop;
        pop.epsilon = epsilon;
        long long proposed = 0;
        std::size_t counter = 0;
        bool aborted = false;
        while (static_cast<int>(pop.particles.size()) < config.n_particles) {
            const long long remaining_budget = config.max_simulator_calls - result.simulator_calls;
            if (remaining_budget <= 0) {
                result.budget_exhausted = true;
                aborted = true;
                break;
            }
            const std::size_t wave = static_cast<std::size_t>(
                std::min<long long>(config.n_particles, remaining_budget));
            std::vector<Proposal> batch(wave);
            const std::uint64_t gen_tag =
                static_cast<std::uint64_t>(g) * 0x100000000ULL;
            parallel_for(wave, opts.threads, [&](std::size_t i) {
                Rng rng(derive_seed(config.seed, "abc-prop", gen_tag + counter + i));
                Proposal& p = batch[i];
                // Resample a parent by weight, then perturb component-wise.
                const double u = rng.uniform01();
                std::size_t parent = cum_weight.size() - 1;
                for (std::size_t k = 0; k < cum_weight.size(); ++k)
                    if (u <= cum_weight[k]) {
                        parent = k;
                        break;
                    }
                p.theta = prev.particles[parent].theta;
                for (std::size_t c = 0; c < dim; ++c)
                    if (half_width[c] > 0.0)
                        p.theta[c] += rng.uniform(-half_width[c], half_width[c]);
                p.in_support = true;
                for (std::size_t c = 0; c < dim; ++c)
                    p.in_support = p.in_support && prior.components[c].in_support(p.theta[c]);
                if (p.in_support) {
                    p.dist = evaluate(p.theta, derive_seed(config.seed, "abc-sim", gen_tag + counter + i));
                    p.evaluated = true;
                }
            });
            counter += wave;
            proposed += static_cast<long long>(wave);
            for (const auto& p : batch)
                if (p.evaluated) result.simulator_calls += 1;
            for (const auto& p : batch) {
                if (static_cast<int>(pop.particles.size()) >= config.n_particles) break;
                if (p.evaluated && p.dist <= epsilon)
                    pop.particles.push_back({p.theta, 0.0, p.dist});
            }
            pop.acceptance_rate =
                static_cast<double>(pop.particles.size()) / static_cast<double>(proposed);
            if (proposed >= 5LL * config.n_particles && pop.acceptance_rate < 0.01) {
                result.stalled = true;
                aborted = true;
                break;
            }
        }
        if (aborted && static_cast<int>(pop.particles.size()) < config.n_particles) break;

        // Importance weights: prior density over the kernel-smoothed previous
        // population.
        double total = 0.0;
        for (auto& p : pop.particles) {
            double denom = 0.0;
            for (const auto& q : prev.particles)
                denom += q.weight * kernel_pdf(p.theta, q.theta, half_width);
            const double num = prior.pdf(p.theta);
            p.weight = denom > 0.0 ? num / denom : 0.0;
            total += p.weight;
        }
        require(total > 0.0, "abc: all particle weights vanished");
        for (auto& p : pop.particles) p.weight /= total;
        result.generations.push_back(std::move(pop));
        if (opts.on_generation) opts.on_generation(result.generations);
    }
    return result;
}

std::vector<std::vector<double>> posterior_sample(const std::vector<Population>& generations,
                                                  std::size_t n, std::uint64_t seed) {
    require(!generations.empty() && !generations.back().particles.empty(),
            "posterior_sample: empty final population");
    const Population& fin = generations.back();
    std::vector<double> cum;
    double acc = 0.0;
    for (const auto& p : fin.particles) {
        acc += p.weight;
        cum.push_back(acc);
    }
    Rng rng(derive_seed(seed, "posterior-sample"));
    std::vector<std::vector<double>> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.uniform01() * acc;
        std::size_t pick = cum.size() - 1;
        for (std::size_t k = 0; k < cum.size(); ++k)
            if (u <= cum[k]) {
                pick = k;
                break;
            }
        out.push_back(fin.particles[pick].theta);
    }
    return out;
}

Prior prior_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(std::string("prior: invalid JSON: ") + e.what());
    }
    Prior prior;
    try {
        for (const auto& cj : j.at("components")) {
            PriorComponent c;
            c.name = cj.at("name").get<std::string>();
            const std::string kind = cj.value("kind", "uniform");
            if (kind == "uniform") c.kind = PriorKind::uniform;
            else if (kind == "log_uniform") c.kind = PriorKind::log_uniform;
            else throw Error("prior '" + c.name + "': unknown kind '" + kind + "'");
            c.lo = cj.at("lo").get<double>();
            c.hi = cj.at("hi").get<double>();
            prior.components.push_back(std::move(c));
        }
    } catch (const json::exception& e) {
        throw Error(std::string("prior: ") + e.what());
    }
    prior.validate();
    return prior;
}

AbcConfig abc_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(std::string("abc config: invalid JSON: ") + e.what());
    }
    AbcConfig c;
    try {
        if (j.contains("n_particles")) c.n_particles = j.at("n_particles").get<int>();
        if (j.contains("n_generations")) c.n_generations = j.at("n_generations").get<int>();
        if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
        if (j.contains("kernel_scale")) c.kernel_scale = j.at("kernel_scale").get<double>();
        if (j.contains("distance_weights"))
            c.distance_weights = j.at("distance_weights").get<std::vector<double>>();
        if (j.contains("fixed_tolerances"))
            c.fixed_tolerances = j.at("fixed_tolerances").get<std::vector<double>>();
        if (j.contains("max_simulator_calls"))
            c.max_simulator_calls = j.at("max_simulator_calls").get<long long>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw Error(std::string("abc config: ") + e.what());
    }
    c.validate();
    return c;
}

void save_populations(const std::vector<Population>& generations,
                      const std::vector<std::string>& param_names, const std::string& path) {
    csv::Writer w(path);
    std::vector<std::string> header = {"generation", "particle", "weight", "distance", "epsilon"};
    for (const auto& n : param_names) header.push_back(n);
    w.row(header);
    for (std::size_t g = 0; g < generations.size(); ++g) {
        const auto& pop = generations[g];
        for (std::size_t i = 0; i < pop.particles.size(); ++i) {
            const auto& p = pop.particles[i];
            std::vector<std::string> row = {
                csv::format_int(static_cast<std::int64_t>(g)),
                csv::format_int(static_cast<std::int64_t>(i)), csv::format_double(p.weight),
                csv::format_double(p.distance),
                std::isfinite(pop.epsilon) ? csv::format_double(pop.epsilon) : "inf"};
            for (double v : p.theta) row.push_back(csv::format_double(v));
            w.row(row);
        }
    }
    w.close();
}

std::vector<Population> load_populations(const std::string& path,
                                         std::vector<std::string>* param_names) {
    csv::Table t = csv::read_file(path);
    require(t.header.size() > 5 && t.header[0] == "generation" && t.header[1] == "particle" &&
                t.header[2] == "weight" && t.header[3] == "distance" && t.header[4] == "epsilon",
            "'" + path + "': particle file schema mismatch");
    if (param_names) param_names->assign(t.header.begin() + 5, t.header.end());
    std::vector<Population> out;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& cells = t.rows[i];
        const std::string ctx = "'" + path + "' row " + std::to_string(i + 2);
        require(cells.size() == t.header.size(), ctx + ": wrong cell count");
        const std::size_t g = static_cast<std::size_t>(csv::parse_int(cells[0], ctx));
        if (out.size() <= g) out.resize(g + 1);
        Particle p;
        p.weight = csv::parse_double(cells[2], ctx);
        p.distance = csv::parse_double(cells[3], ctx);
        out[g].epsilon = cells[4] == "inf" ? kInf : csv::parse_double(cells[4], ctx);
        for (std::size_t c = 5; c < cells.size(); ++c)
            p.theta.push_back(csv::parse_double(cells[c], ctx));
        out[g].particles.push_back(std::move(p));
    }
    require(!out.empty(), "'" + path + "': no particles");
    return out;
}

// --- simulator glue ---------------------------------------------------------

const std::vector<std::string>& summary_names() {
    static const std::vector<std::string> names = {"annual_breakdowns", "annual_confirmed",
                                                   "annual_reactors", "mean_breakdown_duration"};
    return names;
}

std::vector<double> summarize(const ibm::ScenarioReport& report) {
    return {report.annual_breakdowns_mean, report.annual_confirmed_mean,
            report.annual_reactors_mean, report.mean_breakdown_duration};
}

SimulatorFn make_ibm_simulator(ibm::WorldSpec spec, ibm::SimParams base,
                               std::vector<std::string> param_names, int years,
                               int replicates_per_eval) {
    return [spec = std::move(spec), base = std::move(base), names = std::move(param_names), years,
            replicates_per_eval](std::span<const double> theta, std::uint64_t seed) {
        require(theta.size() == names.size(), "ibm simulator: parameter dimension mismatch");
        ibm::SimParams p = base;
        for (std::size_t k = 0; k < names.size(); ++k)
            ibm::apply_named_param(p, names[k], theta[k]);
        p.test.reconcile_severe();
        p.seed = seed;
        const ibm::ScenarioReport report =
            ibm::run_scenario(spec, p, years, replicates_per_eval, {}, {.threads = 1});
        return summarize(report);
    };
}

} // namespace herdgate::abcsmc
