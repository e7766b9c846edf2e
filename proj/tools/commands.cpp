#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "herdgate/abcsmc.hpp"
#include "herdgate/csv.hpp"
#include "herdgate/evalx.hpp"
#include "herdgate/hgbt.hpp"
#include "herdgate/ibm.hpp"
#include "herdgate/parallel.hpp"
#include "herdgate/records.hpp"
#include "herdgate/rng.hpp"
#include "herdgate/stats.hpp"
#include "herdgate/tune.hpp"

namespace herdgate::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string fnv1a_hex(const std::string& bytes) {
    const std::uint64_t h = fnv1a64(bytes);
    char buf[19];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string("fnv1a:") + buf;
}

json parse_config(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw Error("config '" + path + "': invalid JSON: " + e.what());
    }
}

// A run directory is created fresh; an existing non-empty directory is never
// touched, so reruns cannot partially overwrite earlier results.
void prepare_out_dir(const std::string& out) {
    require(!out.empty(), "--out is required");
    const fs::path p(out);
    if (fs::exists(p)) {
        require(fs::is_directory(p), "output path '" + out + "' exists and is not a directory");
        require(fs::is_empty(p), "output directory '" + out + "' already contains a run");
    } else {
        fs::create_directories(p);
    }
}

class Manifest {
public:
    Manifest(const CommonArgs& args, const std::string& command)
        : args_(args), start_(std::chrono::steady_clock::now()) {
        j_["command"] = command;
        j_["tool_version"] = kToolVersion;
        j_["seed"] = args.seed;
        j_["threads"] = resolve_threads(args.threads);
        j_["config_path"] = args.config_path;
        j_["config_hash"] = fnv1a_hex(read_file(args.config_path));
        j_["input_hashes"] = ordered_json::object();
        j_["outputs"] = ordered_json::object();
    }

    void add_input(const std::string& path) {
        j_["input_hashes"][path] = fnv1a_hex(read_file(path));
    }

    void add_output(const std::string& name) {
        const fs::path p = fs::path(args_.out_dir) / name;
        j_["outputs"][name] = fnv1a_hex(read_file(p.string()));
    }

    void write() {
        const double ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - start_)
                              .count();
        j_["wall_time_ms"] = ms;
        const auto now = std::chrono::system_clock::now();
        const std::time_t tt = std::chrono::system_clock::to_time_t(now);
        char buf[32];
        std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&tt));
        j_["created_utc"] = buf;
        std::ofstream out(fs::path(args_.out_dir) / "manifest.json", std::ios::binary);
        out << j_.dump(2) << "\n";
        require(out.good(), "failed to write manifest");
    }

private:
    CommonArgs args_;
    ordered_json j_;
    std::chrono::steady_clock::time_point start_;
};

void write_json(const std::string& out_dir, const std::string& name, const ordered_json& j) {
    std::ofstream out(fs::path(out_dir) / name, std::ios::binary);
    out << j.dump(2) << "\n";
    require(out.good(), "failed to write '" + name + "'");
}

std::string out_path(const CommonArgs& args, const std::string& name) {
    return (fs::path(args.out_dir) / name).string();
}

hgbt::Hyperparameters hyperparameters_from_json(const json& j) {
    hgbt::Hyperparameters hp;
    if (j.contains("learning_rate")) hp.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("max_leaf_nodes")) hp.max_leaf_nodes = j.at("max_leaf_nodes").get<int>();
    if (j.contains("n_iterations")) hp.n_iterations = j.at("n_iterations").get<int>();
    if (j.contains("l2_regularization"))
        hp.l2_regularization = j.at("l2_regularization").get<double>();
    if (j.contains("min_samples_leaf")) hp.min_samples_leaf = j.at("min_samples_leaf").get<int>();
    if (j.contains("max_bins")) hp.max_bins = j.at("max_bins").get<int>();
    hp.validate();
    return hp;
}

ordered_json confusion_to_json(const evalx::ConfusionMatrix& m) {
    ordered_json j;
    j["true_pos"] = m.true_pos;
    j["false_pos"] = m.false_pos;
    j["true_neg"] = m.true_neg;
    j["false_neg"] = m.false_neg;
    j["sensitivity"] = m.sensitivity();
    j["specificity"] = m.specificity();
    j["accuracy"] = m.accuracy();
    return j;
}

// Shared loader for the analysis commands.
struct LoadedData {
    std::vector<records::TestRecord> recs;
    DataMatrix matrix;
    std::vector<std::uint8_t> labels;
};

LoadedData load_for_model(const json& cfg, Manifest& manifest, const hgbt::Ensemble& model,
                          std::uint64_t control_seed) {
    const std::string dataset = cfg.at("dataset").get<std::string>();
    manifest.add_input(dataset);
    LoadedData d;
    d.recs = records::load_dataset(dataset);
    require(!d.recs.empty(), "dataset '" + dataset + "' is empty");
    records::MatrixOptions opts;
    // Mirror the model's schema: include a control column iff the model was
    // trained with one.
    for (const auto& f : model.bins.features)
        if (f.name == "control") opts.include_control = true;
    opts.control_seed = control_seed;
    d.matrix = records::to_matrix(d.recs, opts);
    d.labels = records::labels_of(d.recs);
    return d;
}

ibm::WorldSpec world_from_config(const json& cfg, Manifest& manifest) {
    ibm::WorldSpec spec;
    if (cfg.at("world").is_string()) {
        const std::string path = cfg.at("world").get<std::string>();
        manifest.add_input(path);
        spec = ibm::world_spec_from_json(read_file(path));
    } else {
        spec = ibm::world_spec_from_json(cfg.at("world").dump());
    }
    if (cfg.contains("density_grid")) {
        const std::string path = cfg.at("density_grid").get<std::string>();
        manifest.add_input(path);
        ibm::apply_density_grid(spec, ibm::load_density_grid(path));
    }
    return spec;
}

ibm::SimParams params_from_config(const json& cfg, Manifest& manifest) {
    if (cfg.at("params").is_string()) {
        const std::string path = cfg.at("params").get<std::string>();
        manifest.add_input(path);
        return ibm::sim_params_from_json(read_file(path));
    }
    return ibm::sim_params_from_json(cfg.at("params").dump());
}

std::vector<ibm::PosteriorParticle> particles_from_config(const json& cfg, Manifest& manifest) {
    std::vector<ibm::PosteriorParticle> particles;
    if (!cfg.contains("particles")) return particles;
    const std::string path = cfg.at("particles").get<std::string>();
    manifest.add_input(path);
    std::vector<std::string> names;
    const auto populations = abcsmc::load_populations(path, &names);
    for (const auto& p : populations.back().particles) {
        ibm::PosteriorParticle particle;
        particle.weight = p.weight;
        for (std::size_t k = 0; k < names.size(); ++k)
            particle.values.emplace_back(names[k], p.theta[k]);
        particles.push_back(std::move(particle));
    }
    return particles;
}

void write_scenario_outputs(const CommonArgs& args, Manifest& manifest,
                            const ibm::ScenarioReport& report, const std::string& prefix = "") {
    {
        csv::Writer w(out_path(args, prefix + "annual.csv"));
        w.row({"year", "breakdowns_mean", "breakdowns_lo", "breakdowns_hi", "confirmed_mean",
               "confirmed_lo", "confirmed_hi", "reactors_mean", "reactors_lo", "reactors_hi"});
        for (int y = 0; y < report.years; ++y) {
            const auto at = [&](const std::vector<double>& v) {
                return csv::format_double(v[static_cast<std::size_t>(y)]);
            };
            w.row({csv::format_int(y), at(report.breakdowns_mean), at(report.breakdowns_lo),
                   at(report.breakdowns_hi), at(report.confirmed_mean), at(report.confirmed_lo),
                   at(report.confirmed_hi), at(report.reactors_mean), at(report.reactors_lo),
                   at(report.reactors_hi)});
        }
        w.close();
        manifest.add_output(prefix + "annual.csv");
    }
    {
        csv::Writer w(out_path(args, prefix + "replicates.csv"));
        w.row({"replicate", "annual_breakdowns", "annual_confirmed", "annual_reactors",
               "mean_breakdown_duration", "hse", "hsp"});
        for (std::size_t r = 0; r < report.replicates.size(); ++r) {
            const auto& rep = report.replicates[r];
            w.row({csv::format_int(static_cast<std::int64_t>(r)),
                   csv::format_double(rep.annual_breakdowns),
                   csv::format_double(rep.annual_confirmed),
                   csv::format_double(rep.annual_reactors),
                   csv::format_double(rep.mean_breakdown_duration), csv::format_double(rep.hse),
                   csv::format_double(rep.hsp)});
        }
        w.close();
        manifest.add_output(prefix + "replicates.csv");
    }
    ordered_json j;
    j["years"] = report.years;
    j["n_replicates"] = report.n_replicates;
    j["annual_breakdowns_mean"] = report.annual_breakdowns_mean;
    j["annual_confirmed_mean"] = report.annual_confirmed_mean;
    j["annual_reactors_mean"] = report.annual_reactors_mean;
    j["mean_breakdown_duration"] = report.mean_breakdown_duration;
    j["hse"] = report.hse_mean;
    j["hsp"] = report.hsp_mean;
    write_json(args.out_dir, prefix + "report.json", j);
    manifest.add_output(prefix + "report.json");
}

} // namespace

int cmd_generate(const CommonArgs& args) {
    prepare_out_dir(args.out_dir);
    Manifest manifest(args, "generate");
    records::SynthConfig cfg = records::synth_config_from_json(read_file(args.config_path));
    cfg.seed = derive_seed(args.seed, "generate");
    const records::SynthResult result = records::generate_synthetic(cfg);

    records::save_dataset(result.records, out_path(args, "dataset.csv"));
    manifest.add_output("dataset.csv");
    records::save_breakdowns(result.breakdowns, out_path(args, "breakdowns.csv"));
    manifest.add_output("breakdowns.csv");

    ordered_json truth;
    truth["intercept"] = result.truth.intercept;
    truth["mean_risk"] = result.truth.mean_risk;
    truth["bayes_auc"] = result.truth.bayes_auc;
    truth["n_records"] = result.records.size();
    truth["weights"] = ordered_json::object();
    for (const auto& [name, w] : result.truth.weights) truth["weights"][name] = w;
    truth["practices"] = ordered_json::array();
    for (const auto& p : result.truth.practices) {
        ordered_json pj;
        pj["practice"] = p.practice_id;
        pj["size_level"] = p.size_level;
        pj["accuracy_offset"] = p.accuracy_offset;
        truth["practices"].push_back(std::move(pj));
    }
    write_json(args.out_dir, "ground_truth.json", truth);
    manifest.add_output("ground_truth.json");
    manifest.write();
    return 0;
}

int cmd_train(const CommonArgs& args) {
    prepare_out_dir(args.out_dir);
    Manifest manifest(args, "train");
    const json cfg = parse_config(args.config_path);
    const std::string dataset = cfg.at("dataset").get<std::string>();
    manifest.add_input(dataset);

    const auto recs = records::load_dataset(dataset);
    require(!recs.empty(), "dataset is empty");
    records::MatrixOptions mopts;
    mopts.include_control = cfg.value("control_feature", false);
    mopts.control_seed = derive_seed(args.seed, "control");
    const DataMatrix matrix = records::to_matrix(recs, mopts);
    const auto labels = records::labels_of(recs);

    hgbt::Hyperparameters hp = cfg.contains("hyperparameters")
                                   ? hyperparameters_from_json(cfg.at("hyperparameters"))
                                   : hgbt::Hyperparameters{};
    const hgbt::Ensemble model =
        hgbt::train(matrix, labels, hp, derive_seed(args.seed, "train"),
                    {.threads = resolve_threads(args.threads)});
    hgbt::save_model(model, out_path(args, "model.json"));
    manifest.add_output("model.json");

    {
        csv::Writer w(out_path(args, "training_log.csv"));
        w.row({"iteration", "train_logloss"});
        for (std::size_t i = 0; i < model.train_logloss.size(); ++i)
            w.row({csv::format_int(static_cast<std::int64_t>(i)),
                   csv::format_double(model.train_logloss[i])});
        w.close();
        manifest.add_output("training_log.csv");
    }
    ordered_json summary;
    summary["n_records"] = recs.size();
    std::size_t n_pos = 0;
    for (auto y : labels) n_pos += y;
    summary["prevalence"] = static_cast<double>(n_pos) / static_cast<double>(recs.size());
    summary["final_train_logloss"] =
        model.train_logloss.empty() ? 0.0 : model.train_logloss.back();
    summary["n_trees"] = model.trees.size();
    write_json(args.out_dir, "summary.json", summary);
    manifest.add_output("summary.json");
    manifest.write();
    return 0;
}

int cmd_tune(const CommonArgs& args) {
    prepare_out_dir(args.out_dir);
    Manifest manifest(args, "tune");
    const json cfg = parse_config(args.config_path);
    const std::string dataset = cfg.at("dataset").get<std::string>();
    manifest.add_input(dataset);

    const auto recs = records::load_dataset(dataset);
    records::MatrixOptions mopts;
    mopts.include_control = cfg.value("control_feature", false);
    mopts.control_seed = derive_seed(args.seed, "control");
    const DataMatrix matrix = records::to_matrix(recs, mopts);
    const auto labels = records::labels_of(recs);

    tune::SearchSpec spec;
    if (cfg.contains("search")) {
        const auto& s = cfg.at("search");
        if (s.contains("n_configs")) spec.n_configs = s.at("n_configs").get<int>();
        if (s.contains("n_splits")) spec.n_splits = s.at("n_splits").get<int>();
        if (s.contains("test_fraction")) spec.test_fraction = s.at("test_fraction").get<double>();
        if (s.contains("learning_rate")) {
            spec.learning_rate_lo = s.at("learning_rate").at(0).get<double>();
            spec.learning_rate_hi = s.at("learning_rate").at(1).get<double>();
        }
        if (s.contains("max_leaf_nodes")) {
            spec.max_leaf_nodes_lo = s.at("max_leaf_nodes").at(0).get<int>();
            spec.max_leaf_nodes_hi = s.at("max_leaf_nodes").at(1).get<int>();
        }
        if (s.contains("metric")) {
            const std::string m = s.at("metric").get<std::string>();
            if (m == "accuracy") spec.metric = tune::Metric::accuracy;
            else if (m == "auc") spec.metric = tune::Metric::auc;
            else throw Error("search config: unknown metric '" + m + "'");
        }
        if (s.contains("accuracy_threshold"))
            spec.accuracy_threshold = s.at("accuracy_threshold").get<double>();
        if (s.contains("split_mode")) {
            const std::string m = s.at("split_mode").get<std::string>();
            if (m == "repeated_holdout") spec.split_mode = tune::SplitMode::repeated_holdout;
            else if (m == "disjoint_folds") spec.split_mode = tune::SplitMode::disjoint_folds;
            else throw Error("search config: unknown split_mode '" + m + "'");
        }
    }
    if (cfg.contains("base_hyperparameters"))
        spec.base = hyperparameters_from_json(cfg.at("base_hyperparameters"));
    spec.seed = derive_seed(args.seed, "tune");
    spec.threads = resolve_threads(args.threads);

    const tune::SearchResult result = tune::random_search(matrix, labels, spec);

    {
        csv::Writer w(out_path(args, "search_log.csv"));
        w.row({"config", "split", "learning_rate", "max_leaf_nodes", "metric", "wall_ms"});
        for (const auto& t : result.trials)
            w.row({csv::format_int(t.config_idx), csv::format_int(t.split_idx),
                   csv::format_double(t.learning_rate), csv::format_int(t.max_leaf_nodes),
                   csv::format_double(t.metric_value), csv::format_double(t.wall_ms)});
        w.close();
        manifest.add_output("search_log.csv");
    }
    {
        csv::Writer w(out_path(args, "configs.csv"));
        w.row({"config", "learning_rate", "max_leaf_nodes", "mean_metric", "metric_sd"});
        for (const auto& c : result.configs)
            w.row({csv::format_int(c.config_idx), csv::format_double(c.learning_rate),
                   csv::format_int(c.max_leaf_nodes), csv::format_double(c.mean_metric),
                   csv::format_double(c.metric_sd)});
        w.close();
        manifest.add_output("configs.csv");
    }
    hgbt::save_model(result.final_model, out_path(args, "model.json"));
    manifest.add_output("model.json");

    ordered_json best;
    best["config_idx"] = result.best_config_idx;
    best["learning_rate"] = result.best_hp.learning_rate;
    best["max_leaf_nodes"] = result.best_hp.max_leaf_nodes;
    best["mean_metric"] = result.best_mean_metric;
    best["canonical_holdout_metric"] = result.canonical_holdout_metric;
    write_json(args.out_dir, "best_config.json", best);
    manifest.add_output("best_config.json");
    manifest.write();
    return 0;
}

int cmd_eval(const CommonArgs& args) {
    prepare_out_dir(args.out_dir);
    Manifest manifest(args, "eval");
    const json cfg = parse_config(args.config_path);
    const std::string model_path = cfg.at("model").get<std::string>();
    manifest.add_input(model_path);
    const hgbt::Ensemble model = hgbt::load_model(model_path);
    const LoadedData d = load_for_model(cfg, manifest, model, derive_seed(args.seed, "control"));

    const std::vector<double> scores =
        hgbt::predict_proba_all(model, d.matrix, resolve_threads(args.threads));
    const evalx::RocAnalysis roc = evalx::roc(scores, d.labels);

    double threshold = cfg.value("threshold", 0.5);
    ordered_json chosen;
    require(!(cfg.contains("match_specificity") && cfg.contains("match_sensitivity")),
            "eval config: match_specificity and match_sensitivity are mutually exclusive");
    if (cfg.contains("match_specificity")) {
        const auto op =
            evalx::threshold_for_specificity(roc, cfg.at("match_specificity").get<double>());
        threshold = op.threshold;
        chosen["mode"] = "match_specificity";
        chosen["target"] = cfg.at("match_specificity").get<double>();
    } else if (cfg.contains("match_sensitivity")) {
        const auto op =
            evalx::threshold_for_sensitivity(roc, cfg.at("match_sensitivity").get<double>());
        threshold = op.threshold;
        chosen["mode"] = "match_sensitivity";
        chosen["target"] = cfg.at("match_sensitivity").get<double>();
    } else {
        chosen["mode"] = "explicit";
    }
    chosen["threshold"] = threshold;

    {
        csv::Writer w(out_path(args, "roc.csv"));
        w.row({"threshold", "sensitivity", "specificity"});
        for (const auto& p : roc.points) {
            const std::string t = std::isfinite(p.threshold)
                                      ? csv::format_double(p.threshold)
                                      : (p.threshold > 0 ? "inf" : "-inf");
            w.row({t, csv::format_double(p.sensitivity), csv::format_double(p.specificity)});
        }
        w.close();
        manifest.add_output("roc.csv");
    }
    {
        csv::Writer w(out_path(args, "roc_curve.csv"));
        w.row({"fpr", "tpr"});
        for (auto it = roc.points.rbegin(); it != roc.points.rend(); ++it)
            w.row({csv::format_double(1.0 - it->specificity), csv::format_double(it->sensitivity)});
        w.close();
        manifest.add_output("roc_curve.csv");
    }
    {
        std::vector<int> years(d.recs.size());
        for (std::size_t i = 0; i < d.recs.size(); ++i) years[i] = d.recs[i].test_date.year();
        const auto yearly = evalx::yearly_misclassification(years, scores, d.labels, threshold);
        csv::Writer w(out_path(args, "yearly.csv"));
        w.row({"year", "n", "misclassified", "rate"});
        for (const auto& y : yearly)
            w.row({csv::format_int(y.year), csv::format_int(y.n), csv::format_int(y.misclassified),
                   csv::format_double(y.rate)});
        w.close();
        manifest.add_output("yearly.csv");
    }

    // SICCT-alone comparison on the same records.
    std::vector<double> sicct_scores(d.recs.size(), 0.0);
    for (std::size_t i = 0; i < d.recs.size(); ++i)
        sicct_scores[i] =
            d.recs[i].sicct_herd_result == records::SicctResult::not_clear ? 1.0 : 0.0;

    ordered_json summary;
    summary["n_records"] = d.recs.size();
    summary["auc"] = roc.auc;
    summary["operating_point"] = chosen;
    summary["confusion_model"] = confusion_to_json(evalx::confusion(scores, d.labels, threshold));
    summary["confusion_sicct"] = confusion_to_json(evalx::confusion(sicct_scores, d.labels, 0.5));
    write_json(args.out_dir, "summary.json", summary);
    manifest.add_output("summary.json");
    manifest.write();
    return 0;
}

int cmd_importance(const CommonArgs& args) {
    prepare_out_dir(args.out_dir);
    Manifest manifest(args, "importance");
    const json cfg = parse_config(args.config_path);
    const std::string model_path = cfg.at("model").get<std::string>();
    manifest.add_input(model_path);
    const hgbt::Ensemble model = hgbt::load_model(model_path);
    const LoadedData d = load_for_model(cfg, manifest, model, derive_seed(args.seed, "control"));

    evalx::ImportanceOptions opts;
    opts.n_repeats = cfg.value("n_repeats", 10);
    opts.threshold = cfg.value("threshold", 0.5);
    opts.seed = derive_seed(args.seed, "importance");
    opts.threads = resolve_threads(args.threads);

    evalx::ImportanceReport report;
    if (cfg.value("retrain", false)) {
        const hgbt::Hyperparameters hp = cfg.contains("hyperparameters")
                                             ? hyperparameters_from_json(cfg.at("hyperparameters"))
                                             : model.hp;
        const double train_fraction = cfg.value("train_fraction", 0.8);
        const auto split = tune::split_holdout(d.matrix.n_rows, 1.0 - train_fraction,
                                               derive_seed(args.seed, "importance-split"));
        // train_idx holds the larger side here by construction of the fraction.
        DataMatrix train_m, eval_m;
        std::vector<std::uint8_t> train_y, eval_y;
        {
            auto take = [&](const std::vector<std::size_t>& idx, DataMatrix& m,
                            std::vector<std::uint8_t>& y) {
                m.n_rows = idx.size();
                for (const auto& col : d.matrix.cols) {
                    Column c;
                    c.name = col.name;
                    c.kind = col.kind;
                    c.labels = col.labels;
                    c.present.resize(idx.size());
                    if (col.kind == ColumnKind::numeric) c.num.resize(idx.size());
                    else c.cat.resize(idx.size());
                    for (std::size_t i = 0; i < idx.size(); ++i) {
                        c.present[i] = col.present[idx[i]];
                        if (col.kind == ColumnKind::numeric) c.num[i] = col.num[idx[i]];
                        else c.cat[i] = col.cat[idx[i]];
                    }
                    m.cols.push_back(std::move(c));
                }
                y.resize(idx.size());
                for (std::size_t i = 0; i < idx.size(); ++i) y[i] = d.labels[idx[i]];
            };
            take(split.train_idx, train_m, train_y);
            take(split.test_idx, eval_m, eval_y);
        }
        report = evalx::permutation_importance_retrain(train_m, train_y, eval_m, eval_y, hp, opts);
    } else {
        report = evalx::permutation_importance(model, d.matrix, d.labels, opts);
    }

    {
        csv::Writer w(out_path(args, "importance.csv"));
        w.row({"feature", "mean_drop", "ci_lo", "ci_hi"});
        for (const auto& f : report.features)
            w.row({f.feature, csv::format_double(f.mean_drop), csv::format_double(f.ci_lo),
                   csv::format_double(f.ci_hi)});
        w.close();
        manifest.add_output("importance.csv");
    }
    {
        csv::Writer w(out_path(args, "importance_bars.csv"));
        w.row({"feature", "mean_drop"});
        std::vector<const evalx::FeatureImportance*> sorted;
        for (const auto& f : report.features) sorted.push_back(&f);
        std::stable_sort(sorted.begin(), sorted.end(),
                         [](const auto* a, const auto* b) { return a->mean_drop > b->mean_drop; });
        for (const auto* f : sorted)
            w.row({f->feature, csv::format_double(f->mean_drop)});
        w.close();
        manifest.add_output("importance_bars.csv");
    }
    ordered_json summary;
    summary["baseline_accuracy"] = report.baseline_accuracy;
    summary["n_repeats"] = report.n_repeats;
    summary["mode"] = cfg.value("retrain", false) ? "retrain" : "rescore";
    write_json(args.out_dir, "summary.json", summary);
    manifest.add_output("summary.json");
    manifest.write();
    return 0;
}

int cmd_practices(const CommonArgs& args) {
    prepare_out_dir(args.out_dir);
    Manifest manifest(args, "practices");
    const json cfg = parse_config(args.config_path);
    const std::string model_path = cfg.at("model").get<std::string>();
    manifest.add_input(model_path);
    const hgbt::Ensemble model = hgbt::load_model(model_path);
    const LoadedData d = load_for_model(cfg, manifest, model, derive_seed(args.seed, "control"));

    const std::vector<double> scores =
        hgbt::predict_proba_all(model, d.matrix, resolve_threads(args.threads));
    const double threshold = cfg.value("threshold", 0.5);
    const evalx::PracticeReport report = evalx::practice_analysis(d.recs, scores, threshold);

    {
        csv::Writer w(out_path(args, "practices.csv"));
        w.row({"practice", "n_tests", "mean_herd_size", "accuracy_sicct", "p_value_sicct",
               "accuracy_model", "p_value_model", "accuracy_delta"});
        for (const auto& r : report.rows)
            w.row({r.practice, csv::format_int(r.n_tests), csv::format_double(r.mean_herd_size),
                   csv::format_double(r.accuracy_sicct), csv::format_double(r.p_value_sicct),
                   csv::format_double(r.accuracy_model), csv::format_double(r.p_value_model),
                   csv::format_double(r.accuracy_delta)});
        w.close();
        manifest.add_output("practices.csv");
    }
    ordered_json summary;
    summary["n_practices"] = report.rows.size();
    summary["global_accuracy_sicct"] = report.global_accuracy_sicct;
    summary["global_accuracy_model"] = report.global_accuracy_model;
    summary["fraction_outside_expected_sicct"] = report.fraction_outside_expected_sicct;
    summary["fraction_outside_expected_model"] = report.fraction_outside_expected_model;
    summary["pearson_accuracy_vs_herd_size_sicct"] = report.pearson_sicct;
    summary["pearson_accuracy_vs_herd_size_model"] = report.pearson_model;
    write_json(args.out_dir, "summary.json", summary);
    manifest.add_output("summary.json");
    manifest.write();
    return 0;
}

int cmd_simulate(const CommonArgs& args) {
    prepare_out_dir(args.out_dir);
    Manifest manifest(args, "simulate");
    const json cfg = parse_config(args.config_path);
    const ibm::WorldSpec spec = world_from_config(cfg, manifest);
    ibm::SimParams params = params_from_config(cfg, manifest);
    params.seed = derive_seed(args.seed, "scenario");
    const int years = cfg.value("years", 1);
    const int replicates = cfg.value("replicates", 30);
    const auto particles = particles_from_config(cfg, manifest);
    const bool log_events = cfg.value("log_events", false);

    ibm::ScenarioOptions opts;
    opts.threads = resolve_threads(args.threads);
    opts.log_events = log_events;
    const ibm::ScenarioReport report =
        ibm::run_scenario(spec, params, years, replicates, particles, opts);
    write_scenario_outputs(args, manifest, report);

    if (log_events) {
        // Replicate 0 is rerun serially to materialize its event log.
        const ibm::SimParams rep_params = [&] {
            ibm::SimParams p = params;
            p.seed = derive_seed(params.seed, "scenario-replicate", 0);
            return p;
        }();
        ibm::WorldState w = ibm::init_world(spec, rep_params, true);
        for (int d2 = 0; d2 < years * 365; ++d2) ibm::step_day(w, rep_params);
        ibm::write_event_log(w, out_path(args, "events.csv"));
        manifest.add_output("events.csv");
    }
    manifest.write();
    return 0;
}

int cmd_fit(const CommonArgs& args) {
    prepare_out_dir(args.out_dir);
    Manifest manifest(args, "fit");
    const json cfg = parse_config(args.config_path);
    const ibm::WorldSpec spec = world_from_config(cfg, manifest);
    const ibm::SimParams base = params_from_config(cfg, manifest);

    abcsmc::Prior prior;
    std::vector<std::string> names;
    for (const auto& pj : cfg.at("fit_parameters")) {
        abcsmc::PriorComponent c;
        c.name = pj.at("name").get<std::string>();
        const std::string kind = pj.value("kind", "uniform");
        if (kind == "uniform") c.kind = abcsmc::PriorKind::uniform;
        else if (kind == "log_uniform") c.kind = abcsmc::PriorKind::log_uniform;
        else throw Error("fit config: unknown prior kind '" + kind + "'");
        c.lo = pj.at("lo").get<double>();
        c.hi = pj.at("hi").get<double>();
        // Fail early on unknown parameter names.
        ibm::SimParams probe = base;
        ibm::apply_named_param(probe, c.name, 0.5 * (c.lo + c.hi));
        names.push_back(c.name);
        prior.components.push_back(std::move(c));
    }

    abcsmc::AbcConfig abc = cfg.contains("abc")
                                ? abcsmc::abc_config_from_json(cfg.at("abc").dump())
                                : abcsmc::AbcConfig{};
    abc.seed = derive_seed(args.seed, "fit");

    const int sim_years = cfg.value("sim_years", 2);
    const int reps_per_eval = cfg.value("replicates_per_eval", 1);
    const abcsmc::SimulatorFn simulator =
        abcsmc::make_ibm_simulator(spec, base, names, sim_years, reps_per_eval);

    std::vector<double> target;
    if (cfg.contains("target")) {
        target = cfg.at("target").get<std::vector<double>>();
    } else if (cfg.contains("target_from_base")) {
        const auto& t = cfg.at("target_from_base");
        ibm::SimParams p = base;
        p.seed = derive_seed(args.seed, "fit-target");
        const ibm::ScenarioReport ref = ibm::run_scenario(
            spec, p, t.value("years", sim_years), t.value("replicates", 10), {},
            {.threads = resolve_threads(args.threads)});
        target = abcsmc::summarize(ref);
    } else {
        throw Error("fit config: either 'target' or 'target_from_base' is required");
    }
    require(target.size() == abcsmc::summary_names().size(),
            "fit config: target must have " +
                std::to_string(abcsmc::summary_names().size()) + " components");

    abcsmc::FitOptions fit_opts;
    fit_opts.threads = resolve_threads(args.threads);
    // Checkpoint after every generation so an interrupted fit can resume.
    fit_opts.on_generation = [&](const std::vector<abcsmc::Population>& so_far) {
        abcsmc::save_populations(so_far, names, out_path(args, "populations.csv"));
    };
    if (cfg.contains("resume_from")) {
        const std::string path = cfg.at("resume_from").get<std::string>();
        manifest.add_input(path);
        std::vector<std::string> resumed_names;
        fit_opts.resume = abcsmc::load_populations(path, &resumed_names);
        require(resumed_names == names,
                "fit config: resume_from parameter names do not match fit_parameters");
    }
    const abcsmc::FitResult result = abcsmc::fit(simulator, prior, target, abc, fit_opts);
    require(!result.generations.empty(), "fit produced no accepted particles");

    abcsmc::save_populations(result.generations, names, out_path(args, "populations.csv"));
    manifest.add_output("populations.csv");

    ordered_json summary;
    summary["simulator_calls"] = result.simulator_calls;
    summary["budget_exhausted"] = result.budget_exhausted;
    summary["stalled"] = result.stalled;
    summary["n_generations_completed"] = result.generations.size();
    summary["target"] = target;
    summary["summary_names"] = abcsmc::summary_names();
    summary["epsilons"] = ordered_json::array();
    summary["acceptance_rates"] = ordered_json::array();
    for (const auto& g : result.generations) {
        summary["epsilons"].push_back(std::isfinite(g.epsilon) ? ordered_json(g.epsilon)
                                                               : ordered_json("inf"));
        summary["acceptance_rates"].push_back(g.acceptance_rate);
    }
    summary["posterior"] = ordered_json::object();
    const auto& fin = result.generations.back();
    for (std::size_t c = 0; c < names.size(); ++c) {
        double mean = 0.0;
        for (const auto& p : fin.particles) mean += p.weight * p.theta[c];
        double var = 0.0;
        for (const auto& p : fin.particles)
            var += p.weight * (p.theta[c] - mean) * (p.theta[c] - mean);
        ordered_json pj;
        pj["mean"] = mean;
        pj["sd"] = std::sqrt(var);
        summary["posterior"][names[c]] = std::move(pj);
    }
    write_json(args.out_dir, "posterior_summary.json", summary);
    manifest.add_output("posterior_summary.json");
    manifest.write();
    return 0;
}

int cmd_sweep(const CommonArgs& args) {
    prepare_out_dir(args.out_dir);
    Manifest manifest(args, "sweep");
    const json cfg = parse_config(args.config_path);
    const ibm::WorldSpec spec = world_from_config(cfg, manifest);
    ibm::SimParams base = params_from_config(cfg, manifest);
    base.seed = derive_seed(args.seed, "scenario");  // shared seeds across grid points
    const int years = cfg.value("years", 1);
    const int replicates = cfg.value("replicates", 30);
    const auto particles = particles_from_config(cfg, manifest);

    struct GridPoint {
        double se_shift = 0.0;
        double sp_shift = 0.0;
    };
    std::vector<GridPoint> grid;
    if (cfg.contains("grid")) {
        for (const auto& gj : cfg.at("grid"))
            grid.push_back({gj.value("se_shift", 0.0), gj.value("sp_shift", 0.0)});
    } else {
        const auto se_shifts = cfg.value("se_shifts", std::vector<double>{0.0});
        const auto sp_shifts = cfg.value("sp_shifts", std::vector<double>{0.0});
        for (double se : se_shifts)
            for (double sp : sp_shifts) grid.push_back({se, sp});
    }
    require(!grid.empty(), "sweep config: empty grid");

    ibm::ScenarioOptions opts;
    opts.threads = resolve_threads(args.threads);

    csv::Writer w(out_path(args, "sweep.csv"));
    w.row({"point", "se_shift", "sp_shift", "annual_breakdowns_mean", "annual_confirmed_mean",
           "annual_reactors_mean", "hse", "hsp"});
    ordered_json points = ordered_json::array();
    for (std::size_t gidx = 0; gidx < grid.size(); ++gidx) {
        ibm::SimParams p = base;
        p.test.se_t = std::clamp(base.test.se_t + grid[gidx].se_shift, 0.0, 1.0);
        p.test.se_i = std::clamp(base.test.se_i + grid[gidx].se_shift, 0.0, 1.0);
        p.test.severe_se_t = std::clamp(base.test.severe_se_t + grid[gidx].se_shift,
                                        p.test.se_t, 1.0);
        p.test.severe_se_i = std::clamp(base.test.severe_se_i + grid[gidx].se_shift,
                                        p.test.se_i, 1.0);
        p.test.sp = std::clamp(base.test.sp + grid[gidx].sp_shift, 0.0, 1.0);
        p.test.severe_sp = std::clamp(base.test.severe_sp + grid[gidx].sp_shift, 0.0, p.test.sp);
        const ibm::ScenarioReport rep =
            ibm::run_scenario(spec, p, years, replicates, particles, opts);
        w.row({csv::format_int(static_cast<std::int64_t>(gidx)),
               csv::format_double(grid[gidx].se_shift), csv::format_double(grid[gidx].sp_shift),
               csv::format_double(rep.annual_breakdowns_mean),
               csv::format_double(rep.annual_confirmed_mean),
               csv::format_double(rep.annual_reactors_mean), csv::format_double(rep.hse_mean),
               csv::format_double(rep.hsp_mean)});
        ordered_json pj;
        pj["se_shift"] = grid[gidx].se_shift;
        pj["sp_shift"] = grid[gidx].sp_shift;
        pj["annual_breakdowns_mean"] = rep.annual_breakdowns_mean;
        pj["annual_confirmed_mean"] = rep.annual_confirmed_mean;
        pj["annual_reactors_mean"] = rep.annual_reactors_mean;
        pj["mean_breakdown_duration"] = rep.mean_breakdown_duration;
        pj["hse"] = rep.hse_mean;
        pj["hsp"] = rep.hsp_mean;
        points.push_back(std::move(pj));
    }
    w.close();
    manifest.add_output("sweep.csv");

    ordered_json report;
    report["years"] = years;
    report["n_replicates"] = replicates;
    report["points"] = std::move(points);

    // Optional: solve for the uniform sensitivity shift that reaches a target
    // herd-level sensitivity, reported as additive and relative change.
    if (cfg.contains("equivalent_hse_target")) {
        ibm::SeEquivalentOptions se_opts;
        se_opts.years = years;
        se_opts.n_replicates = replicates;
        se_opts.threads = resolve_threads(args.threads);
        if (cfg.contains("equivalent_tolerance"))
            se_opts.tolerance = cfg.at("equivalent_tolerance").get<double>();
        const ibm::SeEquivalentResult eq = ibm::se_equivalent_for_target_hse(
            spec, base, cfg.at("equivalent_hse_target").get<double>(), se_opts);
        ordered_json ej;
        ej["target_hse"] = cfg.at("equivalent_hse_target").get<double>();
        ej["baseline_hse"] = eq.baseline_hse;
        ej["shift"] = eq.shift;
        ej["relative_change"] = eq.relative_change;
        ej["achieved_hse"] = eq.achieved_hse;
        ej["achieved_hsp"] = eq.achieved_hsp;
        report["se_equivalent"] = std::move(ej);
    }
    write_json(args.out_dir, "report.json", report);
    manifest.add_output("report.json");
    manifest.write();
    return 0;
}

} // namespace herdgate::cli
