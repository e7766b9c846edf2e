#include "herdgate/tune.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>

#include "herdgate/evalx.hpp"
#include "herdgate/parallel.hpp"
#include "herdgate/rng.hpp"
#include "herdgate/stats.hpp"

namespace herdgate::tune {

void SearchSpec::validate() const {
    require(n_configs >= 1, "search spec: n_configs must be >= 1");
    require(n_splits >= 1, "search spec: n_splits must be >= 1");
    require(test_fraction > 0.0 && test_fraction < 1.0,
            "search spec: test_fraction must be in (0,1)");
    require(learning_rate_lo >= 0.01 && learning_rate_hi <= 1.0 &&
                learning_rate_lo <= learning_rate_hi,
            "search spec: learning_rate range must lie in [0.01, 1.0]");
    require(max_leaf_nodes_lo >= 2 && max_leaf_nodes_hi <= 2000 &&
                max_leaf_nodes_lo <= max_leaf_nodes_hi,
            "search spec: max_leaf_nodes range must lie in [2, 2000]");
}

namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    rng.shuffle(idx);
    return idx;
}

void finish_split(Holdout& h) {
    std::sort(h.train_idx.begin(), h.train_idx.end());
    std::sort(h.test_idx.begin(), h.test_idx.end());
    // Disjoint and exhaustive by construction; assert it anyway.
    std::set<std::size_t> seen(h.train_idx.begin(), h.train_idx.end());
    for (std::size_t i : h.test_idx)
        require(seen.insert(i).second, "holdout split: train/test overlap");
}

DataMatrix subset_matrix(const DataMatrix& m, const std::vector<std::size_t>& idx) {
    DataMatrix out;
    out.n_rows = idx.size();
    out.cols.reserve(m.cols.size());
    for (const auto& col : m.cols) {
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
        out.cols.push_back(std::move(c));
    }
    return out;
}

std::vector<std::uint8_t> subset_labels(const std::vector<std::uint8_t>& y,
                                        const std::vector<std::size_t>& idx) {
    std::vector<std::uint8_t> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = y[idx[i]];
    return out;
}

} // namespace

Holdout split_holdout(std::size_t n, double test_fraction, std::uint64_t seed) {
    require(n >= 2, "split_holdout: need at least 2 records");
    const std::size_t test_size =
        static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(n)));
    require(test_size >= 1 && test_size < n,
            "split_holdout: test_fraction produces an empty side");
    auto idx = shuffled_indices(n, seed);
    Holdout h;
    h.test_idx.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(test_size));
    h.train_idx.assign(idx.begin() + static_cast<std::ptrdiff_t>(test_size), idx.end());
    finish_split(h);
    return h;
}

Holdout split_fold(std::size_t n, int n_folds, int fold, std::uint64_t seed) {
    require(n_folds >= 2 && fold >= 0 && fold < n_folds, "split_fold: bad fold");
    require(n >= static_cast<std::size_t>(n_folds), "split_fold: more folds than records");
    auto idx = shuffled_indices(n, seed);
    const std::size_t lo = (static_cast<std::size_t>(fold) * n) / static_cast<std::size_t>(n_folds);
    const std::size_t hi =
        (static_cast<std::size_t>(fold + 1) * n) / static_cast<std::size_t>(n_folds);
    Holdout h;
    for (std::size_t i = 0; i < n; ++i)
        (i >= lo && i < hi ? h.test_idx : h.train_idx).push_back(idx[i]);
    finish_split(h);
    return h;
}

double evaluate_metric(const std::vector<double>& scores,
                       const std::vector<std::uint8_t>& labels, Metric metric,
                       double accuracy_threshold) {
    if (metric == Metric::auc) return evalx::roc(scores, labels).auc;
    std::int64_t correct = 0;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if ((scores[i] >= accuracy_threshold) == (labels[i] != 0)) ++correct;
    return static_cast<double>(correct) / static_cast<double>(scores.size());
}

SearchResult random_search(const DataMatrix& data, const std::vector<std::uint8_t>& labels,
                           const SearchSpec& spec) {
    spec.validate();
    const std::size_t n = data.n_rows;
    require(n == labels.size(), "random_search: data/labels size mismatch");

    // Sampled configurations.
    struct ConfigDraw {
        double lr;
        int leaves;
    };
    std::vector<ConfigDraw> draws(static_cast<std::size_t>(spec.n_configs));
    {
        Rng rng(derive_seed(spec.seed, "tune-configs"));
        for (auto& d : draws) {
            d.lr = std::exp(rng.uniform(std::log(spec.learning_rate_lo),
                                        std::log(spec.learning_rate_hi)));
            d.leaves = static_cast<int>(rng.uniform_int(spec.max_leaf_nodes_lo,
                                                        spec.max_leaf_nodes_hi));
        }
    }

    // Hold-out splits are shared across configurations so that the comparison
    // between configurations is paired.
    std::vector<Holdout> splits;
    splits.reserve(static_cast<std::size_t>(spec.n_splits));
    for (int s = 0; s < spec.n_splits; ++s) {
        if (spec.split_mode == SplitMode::repeated_holdout)
            splits.push_back(split_holdout(n, spec.test_fraction,
                                           derive_seed(spec.seed, "tune-split",
                                                       static_cast<std::uint64_t>(s))));
        else
            splits.push_back(split_fold(n, spec.n_splits, s, derive_seed(spec.seed, "tune-folds")));
    }

    struct TrainView {
        DataMatrix train_m, test_m;
        std::vector<std::uint8_t> train_y, test_y;
    };
    std::vector<TrainView> views(splits.size());
    for (std::size_t s = 0; s < splits.size(); ++s) {
        views[s].train_m = subset_matrix(data, splits[s].train_idx);
        views[s].test_m = subset_matrix(data, splits[s].test_idx);
        views[s].train_y = subset_labels(labels, splits[s].train_idx);
        views[s].test_y = subset_labels(labels, splits[s].test_idx);
    }

    SearchResult result;
    const std::size_t n_jobs =
        static_cast<std::size_t>(spec.n_configs) * static_cast<std::size_t>(spec.n_splits);
    result.trials.resize(n_jobs);
    std::vector<std::string> job_errors(n_jobs);

    parallel_for(n_jobs, spec.threads, [&](std::size_t j) {
        const int c = static_cast<int>(j) / spec.n_splits;
        const int s = static_cast<int>(j) % spec.n_splits;
        TrialResult& trial = result.trials[j];
        trial.config_idx = c;
        trial.split_idx = s;
        trial.learning_rate = draws[static_cast<std::size_t>(c)].lr;
        trial.max_leaf_nodes = draws[static_cast<std::size_t>(c)].leaves;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            hgbt::Hyperparameters hp = spec.base;
            hp.learning_rate = trial.learning_rate;
            hp.max_leaf_nodes = trial.max_leaf_nodes;
            const auto& view = views[static_cast<std::size_t>(s)];
            const hgbt::Ensemble model =
                hgbt::train(view.train_m, view.train_y, hp,
                            derive_seed(spec.seed, "tune-train", j));
            const std::vector<double> scores = hgbt::predict_proba_all(model, view.test_m, 1);
            trial.metric_value =
                evaluate_metric(scores, view.test_y, spec.metric, spec.accuracy_threshold);
        } catch (const std::exception& e) {
            job_errors[j] = e.what();
        }
        trial.wall_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
    });
    for (std::size_t j = 0; j < n_jobs; ++j)
        if (!job_errors[j].empty())
            throw Error("random_search: training failed for config " +
                        std::to_string(j / static_cast<std::size_t>(spec.n_splits)) + ", split " +
                        std::to_string(j % static_cast<std::size_t>(spec.n_splits)) + ": " +
                        job_errors[j]);

    for (int c = 0; c < spec.n_configs; ++c) {
        std::vector<double> metrics;
        for (int s = 0; s < spec.n_splits; ++s)
            metrics.push_back(
                result.trials[static_cast<std::size_t>(c) * static_cast<std::size_t>(spec.n_splits) +
                              static_cast<std::size_t>(s)]
                    .metric_value);
        ConfigSummary cs;
        cs.config_idx = c;
        cs.learning_rate = draws[static_cast<std::size_t>(c)].lr;
        cs.max_leaf_nodes = draws[static_cast<std::size_t>(c)].leaves;
        cs.mean_metric = stats::mean(metrics);
        cs.metric_sd = stats::sample_sd(metrics);
        result.configs.push_back(cs);
    }

    // Best mean metric; ties prefer the simpler model.
    const ConfigSummary* best = &result.configs[0];
    for (const auto& cs : result.configs) {
        if (cs.mean_metric > best->mean_metric ||
            (cs.mean_metric == best->mean_metric &&
             (cs.max_leaf_nodes < best->max_leaf_nodes ||
              (cs.max_leaf_nodes == best->max_leaf_nodes &&
               cs.learning_rate < best->learning_rate))))
            best = &cs;
    }
    result.best_config_idx = best->config_idx;
    result.best_mean_metric = best->mean_metric;
    result.best_hp = spec.base;
    result.best_hp.learning_rate = best->learning_rate;
    result.best_hp.max_leaf_nodes = best->max_leaf_nodes;

    // Final model on the canonical 80/20 split.
    const Holdout canonical =
        split_holdout(n, spec.test_fraction, derive_seed(spec.seed, "tune-canonical"));
    const DataMatrix train_m = subset_matrix(data, canonical.train_idx);
    const DataMatrix test_m = subset_matrix(data, canonical.test_idx);
    const auto train_y = subset_labels(labels, canonical.train_idx);
    const auto test_y = subset_labels(labels, canonical.test_idx);
    result.final_model = hgbt::train(train_m, train_y, result.best_hp,
                                     derive_seed(spec.seed, "tune-final"),
                                     {.threads = spec.threads});
    result.canonical_holdout_metric =
        evaluate_metric(hgbt::predict_proba_all(result.final_model, test_m, spec.threads), test_y,
                        spec.metric, spec.accuracy_threshold);
    return result;
}

} // namespace herdgate::tune
