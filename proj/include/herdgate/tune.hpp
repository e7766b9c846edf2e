#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "herdgate/hgbt.hpp"

namespace herdgate::tune {

enum class Metric { accuracy, auc };

enum class SplitMode { repeated_holdout, disjoint_folds };

struct SearchSpec {
    int n_configs = 100;
    double learning_rate_lo = 0.01;   // sampled log-uniform
    double learning_rate_hi = 1.0;
    int max_leaf_nodes_lo = 2;        // sampled uniform integer
    int max_leaf_nodes_hi = 2000;
    int n_splits = 10;
    double test_fraction = 0.2;
    std::uint64_t seed = 0;
    Metric metric = Metric::accuracy;
    double accuracy_threshold = 0.5;
    SplitMode split_mode = SplitMode::repeated_holdout;
    hgbt::Hyperparameters base;       // fields other than the two searched ones
    int threads = 1;

    void validate() const;
};

struct TrialResult {
    int config_idx = 0;
    int split_idx = 0;
    double learning_rate = 0.0;
    int max_leaf_nodes = 0;
    double metric_value = 0.0;
    double wall_ms = 0.0;
};

struct ConfigSummary {
    int config_idx = 0;
    double learning_rate = 0.0;
    int max_leaf_nodes = 0;
    double mean_metric = 0.0;
    double metric_sd = 0.0;
};

struct SearchResult {
    std::vector<TrialResult> trials;      // n_configs * n_splits entries
    std::vector<ConfigSummary> configs;
    int best_config_idx = 0;
    hgbt::Hyperparameters best_hp;
    double best_mean_metric = 0.0;
    double canonical_holdout_metric = 0.0;  // final model on the canonical 80/20 split
    hgbt::Ensemble final_model;
};

struct Holdout {
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> test_idx;
};

Holdout split_holdout(std::size_t n, double test_fraction, std::uint64_t seed);

// Disjoint-fold variant: fold k of n_folds as the test side.
Holdout split_fold(std::size_t n, int n_folds, int fold, std::uint64_t seed);

double evaluate_metric(const std::vector<double>& scores,
                       const std::vector<std::uint8_t>& labels, Metric metric,
                       double accuracy_threshold);

SearchResult random_search(const DataMatrix& data, const std::vector<std::uint8_t>& labels,
                           const SearchSpec& spec);

} // namespace herdgate::tune
