#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "herdgate/dataset.hpp"

namespace herdgate::hgbt {

struct Hyperparameters {
    double learning_rate = 0.1;
    int max_leaf_nodes = 31;
    int n_iterations = 100;
    double l2_regularization = 0.0;
    int min_samples_leaf = 20;
    int max_bins = 255;

    void validate() const;
};

// Per-feature binning.  Value bins occupy [0, n_value_bins); the reserved
// missing bin is n_value_bins.  Categorical features always keep one value
// bin as the overflow bin, so unseen categories have somewhere to go.
struct FeatureBins {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
    std::vector<double> edges;          // numeric: bin b holds x <= edges[b]; last bin holds the rest
    std::vector<std::string> categories;
    std::vector<std::int32_t> category_bin;  // code -> bin, aligned with categories
    std::int32_t overflow_bin = -1;
    std::int32_t n_value_bins = 0;

    std::int32_t missing_bin() const { return n_value_bins; }
    std::int32_t n_bins() const { return n_value_bins + 1; }
    std::int32_t bin_of_numeric(double value) const;
    std::int32_t bin_of_category(std::string_view label) const;
};

struct BinMapper {
    std::vector<FeatureBins> features;
    std::vector<std::string> warnings;

    const FeatureBins* find(std::string_view name) const {
        for (const auto& f : features)
            if (f.name == name) return &f;
        return nullptr;
    }
};

// Flat node storage; leaves have left == right == -1.
struct TreeNode {
    std::int32_t feature = -1;
    std::int32_t threshold_bin = -1;         // numeric split: bins <= threshold_bin go left
    std::vector<std::int32_t> left_bins;     // categorical split: sorted value bins going left
    bool missing_left = true;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double value = 0.0;                      // leaf: log-odds increment (unscaled)

    bool is_leaf() const { return left < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;             // nodes[0] is the root
};

struct Ensemble {
    BinMapper bins;
    double base_score = 0.0;
    double learning_rate = 0.1;
    std::vector<Tree> trees;
    Hyperparameters hp;
    std::uint64_t seed = 0;
    std::vector<double> train_logloss;       // one entry per completed iteration

    std::vector<std::string> feature_names() const;
};

BinMapper fit_bins(const DataMatrix& data, int max_bins);

struct TrainOptions {
    int threads = 1;
};

Ensemble train(const DataMatrix& data, const std::vector<std::uint8_t>& labels,
               const Hyperparameters& hp, std::uint64_t seed, const TrainOptions& opts = {});

// Raw ensemble score (log-odds) and its sigmoid.
double predict_score(const Ensemble& model, const DataMatrix& data, std::size_t row);
double predict_proba(const Ensemble& model, const DataMatrix& data, std::size_t row);
std::vector<double> predict_proba_all(const Ensemble& model, const DataMatrix& data,
                                      int threads = 1);

void save_model(const Ensemble& model, const std::string& path);
Ensemble load_model(const std::string& path);
std::string model_to_json(const Ensemble& model);
Ensemble model_from_json(const std::string& text);

// Row-major bin codes (n_features x n_rows) used during training; exposed so
// tests can inspect routing.
std::vector<std::uint8_t> bin_rows(const BinMapper& bins, const DataMatrix& data);

} // namespace herdgate::hgbt
