#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "herdgate/hgbt.hpp"
#include "herdgate/records.hpp"

namespace herdgate::evalx {

struct RocPoint {
    double threshold;     // classify positive when score >= threshold
    double sensitivity;
    double specificity;
};

struct RocAnalysis {
    std::vector<RocPoint> points;  // threshold ascending, -inf and +inf sentinels included
    double auc = 0.0;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
};

struct ConfusionMatrix {
    std::int64_t true_pos = 0;
    std::int64_t false_pos = 0;
    std::int64_t true_neg = 0;
    std::int64_t false_neg = 0;

    std::int64_t total() const { return true_pos + false_pos + true_neg + false_neg; }
    double sensitivity() const;   // HSe
    double specificity() const;   // HSp
    double accuracy() const;
};

struct OperatingPoint {
    double threshold = 0.0;
    double sensitivity = 0.0;
    double specificity = 0.0;
};

RocAnalysis roc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels);

// Lowest threshold whose specificity meets the target and whose sensitivity is
// maximal among those.
OperatingPoint threshold_for_specificity(const RocAnalysis& r, double target_specificity);
// Mirror image: highest threshold whose sensitivity meets the target,
// maximizing specificity.
OperatingPoint threshold_for_sensitivity(const RocAnalysis& r, double target_sensitivity);

ConfusionMatrix confusion(const std::vector<double>& scores,
                          const std::vector<std::uint8_t>& labels, double threshold);

struct YearlyRate {
    int year;
    std::int64_t n = 0;
    std::int64_t misclassified = 0;
    double rate = 0.0;
};

std::vector<YearlyRate> yearly_misclassification(const std::vector<int>& years,
                                                 const std::vector<double>& scores,
                                                 const std::vector<std::uint8_t>& labels,
                                                 double threshold);
std::vector<YearlyRate> yearly_misclassification(const std::vector<records::TestRecord>& recs,
                                                 const hgbt::Ensemble& model, double threshold);

struct FeatureImportance {
    std::string feature;
    double mean_drop = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    std::vector<double> drops;  // one per repeat
};

struct ImportanceReport {
    double baseline_accuracy = 0.0;
    int n_repeats = 0;
    std::vector<FeatureImportance> features;  // includes the "control" entry
};

struct ImportanceOptions {
    int n_repeats = 10;
    std::uint64_t seed = 0;
    double threshold = 0.5;
    int threads = 1;
};

// Fisher-style model reliance: columns are permuted on the evaluation data
// and the model is re-scored, never re-trained.
ImportanceReport permutation_importance(const hgbt::Ensemble& model, const DataMatrix& data,
                                        const std::vector<std::uint8_t>& labels,
                                        const ImportanceOptions& opts);

// Variant that re-trains the model on each permuted training set.  Much more
// expensive; kept behind its own entry point.
ImportanceReport permutation_importance_retrain(
    const DataMatrix& train_data, const std::vector<std::uint8_t>& train_labels,
    const DataMatrix& eval_data, const std::vector<std::uint8_t>& eval_labels,
    const hgbt::Hyperparameters& hp, const ImportanceOptions& opts);

struct PracticeRow {
    std::string practice;
    std::int64_t n_tests = 0;
    double mean_herd_size = 0.0;
    double accuracy_sicct = 0.0;
    double p_value_sicct = 1.0;
    double accuracy_model = 0.0;
    double p_value_model = 1.0;
    double accuracy_delta = 0.0;  // model - SICCT
};

struct PracticeReport {
    std::vector<PracticeRow> rows;
    double global_accuracy_sicct = 0.0;
    double global_accuracy_model = 0.0;
    double fraction_outside_expected_sicct = 0.0;  // p < 0.05 under the global rate
    double fraction_outside_expected_model = 0.0;
    double pearson_sicct = 0.0;  // corr(practice accuracy, mean tested herd size)
    double pearson_model = 0.0;
};

PracticeReport practice_analysis(const std::vector<records::TestRecord>& recs,
                                 const std::vector<double>& scores, double threshold);

} // namespace herdgate::evalx
