#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "herdgate/dataset.hpp"
#include "herdgate/date.hpp"
#include "herdgate/error.hpp"

namespace herdgate::records {

enum class PrevResult { clear, not_clear, unknown };
enum class SicctResult { clear, not_clear };
enum class TestType { routine, pre_movement, short_interval, other };
enum class HerdType { dairy, beef, mixed, other };

const char* to_string(PrevResult v);
const char* to_string(SicctResult v);
const char* to_string(TestType v);
const char* to_string(HerdType v);

// One SICCT herd-test event with every risk feature attached.  Optional
// fields carry an explicit presence flag via std::optional.
struct TestRecord {
    std::string test_id;
    std::string herd_id;
    Date test_date;
    int month = 1;
    bool severe_interpretation = false;
    int n_animals_tested = 0;
    std::optional<double> easting;
    std::optional<double> northing;
    PrevResult prev_result_1 = PrevResult::unknown;
    PrevResult prev_result_2 = PrevResult::unknown;
    std::optional<int> days_since_last_test;
    std::optional<int> days_since_last_breakdown;
    int n_prior_ifn_gamma_tests = 0;
    TestType test_type = TestType::routine;
    HerdType herd_type = HerdType::beef;
    // Movement counts over trailing windows; in/out x {90d, 1y, 2y, 4y},
    // plus the "risky" subsets (moves linked to a breakdown within 2 years).
    std::array<int, 4> moves_in{};
    std::array<int, 4> moves_out{};
    std::array<int, 4> risky_moves_in{};
    std::array<int, 4> risky_moves_out{};
    std::optional<int> apha_risk_score;
    std::optional<double> badger_abundance;
    std::optional<std::string> vet_practice;
    std::optional<std::string> tuberculin_batch_bovine;
    std::optional<std::string> tuberculin_batch_avian;
    SicctResult sicct_herd_result = SicctResult::clear;
    bool label_confirmed_breakdown = false;

    void validate(std::size_t row_for_errors = 0) const;
};

struct BreakdownEvent {
    std::string herd_id;
    Date start_date;
    bool confirmed = false;
    std::optional<Date> confirmation_date;  // present iff confirmed

    void validate(std::size_t row_for_errors = 0) const;
};

// Canonical column order of the dataset CSV; the exact header line doubles as
// the schema signature, so any mismatch is rejected as a version mismatch.
const std::vector<std::string>& dataset_columns();

std::vector<TestRecord> load_dataset(const std::string& path);
void save_dataset(const std::vector<TestRecord>& records, const std::string& path);

std::vector<BreakdownEvent> load_breakdowns(const std::string& path);
void save_breakdowns(const std::vector<BreakdownEvent>& events, const std::string& path);

// Gold standard: true iff a confirmed breakdown for the same herd starts
// within [test_date, test_date + 90] (both endpoints included).
inline constexpr int kLabelWindowDays = 90;
std::vector<TestRecord> label_confirmed_breakdowns(std::vector<TestRecord> records,
                                                   const std::vector<BreakdownEvent>& breakdowns);

// --- synthetic data -------------------------------------------------------

struct PracticeEffectConfig {
    double target_pearson_r = -0.4;   // corr(practice accuracy offset, mean herd size)
    double effect_sd = 0.05;          // spread of the accuracy offset across practices
    double mean_herd_size = 100.0;
    double herd_size_spread = 50.0;   // practice-level spread of herd sizes
};

struct SynthConfig {
    std::size_t n_records = 1000;
    std::size_t n_herds = 100;
    std::size_t n_practices = 10;
    Date start_date = Date::from_ymd(2012, 1, 1);
    int span_years = 8;
    double target_prevalence = 0.1;
    double sicct_se = 0.8;            // P(not_clear | label true), before practice offset
    double sicct_sp = 0.98;           // P(clear | label false), before practice offset
    // Effect weight per feature on the latent log-odds risk scale; features
    // are standardized with fixed reference moments (see weightable_features).
    std::vector<std::pair<std::string, double>> effect_weights;
    // Missing fraction per optional field name.
    std::vector<std::pair<std::string, double>> fraction_missing;
    PracticeEffectConfig practice;
    std::uint64_t seed = 0;

    void validate() const;
    double missing_fraction(const std::string& field) const;
};

// Feature names accepted in SynthConfig::effect_weights.
const std::vector<std::string>& weightable_features();

struct PracticeTruth {
    std::string practice_id;
    double size_level = 0.0;       // standardized herd-size niche
    double accuracy_offset = 0.0;  // additive shift applied to se and sp
};

struct GroundTruth {
    std::vector<std::pair<std::string, double>> weights;
    double intercept = 0.0;
    std::vector<double> latent_risk;      // per record, P(label = 1)
    double mean_risk = 0.0;
    double bayes_auc = 0.0;               // AUC of the latent risk against the drawn labels
    std::vector<PracticeTruth> practices;
};

struct SynthResult {
    std::vector<TestRecord> records;
    std::vector<BreakdownEvent> breakdowns;
    GroundTruth truth;
};

SynthResult generate_synthetic(const SynthConfig& config);

SynthConfig synth_config_from_json(const std::string& json_text);

// --- model-ready view ------------------------------------------------------

struct MatrixOptions {
    bool include_control = false;       // append a uniform-noise column named "control"
    std::uint64_t control_seed = 0;
};

// Feature columns in model order (identifiers and the label are excluded).
const std::vector<std::string>& feature_columns();

DataMatrix to_matrix(const std::vector<TestRecord>& records, const MatrixOptions& opts = {});
std::vector<std::uint8_t> labels_of(const std::vector<TestRecord>& records);

} // namespace herdgate::records
