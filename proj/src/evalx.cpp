#include "herdgate/evalx.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "herdgate/parallel.hpp"
#include "herdgate/rng.hpp"
#include "herdgate/stats.hpp"

namespace herdgate::evalx {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double ConfusionMatrix::sensitivity() const {
    const std::int64_t p = true_pos + false_neg;
    return p > 0 ? static_cast<double>(true_pos) / static_cast<double>(p) : 0.0;
}

double ConfusionMatrix::specificity() const {
    const std::int64_t n = true_neg + false_pos;
    return n > 0 ? static_cast<double>(true_neg) / static_cast<double>(n) : 0.0;
}

double ConfusionMatrix::accuracy() const {
    return total() > 0 ? static_cast<double>(true_pos + true_neg) / static_cast<double>(total())
                       : 0.0;
}

RocAnalysis roc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
    require(scores.size() == labels.size(), "roc: scores/labels size mismatch");
    require(!scores.empty(), "roc: empty input");
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        require(std::isfinite(scores[i]), "roc: non-finite score");
        n_pos += labels[i];
    }
    const std::size_t n_neg = scores.size() - n_pos;
    require(n_pos > 0 && n_neg > 0, "roc: both classes must be present");

    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    RocAnalysis out;
    out.n_pos = n_pos;
    out.n_neg = n_neg;
    out.points.push_back({-kInf, 1.0, 0.0});

    // Sweep thresholds upward through the distinct scores; at threshold t the
    // positives are the rows with score >= t.
    std::size_t below_pos = 0, below_neg = 0;  // strictly below the current threshold
    std::size_t i = 0;
    while (i < idx.size()) {
        const double t = scores[idx[i]];
        out.points.push_back({t,
                              static_cast<double>(n_pos - below_pos) / static_cast<double>(n_pos),
                              static_cast<double>(below_neg) / static_cast<double>(n_neg)});
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == t) {
            if (labels[idx[j]]) ++below_pos;
            else ++below_neg;
            ++j;
        }
        i = j;
    }
    out.points.push_back({kInf, 0.0, 1.0});

    // Trapezoid over (FPR, TPR), walking from the all-positive end.
    double auc = 0.0;
    for (std::size_t k = 1; k < out.points.size(); ++k) {
        const double fpr_a = 1.0 - out.points[k - 1].specificity;
        const double fpr_b = 1.0 - out.points[k].specificity;
        const double tpr_a = out.points[k - 1].sensitivity;
        const double tpr_b = out.points[k].sensitivity;
        auc += (fpr_a - fpr_b) * (tpr_a + tpr_b) / 2.0;
    }
    out.auc = auc;
    return out;
}

OperatingPoint threshold_for_specificity(const RocAnalysis& r, double target) {
    require(target >= 0.0 && target < 1.0 + 1e-12, "threshold_for_specificity: bad target");
    // Specificity is non-decreasing in threshold, so the lowest threshold that
    // meets the target also has the maximal sensitivity.
    for (const auto& p : r.points)
        if (p.specificity >= target) return {p.threshold, p.sensitivity, p.specificity};
    throw Error("threshold_for_specificity: target specificity unattainable");
}

OperatingPoint threshold_for_sensitivity(const RocAnalysis& r, double target) {
    require(target >= 0.0 && target < 1.0 + 1e-12, "threshold_for_sensitivity: bad target");
    for (auto it = r.points.rbegin(); it != r.points.rend(); ++it)
        if (it->sensitivity >= target) return {it->threshold, it->sensitivity, it->specificity};
    throw Error("threshold_for_sensitivity: target sensitivity unattainable");
}

ConfusionMatrix confusion(const std::vector<double>& scores,
                          const std::vector<std::uint8_t>& labels, double threshold) {
    require(scores.size() == labels.size(), "confusion: size mismatch");
    ConfusionMatrix m;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] >= threshold;
        if (labels[i]) (pred ? m.true_pos : m.false_neg) += 1;
        else (pred ? m.false_pos : m.true_neg) += 1;
    }
    return m;
}

std::vector<YearlyRate> yearly_misclassification(const std::vector<int>& years,
                                                 const std::vector<double>& scores,
                                                 const std::vector<std::uint8_t>& labels,
                                                 double threshold) {
    require(years.size() == scores.size() && years.size() == labels.size(),
            "yearly_misclassification: size mismatch");
    std::map<int, YearlyRate> by_year;
    for (std::size_t i = 0; i < years.size(); ++i) {
        YearlyRate& y = by_year[years[i]];
        y.year = years[i];
        y.n += 1;
        const bool pred = scores[i] >= threshold;
        if (pred != (labels[i] != 0)) y.misclassified += 1;
    }
    std::vector<YearlyRate> out;
    for (auto& [year, y] : by_year) {
        y.rate = y.n > 0 ? static_cast<double>(y.misclassified) / static_cast<double>(y.n) : 0.0;
        out.push_back(y);
    }
    return out;
}

std::vector<YearlyRate> yearly_misclassification(const std::vector<records::TestRecord>& recs,
                                                 const hgbt::Ensemble& model, double threshold) {
    records::MatrixOptions opts;
    for (const auto& f : model.bins.features)
        if (f.name == "control") opts.include_control = true;
    const DataMatrix m = records::to_matrix(recs, opts);
    const std::vector<double> scores = hgbt::predict_proba_all(model, m);
    std::vector<int> years(recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) years[i] = recs[i].test_date.year();
    return yearly_misclassification(years, scores, records::labels_of(recs), threshold);
}

namespace {

double accuracy_at(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels,
                   double threshold) {
    std::int64_t correct = 0;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if ((scores[i] >= threshold) == (labels[i] != 0)) ++correct;
    return static_cast<double>(correct) / static_cast<double>(scores.size());
}

void permute_column(Column& col, Rng& rng) {
    std::vector<std::size_t> perm(col.size());
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    Column shuffled = col;
    for (std::size_t i = 0; i < perm.size(); ++i) {
        shuffled.present[i] = col.present[perm[i]];
        if (col.kind == ColumnKind::numeric) shuffled.num[i] = col.num[perm[i]];
        else shuffled.cat[i] = col.cat[perm[i]];
    }
    col = std::move(shuffled);
}

FeatureImportance summarize_drops(const std::string& name, std::vector<double> drops) {
    FeatureImportance fi;
    fi.feature = name;
    fi.mean_drop = stats::mean(drops);
    const double se =
        stats::sample_sd(drops) / std::sqrt(static_cast<double>(std::max<std::size_t>(drops.size(), 1)));
    fi.ci_lo = fi.mean_drop - 1.96 * se;
    fi.ci_hi = fi.mean_drop + 1.96 * se;
    fi.drops = std::move(drops);
    return fi;
}

} // namespace

ImportanceReport permutation_importance(const hgbt::Ensemble& model, const DataMatrix& data,
                                        const std::vector<std::uint8_t>& labels,
                                        const ImportanceOptions& opts) {
    require(opts.n_repeats >= 2, "permutation_importance: n_repeats must be >= 2");
    require(data.n_rows == labels.size(), "permutation_importance: size mismatch");

    // The control column is part of the evaluation whether or not the model
    // was trained with one; an untrained control scores exactly zero.
    DataMatrix work = data;
    if (work.find("control") == nullptr) {
        Column control;
        control.name = "control";
        control.kind = ColumnKind::numeric;
        control.present.assign(work.n_rows, 1);
        control.num.resize(work.n_rows);
        Rng rng(derive_seed(opts.seed, "importance-control"));
        for (std::size_t i = 0; i < work.n_rows; ++i) control.num[i] = rng.uniform01();
        work.cols.push_back(std::move(control));
    }

    ImportanceReport report;
    report.n_repeats = opts.n_repeats;
    report.baseline_accuracy =
        accuracy_at(hgbt::predict_proba_all(model, work, opts.threads), labels, opts.threshold);

    std::vector<std::string> eval_features;
    for (const auto& f : model.bins.features) eval_features.push_back(f.name);
    if (std::find(eval_features.begin(), eval_features.end(), "control") == eval_features.end())
        eval_features.push_back("control");

    struct Job {
        std::size_t feature_idx;
        int repeat;
    };
    std::vector<Job> jobs;
    for (std::size_t f = 0; f < eval_features.size(); ++f)
        for (int r = 0; r < opts.n_repeats; ++r) jobs.push_back({f, r});
    std::vector<double> drop(jobs.size(), 0.0);

    parallel_for(jobs.size(), opts.threads, [&](std::size_t j) {
        const auto& job = jobs[j];
        const std::string& name = eval_features[job.feature_idx];
        DataMatrix permuted = work;
        Column* col = permuted.find(name);
        require(col != nullptr, "permutation_importance: missing column '" + name + "'");
        Rng rng(derive_seed(opts.seed, "importance", job.feature_idx * 1000003ULL +
                                                         static_cast<std::uint64_t>(job.repeat)));
        permute_column(*col, rng);
        const double acc = accuracy_at(hgbt::predict_proba_all(model, permuted, 1), labels,
                                       opts.threshold);
        drop[j] = report.baseline_accuracy - acc;
    });

    for (std::size_t f = 0; f < eval_features.size(); ++f) {
        std::vector<double> drops;
        for (std::size_t j = 0; j < jobs.size(); ++j)
            if (jobs[j].feature_idx == f) drops.push_back(drop[j]);
        report.features.push_back(summarize_drops(eval_features[f], std::move(drops)));
    }
    return report;
}

ImportanceReport permutation_importance_retrain(
    const DataMatrix& train_data, const std::vector<std::uint8_t>& train_labels,
    const DataMatrix& eval_data, const std::vector<std::uint8_t>& eval_labels,
    const hgbt::Hyperparameters& hp, const ImportanceOptions& opts) {
    require(opts.n_repeats >= 2, "permutation_importance_retrain: n_repeats must be >= 2");

    const hgbt::Ensemble baseline = hgbt::train(train_data, train_labels, hp, opts.seed);
    ImportanceReport report;
    report.n_repeats = opts.n_repeats;
    report.baseline_accuracy =
        accuracy_at(hgbt::predict_proba_all(baseline, eval_data, opts.threads), eval_labels,
                    opts.threshold);

    std::vector<std::string> eval_features;
    for (const auto& col : train_data.cols) eval_features.push_back(col.name);

    struct Job {
        std::size_t feature_idx;
        int repeat;
    };
    std::vector<Job> jobs;
    for (std::size_t f = 0; f < eval_features.size(); ++f)
        for (int r = 0; r < opts.n_repeats; ++r) jobs.push_back({f, r});
    std::vector<double> drop(jobs.size(), 0.0);

    parallel_for(jobs.size(), opts.threads, [&](std::size_t j) {
        const auto& job = jobs[j];
        const std::string& name = eval_features[job.feature_idx];
        DataMatrix permuted = train_data;
        Column* col = permuted.find(name);
        Rng rng(derive_seed(opts.seed, "importance-retrain",
                            job.feature_idx * 1000003ULL + static_cast<std::uint64_t>(job.repeat)));
        permute_column(*col, rng);
        const hgbt::Ensemble m = hgbt::train(permuted, train_labels, hp, opts.seed);
        const double acc =
            accuracy_at(hgbt::predict_proba_all(m, eval_data, 1), eval_labels, opts.threshold);
        drop[j] = report.baseline_accuracy - acc;
    });

    for (std::size_t f = 0; f < eval_features.size(); ++f) {
        std::vector<double> drops;
        for (std::size_t j = 0; j < jobs.size(); ++j)
            if (jobs[j].feature_idx == f) drops.push_back(drop[j]);
        report.features.push_back(summarize_drops(eval_features[f], std::move(drops)));
    }
    return report;
}

PracticeReport practice_analysis(const std::vector<records::TestRecord>& recs,
                                 const std::vector<double>& scores, double threshold) {
    require(recs.size() == scores.size(), "practice_analysis: size mismatch");

    struct Agg {
        std::int64_t n = 0;
        std::int64_t correct_sicct = 0;
        std::int64_t correct_model = 0;
        double herd_size_sum = 0.0;
    };
    std::map<std::string, Agg> agg;
    std::int64_t total_n = 0, total_sicct = 0, total_model = 0;
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto& r = recs[i];
        if (!r.vet_practice) continue;
        const bool label = r.label_confirmed_breakdown;
        const bool sicct_pos = r.sicct_herd_result == records::SicctResult::not_clear;
        const bool model_pos = scores[i] >= threshold;
        Agg& a = agg[*r.vet_practice];
        a.n += 1;
        a.correct_sicct += sicct_pos == label ? 1 : 0;
        a.correct_model += model_pos == label ? 1 : 0;
        a.herd_size_sum += r.n_animals_tested;
        total_n += 1;
        total_sicct += sicct_pos == label ? 1 : 0;
        total_model += model_pos == label ? 1 : 0;
    }
    require(total_n > 0, "practice_analysis: no records carry a vet practice");

    PracticeReport rep;
    rep.global_accuracy_sicct = static_cast<double>(total_sicct) / static_cast<double>(total_n);
    rep.global_accuracy_model = static_cast<double>(total_model) / static_cast<double>(total_n);

    std::vector<double> acc_s, acc_m, size_mean;
    std::int64_t outside_s = 0, outside_m = 0;
    for (const auto& [practice, a] : agg) {
        PracticeRow row;
        row.practice = practice;
        row.n_tests = a.n;
        row.mean_herd_size = a.herd_size_sum / static_cast<double>(a.n);
        row.accuracy_sicct = static_cast<double>(a.correct_sicct) / static_cast<double>(a.n);
        row.accuracy_model = static_cast<double>(a.correct_model) / static_cast<double>(a.n);
        row.accuracy_delta = row.accuracy_model - row.accuracy_sicct;
        row.p_value_sicct =
            stats::binom_test_two_sided(a.correct_sicct, a.n, rep.global_accuracy_sicct);
        row.p_value_model =
            stats::binom_test_two_sided(a.correct_model, a.n, rep.global_accuracy_model);
        if (row.p_value_sicct < 0.05) ++outside_s;
        if (row.p_value_model < 0.05) ++outside_m;
        acc_s.push_back(row.accuracy_sicct);
        acc_m.push_back(row.accuracy_model);
        size_mean.push_back(row.mean_herd_size);
        rep.rows.push_back(std::move(row));
    }
    const double n_prac = static_cast<double>(rep.rows.size());
    rep.fraction_outside_expected_sicct = static_cast<double>(outside_s) / n_prac;
    rep.fraction_outside_expected_model = static_cast<double>(outside_m) / n_prac;
    auto safe_pearson = [](const std::vector<double>& a, const std::vector<double>& b) {
        if (a.size() < 2) return 0.0;
        try {
            return stats::pearson_r(a, b);
        } catch (const Error&) {
            return 0.0;  // constant input; correlation undefined
        }
    };
    rep.pearson_sicct = safe_pearson(acc_s, size_mean);
    rep.pearson_model = safe_pearson(acc_m, size_mean);
    return rep;
}

} // namespace herdgate::evalx
