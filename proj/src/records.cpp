#include "herdgate/records.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include <json.hpp>

#include "herdgate/csv.hpp"
#include "herdgate/rng.hpp"
#include "herdgate/stats.hpp"

namespace herdgate::records {

using nlohmann::json;

const char* to_string(PrevResult v) {
    switch (v) {
        case PrevResult::clear: return "clear";
        case PrevResult::not_clear: return "not_clear";
        default: return "unknown";
    }
}

const char* to_string(SicctResult v) {
    return v == SicctResult::clear ? "clear" : "not_clear";
}

const char* to_string(TestType v) {
    switch (v) {
        case TestType::routine: return "routine";
        case TestType::pre_movement: return "pre_movement";
        case TestType::short_interval: return "short_interval";
        default: return "other";
    }
}

const char* to_string(HerdType v) {
    switch (v) {
        case HerdType::dairy: return "dairy";
        case HerdType::beef: return "beef";
        case HerdType::mixed: return "mixed";
        default: return "other";
    }
}

namespace {

PrevResult parse_prev(std::string_view s, const std::string& ctx) {
    if (s == "clear") return PrevResult::clear;
    if (s == "not_clear") return PrevResult::not_clear;
    if (s == "unknown") return PrevResult::unknown;
    throw Error(ctx + ": bad previous-result value '" + std::string(s) + "'");
}

SicctResult parse_sicct(std::string_view s, const std::string& ctx) {
    if (s == "clear") return SicctResult::clear;
    if (s == "not_clear") return SicctResult::not_clear;
    throw Error(ctx + ": bad SICCT result '" + std::string(s) + "'");
}

TestType parse_test_type(std::string_view s, const std::string& ctx) {
    if (s == "routine") return TestType::routine;
    if (s == "pre_movement") return TestType::pre_movement;
    if (s == "short_interval") return TestType::short_interval;
    if (s == "other") return TestType::other;
    throw Error(ctx + ": bad test type '" + std::string(s) + "'");
}

HerdType parse_herd_type(std::string_view s, const std::string& ctx) {
    if (s == "dairy") return HerdType::dairy;
    if (s == "beef") return HerdType::beef;
    if (s == "mixed") return HerdType::mixed;
    if (s == "other") return HerdType::other;
    throw Error(ctx + ": bad herd type '" + std::string(s) + "'");
}

bool parse_bool01(std::string_view s, const std::string& ctx) {
    if (s == "0") return false;
    if (s == "1") return true;
    throw Error(ctx + ": bad boolean '" + std::string(s) + "' (expected 0 or 1)");
}

const char* kWindowSuffix[4] = {"90d", "1y", "2y", "4y"};

} // namespace

const std::vector<std::string>& dataset_columns() {
    static const std::vector<std::string> cols = [] {
        std::vector<std::string> c = {
            "test_id", "herd_id", "test_date", "month", "severe_interpretation",
            "n_animals_tested", "easting", "northing", "prev_result_1", "prev_result_2",
            "days_since_last_test", "days_since_last_breakdown", "n_prior_ifn_gamma_tests",
            "test_type", "herd_type"};
        for (const char* dir : {"in", "out"})
            for (const char* w : kWindowSuffix) c.push_back(std::string("moves_") + dir + "_" + w);
        for (const char* dir : {"in", "out"})
            for (const char* w : kWindowSuffix)
                c.push_back(std::string("risky_moves_") + dir + "_" + w);
        c.insert(c.end(), {"apha_risk_score", "badger_abundance", "vet_practice",
                           "tuberculin_batch_bovine", "tuberculin_batch_avian",
                           "sicct_herd_result", "label_confirmed_breakdown"});
        return c;
    }();
    return cols;
}

void TestRecord::validate(std::size_t row) const {
    const std::string ctx = "record " + (row ? "at row " + std::to_string(row) : test_id);
    require(month >= 1 && month <= 12, ctx + ": field 'month' out of range");
    require(n_animals_tested >= 0, ctx + ": field 'n_animals_tested' negative");
    require(n_prior_ifn_gamma_tests >= 0, ctx + ": field 'n_prior_ifn_gamma_tests' negative");
    auto check_windows = [&](const std::array<int, 4>& w, const char* name) {
        for (int k = 0; k < 4; ++k) {
            require(w[k] >= 0, ctx + ": field '" + name + "' negative");
            if (k > 0)
                require(w[k - 1] <= w[k],
                        ctx + ": field '" + name + "' violates window monotonicity");
        }
    };
    check_windows(moves_in, "moves_in");
    check_windows(moves_out, "moves_out");
    check_windows(risky_moves_in, "risky_moves_in");
    check_windows(risky_moves_out, "risky_moves_out");
    if (days_since_last_test) require(*days_since_last_test >= 0,
                                      ctx + ": field 'days_since_last_test' negative");
    if (days_since_last_breakdown) require(*days_since_last_breakdown >= 0,
                                           ctx + ": field 'days_since_last_breakdown' negative");
}

void BreakdownEvent::validate(std::size_t row) const {
    const std::string ctx = "breakdown" + (row ? " at row " + std::to_string(row) : "");
    require(confirmed == confirmation_date.has_value(),
            ctx + ": field 'confirmation_date' must be present iff confirmed");
    if (confirmation_date)
        require(*confirmation_date >= start_date,
                ctx + ": field 'confirmation_date' precedes start_date");
}

namespace {

std::string opt_int_cell(const std::optional<int>& v) {
    return v ? csv::format_int(*v) : std::string();
}

std::string opt_double_cell(const std::optional<double>& v) {
    return v ? csv::format_double(*v) : std::string();
}

std::string opt_str_cell(const std::optional<std::string>& v) {
    return v ? *v : std::string();
}

} // namespace

void save_dataset(const std::vector<TestRecord>& records, const std::string& path) {
    csv::Writer w(path);
    w.row(dataset_columns());
    for (const auto& r : records) {
        std::vector<std::string> cells;
        cells.reserve(dataset_columns().size());
        cells.push_back(r.test_id);
        cells.push_back(r.herd_id);
        cells.push_back(r.test_date.to_string());
        cells.push_back(csv::format_int(r.month));
        cells.push_back(r.severe_interpretation ? "1" : "0");
        cells.push_back(csv::format_int(r.n_animals_tested));
        cells.push_back(opt_double_cell(r.easting));
        cells.push_back(opt_double_cell(r.northing));
        cells.push_back(to_string(r.prev_result_1));
        cells.push_back(to_string(r.prev_result_2));
        cells.push_back(opt_int_cell(r.days_since_last_test));
        cells.push_back(opt_int_cell(r.days_since_last_breakdown));
        cells.push_back(csv::format_int(r.n_prior_ifn_gamma_tests));
        cells.push_back(to_string(r.test_type));
        cells.push_back(to_string(r.herd_type));
        for (int k = 0; k < 4; ++k) cells.push_back(csv::format_int(r.moves_in[k]));
        for (int k = 0; k < 4; ++k) cells.push_back(csv::format_int(r.moves_out[k]));
        for (int k = 0; k < 4; ++k) cells.push_back(csv::format_int(r.risky_moves_in[k]));
        for (int k = 0; k < 4; ++k) cells.push_back(csv::format_int(r.risky_moves_out[k]));
        cells.push_back(opt_int_cell(r.apha_risk_score));
        cells.push_back(opt_double_cell(r.badger_abundance));
        cells.push_back(opt_str_cell(r.vet_practice));
        cells.push_back(opt_str_cell(r.tuberculin_batch_bovine));
        cells.push_back(opt_str_cell(r.tuberculin_batch_avian));
        cells.push_back(to_string(r.sicct_herd_result));
        cells.push_back(r.label_confirmed_breakdown ? "1" : "0");
        w.row(cells);
    }
    w.close();
}

std::vector<TestRecord> load_dataset(const std::string& path) {
    csv::Table t = csv::read_file(path);
    require(t.header == dataset_columns(),
            "'" + path + "': dataset schema mismatch (unexpected header row; "
            "this file was written by an incompatible version)");
    std::vector<TestRecord> out;
    out.reserve(t.rows.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& cells = t.rows[i];
        const std::size_t row_no = i + 2;  // 1-based, after the header line
        const std::string rowctx = "'" + path + "' row " + std::to_string(row_no);
        require(cells.size() == dataset_columns().size(),
                rowctx + ": expected " + std::to_string(dataset_columns().size()) +
                    " cells, found " + std::to_string(cells.size()));
        auto ctx = [&](const char* field) { return rowctx + " field '" + std::string(field) + "'"; };
        auto opt_i = [&](const std::string& s, const char* field) -> std::optional<int> {
            if (s.empty()) return std::nullopt;
            return static_cast<int>(csv::parse_int(s, ctx(field)));
        };
        auto opt_d = [&](const std::string& s, const char* field) -> std::optional<double> {
            if (s.empty()) return std::nullopt;
            return csv::parse_double(s, ctx(field));
        };
        auto opt_s = [&](const std::string& s) -> std::optional<std::string> {
            if (s.empty()) return std::nullopt;
            return s;
        };

        TestRecord r;
        std::size_t c = 0;
        r.test_id = cells[c++];
        r.herd_id = cells[c++];
        try {
            r.test_date = Date::parse(cells[c]);
        } catch (const Error& e) {
            throw Error(ctx("test_date") + ": " + e.what());
        }
        ++c;
        r.month = static_cast<int>(csv::parse_int(cells[c], ctx("month"))); ++c;
        r.severe_interpretation = parse_bool01(cells[c], ctx("severe_interpretation")); ++c;
        r.n_animals_tested = static_cast<int>(csv::parse_int(cells[c], ctx("n_animals_tested"))); ++c;
        r.easting = opt_d(cells[c], "easting"); ++c;
        r.northing = opt_d(cells[c], "northing"); ++c;
        r.prev_result_1 = parse_prev(cells[c], ctx("prev_result_1")); ++c;
        r.prev_result_2 = parse_prev(cells[c], ctx("prev_result_2")); ++c;
        r.days_since_last_test = opt_i(cells[c], "days_since_last_test"); ++c;
        r.days_since_last_breakdown = opt_i(cells[c], "days_since_last_breakdown"); ++c;
        r.n_prior_ifn_gamma_tests =
            static_cast<int>(csv::parse_int(cells[c], ctx("n_prior_ifn_gamma_tests"))); ++c;
        r.test_type = parse_test_type(cells[c], ctx("test_type")); ++c;
        r.herd_type = parse_herd_type(cells[c], ctx("herd_type")); ++c;
        for (int k = 0; k < 4; ++k) {
            r.moves_in[k] = static_cast<int>(csv::parse_int(cells[c], ctx("moves_in"))); ++c;
        }
        for (int k = 0; k < 4; ++k) {
            r.moves_out[k] = static_cast<int>(csv::parse_int(cells[c], ctx("moves_out"))); ++c;
        }
        for (int k = 0; k < 4; ++k) {
            r.risky_moves_in[k] =
                static_cast<int>(csv::parse_int(cells[c], ctx("risky_moves_in"))); ++c;
        }
        for (int k = 0; k < 4; ++k) {
            r.risky_moves_out[k] =
                static_cast<int>(csv::parse_int(cells[c], ctx("risky_moves_out"))); ++c;
        }
        r.apha_risk_score = opt_i(cells[c], "apha_risk_score"); ++c;
        r.badger_abundance = opt_d(cells[c], "badger_abundance"); ++c;
        r.vet_practice = opt_s(cells[c]); ++c;
        r.tuberculin_batch_bovine = opt_s(cells[c]); ++c;
        r.tuberculin_batch_avian = opt_s(cells[c]); ++c;
        r.sicct_herd_result = parse_sicct(cells[c], ctx("sicct_herd_result")); ++c;
        r.label_confirmed_breakdown = parse_bool01(cells[c], ctx("label_confirmed_breakdown")); ++c;
        r.validate(row_no);
        out.push_back(std::move(r));
    }
    return out;
}

namespace {
const std::vector<std::string> kBreakdownColumns = {"herd_id", "start_date", "confirmed",
                                                    "confirmation_date"};
}

void save_breakdowns(const std::vector<BreakdownEvent>& events, const std::string& path) {
    csv::Writer w(path);
    w.row(kBreakdownColumns);
    for (const auto& e : events) {
        w.row({e.herd_id, e.start_date.to_string(), e.confirmed ? "1" : "0",
               e.confirmation_date ? e.confirmation_date->to_string() : std::string()});
    }
    w.close();
}

std::vector<BreakdownEvent> load_breakdowns(const std::string& path) {
    csv::Table t = csv::read_file(path);
    require(t.header == kBreakdownColumns,
            "'" + path + "': breakdown schema mismatch (unexpected header row)");
    std::vector<BreakdownEvent> out;
    out.reserve(t.rows.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& cells = t.rows[i];
        const std::size_t row_no = i + 2;
        const std::string rowctx = "'" + path + "' row " + std::to_string(row_no);
        require(cells.size() == kBreakdownColumns.size(), rowctx + ": wrong cell count");
        BreakdownEvent e;
        e.herd_id = cells[0];
        e.start_date = Date::parse(cells[1]);
        e.confirmed = parse_bool01(cells[2], rowctx + " field 'confirmed'");
        if (!cells[3].empty()) e.confirmation_date = Date::parse(cells[3]);
        e.validate(row_no);
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<TestRecord> label_confirmed_breakdowns(std::vector<TestRecord> records,
                                                   const std::vector<BreakdownEvent>& breakdowns) {
    std::map<std::string, std::vector<std::int32_t>> confirmed_starts;
    for (const auto& b : breakdowns)
        if (b.confirmed) confirmed_starts[b.herd_id].push_back(b.start_date.days_since_epoch());
    for (auto& [herd, days] : confirmed_starts) std::sort(days.begin(), days.end());

    for (auto& r : records) {
        r.label_confirmed_breakdown = false;
        auto it = confirmed_starts.find(r.herd_id);
        if (it == confirmed_starts.end()) continue;
        const std::int32_t lo = r.test_date.days_since_epoch();
        auto pos = std::lower_bound(it->second.begin(), it->second.end(), lo);
        if (pos != it->second.end() && *pos <= lo + kLabelWindowDays)
            r.label_confirmed_breakdown = true;
    }
    return records;
}

// --- synthetic generation ---------------------------------------------------

namespace {

const std::vector<std::string> kOptionalFields = {
    "easting", "northing", "days_since_last_test", "days_since_last_breakdown",
    "apha_risk_score", "badger_abundance", "vet_practice", "tuberculin_batch_bovine",
    "tuberculin_batch_avian"};

// Cumulative movement-count means per window (Poisson increments).
const double kMovesInMean[4] = {3.0, 9.0, 15.0, 24.0};
const double kMovesOutMean[4] = {2.0, 6.0, 10.0, 16.0};
const double kRiskyFraction = 0.15;

struct Moments {
    double mu, sigma;
};

Moments reference_moments(const std::string& feature, const SynthConfig& cfg) {
    if (feature == "month") return {6.5, std::sqrt(143.0 / 12.0)};
    if (feature == "n_animals_tested") {
        const double s = cfg.practice.herd_size_spread;
        return {cfg.practice.mean_herd_size, std::sqrt(1.25 * s * s + 121.0 / 12.0)};
    }
    if (feature == "easting" || feature == "northing")
        return {350000.0, 500000.0 / std::sqrt(12.0)};
    if (feature == "days_since_last_test") return {315.0, std::sqrt((231.0 * 231.0 - 1) / 12.0)};
    if (feature == "days_since_last_breakdown") return {690.0, 600.0};
    if (feature == "n_prior_ifn_gamma_tests") return {0.5, std::sqrt(0.5)};
    if (feature == "apha_risk_score") return {3.0, std::sqrt(2.0)};
    if (feature == "badger_abundance") return {2.0, 0.7};
    for (int dir = 0; dir < 2; ++dir) {
        const std::string base = dir == 0 ? "moves_in_" : "moves_out_";
        const double* means = dir == 0 ? kMovesInMean : kMovesOutMean;
        for (int k = 0; k < 4; ++k) {
            if (feature == base + kWindowSuffix[k]) return {means[k], std::sqrt(means[k])};
            if (feature == "risky_" + base + kWindowSuffix[k])
                return {means[k] * kRiskyFraction, std::sqrt(means[k] * kRiskyFraction)};
        }
    }
    throw Error("no reference moments for feature '" + feature + "'");
}

// AUC of scores against binary labels via the rank method (ties get half
// credit).  Local copy so this module does not depend on evalx.
double rank_auc(const std::vector<double>& score, const std::vector<std::uint8_t>& label) {
    std::vector<std::size_t> idx(score.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return score[a] < score[b];
    });
    double n_pos = 0, n_neg = 0, rank_sum_pos = 0;
    std::size_t i = 0;
    double rank = 1.0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j < idx.size() && score[idx[j]] == score[idx[i]]) ++j;
        const double mid_rank = rank + static_cast<double>(j - i - 1) / 2.0;
        for (std::size_t k = i; k < j; ++k) {
            if (label[idx[k]]) {
                n_pos += 1;
                rank_sum_pos += mid_rank;
            } else {
                n_neg += 1;
            }
        }
        rank += static_cast<double>(j - i);
        i = j;
    }
    if (n_pos == 0 || n_neg == 0) return 0.5;
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg);
}

struct HerdTruth {
    std::string id;
    std::size_t practice = 0;
    HerdType type = HerdType::beef;
    double easting = 0, northing = 0;
    double badger = 0;
    int apha = 3;
    int size = 0;
};

} // namespace

const std::vector<std::string>& weightable_features() {
    static const std::vector<std::string> feats = [] {
        std::vector<std::string> f = {"month", "n_animals_tested", "easting", "northing",
                                      "days_since_last_test", "days_since_last_breakdown",
                                      "n_prior_ifn_gamma_tests"};
        for (const char* dir : {"in", "out"})
            for (const char* w : kWindowSuffix) f.push_back(std::string("moves_") + dir + "_" + w);
        for (const char* dir : {"in", "out"})
            for (const char* w : kWindowSuffix)
                f.push_back(std::string("risky_moves_") + dir + "_" + w);
        f.push_back("apha_risk_score");
        f.push_back("badger_abundance");
        return f;
    }();
    return feats;
}

double SynthConfig::missing_fraction(const std::string& field) const {
    for (const auto& [name, frac] : fraction_missing)
        if (name == field) return frac;
    return 0.0;
}

void SynthConfig::validate() const {
    require(n_herds >= 1, "SynthConfig: n_herds must be >= 1");
    require(n_records >= n_herds, "SynthConfig: n_records must be >= n_herds");
    require(n_practices >= 1, "SynthConfig: n_practices must be >= 1");
    require(span_years >= 1, "SynthConfig: span_years must be >= 1");
    bool any_weight = false;
    for (const auto& [name, w] : effect_weights) {
        bool known = false;
        for (const auto& f : weightable_features()) known = known || f == name;
        require(known, "SynthConfig: unknown effect-weight feature '" + name + "'");
        if (w != 0.0) any_weight = true;
    }
    if (!any_weight && target_prevalence == 0.0)
        throw Error("SynthConfig: degenerate configuration — zero effect weights and zero "
                    "prevalence requested simultaneously");
    require(target_prevalence > 0.0 && target_prevalence < 1.0,
            "SynthConfig: target_prevalence must be in (0,1)");
    require(sicct_se > 0.0 && sicct_se < 1.0 && sicct_sp > 0.0 && sicct_sp < 1.0,
            "SynthConfig: sicct_se/sicct_sp must be in (0,1)");
    for (const auto& [name, frac] : fraction_missing) {
        bool known = false;
        for (const auto& f : kOptionalFields) known = known || f == name;
        require(known, "SynthConfig: '" + name + "' is not an optional field");
        require(frac >= 0.0 && frac <= 1.0,
                "SynthConfig: fraction_missing for '" + name + "' out of [0,1]");
    }
    require(practice.herd_size_spread >= 0.0, "SynthConfig: herd_size_spread negative");
    require(practice.target_pearson_r >= -1.0 && practice.target_pearson_r <= 1.0,
            "SynthConfig: target_pearson_r out of [-1,1]");
}

SynthResult generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();

    // Practice-level structure: standardized size niche z and an accuracy
    // offset delta with exact realized correlation target_pearson_r to z.
    const std::size_t n_prac = cfg.n_practices;
    std::vector<double> prac_z(n_prac, 0.0), prac_delta(n_prac, 0.0);
    {
        Rng rng(derive_seed(cfg.seed, "practices"));
        std::vector<double> raw_z(n_prac), raw_e(n_prac);
        for (std::size_t j = 0; j < n_prac; ++j) raw_z[j] = rng.normal();
        for (std::size_t j = 0; j < n_prac; ++j) raw_e[j] = rng.normal();
        if (n_prac >= 3) {
            auto standardize = [](std::vector<double>& v) {
                const double m = stats::mean(v);
                for (auto& x : v) x -= m;
                double sd = 0;
                for (auto x : v) sd += x * x;
                sd = std::sqrt(sd / static_cast<double>(v.size() - 1));
                if (sd > 0)
                    for (auto& x : v) x /= sd;
            };
            standardize(raw_z);
            // Orthogonalize the noise against z in the realized sample, so the
            // constructed correlation is exact, not just in expectation.
            double zz = 0, ze = 0;
            for (std::size_t j = 0; j < n_prac; ++j) {
                zz += raw_z[j] * raw_z[j];
                ze += raw_z[j] * raw_e[j];
            }
            for (std::size_t j = 0; j < n_prac; ++j) raw_e[j] -= (ze / zz) * raw_z[j];
            standardize(raw_e);
            const double r = cfg.practice.target_pearson_r;
            for (std::size_t j = 0; j < n_prac; ++j) {
                prac_z[j] = raw_z[j];
                prac_delta[j] =
                    cfg.practice.effect_sd * (r * raw_z[j] + std::sqrt(1.0 - r * r) * raw_e[j]);
            }
        }
    }

    auto practice_id = [](std::size_t j) {
        char buf[24];
        std::snprintf(buf, sizeof(buf), "p%03zu", j + 1);
        return std::string(buf);
    };

    // Herd-level attributes.
    std::vector<HerdTruth> herds(cfg.n_herds);
    std::vector<std::string> tb_bovine_pool, tb_avian_pool;
    for (int k = 0; k < 24; ++k) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "tb-b-%02d", k + 1);
        tb_bovine_pool.emplace_back(buf);
        std::snprintf(buf, sizeof(buf), "tb-a-%02d", k + 1);
        tb_avian_pool.emplace_back(buf);
    }
    for (std::size_t h = 0; h < cfg.n_herds; ++h) {
        Rng rng(derive_seed(cfg.seed, "herd", h));
        HerdTruth& ht = herds[h];
        char buf[24];
        std::snprintf(buf, sizeof(buf), "h%05zu", h + 1);
        ht.id = buf;
        ht.practice = h % n_prac;
        const double u = rng.uniform01();
        ht.type = u < 0.35   ? HerdType::dairy
                  : u < 0.75 ? HerdType::beef
                  : u < 0.95 ? HerdType::mixed
                             : HerdType::other;
        ht.easting = rng.uniform(100000.0, 600000.0);
        ht.northing = rng.uniform(100000.0, 600000.0);
        ht.badger = std::max(0.01, rng.normal(2.0, 0.7));
        ht.apha = static_cast<int>(rng.uniform_int(1, 5));
        const double size = cfg.practice.mean_herd_size +
                            cfg.practice.herd_size_spread * prac_z[ht.practice] +
                            rng.normal(0.0, cfg.practice.herd_size_spread / 2.0);
        ht.size = std::max(5, static_cast<int>(std::lround(size)));
    }

    // Per-herd chronological test schedules with covariates.  Same-herd tests
    // are at least 200 days apart, which keeps every 90-day label window
    // disjoint from its neighbours: relabelling the emitted records against
    // the emitted breakdown list reproduces the drawn labels exactly.
    struct ProtoRecord {
        TestRecord rec;
        std::size_t herd_idx = 0;
        int seq = 0;
    };
    std::vector<ProtoRecord> protos;
    protos.reserve(cfg.n_records + cfg.n_herds);
    const std::size_t per_herd =
        (cfg.n_records + cfg.n_herds - 1) / cfg.n_herds + 2;
    for (std::size_t h = 0; h < cfg.n_herds; ++h) {
        Rng rng(derive_seed(cfg.seed, "tests", h));
        const HerdTruth& ht = herds[h];
        Date date = cfg.start_date + static_cast<int>(rng.uniform_int(0, 364));
        std::optional<int> last_gap;
        for (std::size_t k = 0; k < per_herd; ++k) {
            ProtoRecord p;
            p.herd_idx = h;
            p.seq = static_cast<int>(k);
            TestRecord& r = p.rec;
            r.herd_id = ht.id;
            r.test_date = date;
            r.month = date.month();
            const double tu = rng.uniform01();
            r.test_type = tu < 0.70   ? TestType::routine
                          : tu < 0.85 ? TestType::pre_movement
                          : tu < 0.95 ? TestType::short_interval
                                      : TestType::other;
            r.severe_interpretation = r.test_type == TestType::short_interval;
            r.herd_type = ht.type;
            r.n_animals_tested = std::max(1, ht.size + static_cast<int>(rng.uniform_int(-5, 5)));
            r.easting = ht.easting;
            r.northing = ht.northing;
            r.badger_abundance = ht.badger;
            r.apha_risk_score = ht.apha;
            r.vet_practice = practice_id(ht.practice);
            r.tuberculin_batch_bovine = tb_bovine_pool[rng.below(tb_bovine_pool.size())];
            r.tuberculin_batch_avian = tb_avian_pool[rng.below(tb_avian_pool.size())];
            r.days_since_last_test = last_gap;
            // Proxy draw, independent of the realized breakdown history.
            if (rng.uniform01() < 0.35)
                r.days_since_last_breakdown =
                    90 + static_cast<int>(std::floor(-600.0 * std::log(1.0 - rng.uniform01())));
            r.n_prior_ifn_gamma_tests = static_cast<int>(rng.poisson(0.5));
            auto windows = [&](const double* means, std::array<int, 4>& total,
                               std::array<int, 4>& risky) {
                int cum = 0, cum_risky = 0;
                double prev = 0.0;
                for (int k2 = 0; k2 < 4; ++k2) {
                    const long long inc = rng.poisson(means[k2] - prev);
                    prev = means[k2];
                    const long long risky_inc = rng.binomial(inc, kRiskyFraction);
                    cum += static_cast<int>(inc);
                    cum_risky += static_cast<int>(risky_inc);
                    total[k2] = cum;
                    risky[k2] = cum_risky;
                }
            };
            windows(kMovesInMean, r.moves_in, r.risky_moves_in);
            windows(kMovesOutMean, r.moves_out, r.risky_moves_out);
            protos.push_back(std::move(p));
            const int gap = 200 + static_cast<int>(rng.uniform_int(0, 230));
            last_gap = gap;
            date = date + gap;
        }
    }

    std::sort(protos.begin(), protos.end(), [](const ProtoRecord& a, const ProtoRecord& b) {
        if (a.rec.test_date != b.rec.test_date) return a.rec.test_date < b.rec.test_date;
        if (a.rec.herd_id != b.rec.herd_id) return a.rec.herd_id < b.rec.herd_id;
        return a.seq < b.seq;
    });
    protos.resize(cfg.n_records);
    for (std::size_t i = 0; i < protos.size(); ++i) {
        char buf[24];
        std::snprintf(buf, sizeof(buf), "t%07zu", i + 1);
        protos[i].rec.test_id = buf;
    }

    // Latent risk with the intercept calibrated on the realized sample so the
    // mean risk equals the configured prevalence.
    std::vector<double> signal(protos.size(), 0.0);
    for (const auto& [feat, w] : cfg.effect_weights) {
        if (w == 0.0) continue;
        const Moments m = reference_moments(feat, cfg);
        for (std::size_t i = 0; i < protos.size(); ++i) {
            const TestRecord& r = protos[i].rec;
            double x;
            bool present = true;
            if (feat == "month") x = r.month;
            else if (feat == "n_animals_tested") x = r.n_animals_tested;
            else if (feat == "easting") x = r.easting.value_or(0);
            else if (feat == "northing") x = r.northing.value_or(0);
            else if (feat == "days_since_last_test") {
                present = r.days_since_last_test.has_value();
                x = present ? *r.days_since_last_test : 0.0;
            } else if (feat == "days_since_last_breakdown") {
                present = r.days_since_last_breakdown.has_value();
                x = present ? *r.days_since_last_breakdown : 0.0;
            } else if (feat == "n_prior_ifn_gamma_tests") x = r.n_prior_ifn_gamma_tests;
            else if (feat == "apha_risk_score") x = r.apha_risk_score.value_or(3);
            else if (feat == "badger_abundance") x = r.badger_abundance.value_or(2.0);
            else {
                auto window_value = [&](const std::string& name) -> std::optional<double> {
                    for (int dir = 0; dir < 2; ++dir) {
                        const std::string base = dir == 0 ? "moves_in_" : "moves_out_";
                        const auto& total = dir == 0 ? r.moves_in : r.moves_out;
                        const auto& risky = dir == 0 ? r.risky_moves_in : r.risky_moves_out;
                        for (int k = 0; k < 4; ++k) {
                            if (name == base + kWindowSuffix[k]) return total[k];
                            if (name == "risky_" + base + kWindowSuffix[k]) return risky[k];
                        }
                    }
                    return std::nullopt;
                };
                auto v = window_value(feat);
                require(v.has_value(), "unhandled weighted feature '" + feat + "'");
                x = *v;
            }
            signal[i] += present ? w * (x - m.mu) / m.sigma : 0.0;
        }
    }
    double b_lo = -30.0, b_hi = 30.0;
    auto mean_risk_at = [&](double b) {
        double s = 0.0;
        for (double v : signal) s += stats::sigmoid(b + v);
        return s / static_cast<double>(signal.size());
    };
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (b_lo + b_hi);
        (mean_risk_at(mid) < cfg.target_prevalence ? b_lo : b_hi) = mid;
    }
    const double intercept = 0.5 * (b_lo + b_hi);

    SynthResult out;
    out.truth.weights = cfg.effect_weights;
    out.truth.intercept = intercept;
    out.truth.latent_risk.resize(protos.size());
    for (std::size_t i = 0; i < protos.size(); ++i)
        out.truth.latent_risk[i] = stats::sigmoid(intercept + signal[i]);
    out.truth.mean_risk = stats::mean(out.truth.latent_risk);
    for (std::size_t j = 0; j < n_prac; ++j)
        out.truth.practices.push_back({practice_id(j), prac_z[j], prac_delta[j]});

    // Labels, SICCT results (with the practice offset), previous-result
    // chains, breakdown events, and missingness masks.
    std::vector<std::uint8_t> labels(protos.size(), 0);
    std::map<std::string, std::vector<SicctResult>> herd_history;
    for (std::size_t i = 0; i < protos.size(); ++i) {
        TestRecord& r = protos[i].rec;
        const HerdTruth& ht = herds[protos[i].herd_idx];
        Rng rng(derive_seed(cfg.seed, "outcome", i));
        const bool label = rng.uniform01() < out.truth.latent_risk[i];
        labels[i] = label ? 1 : 0;
        r.label_confirmed_breakdown = label;

        const double se = std::clamp(cfg.sicct_se + prac_delta[ht.practice], 0.01, 0.999);
        const double sp = std::clamp(cfg.sicct_sp + prac_delta[ht.practice], 0.01, 0.999);
        const bool positive = label ? rng.uniform01() < se : rng.uniform01() >= sp;
        r.sicct_herd_result = positive ? SicctResult::not_clear : SicctResult::clear;

        auto& hist = herd_history[r.herd_id];
        r.prev_result_1 = hist.size() >= 1
                              ? (hist[hist.size() - 1] == SicctResult::clear ? PrevResult::clear
                                                                             : PrevResult::not_clear)
                              : PrevResult::unknown;
        r.prev_result_2 = hist.size() >= 2
                              ? (hist[hist.size() - 2] == SicctResult::clear ? PrevResult::clear
                                                                             : PrevResult::not_clear)
                              : PrevResult::unknown;
        hist.push_back(r.sicct_herd_result);

        if (label) {
            BreakdownEvent b;
            b.herd_id = r.herd_id;
            b.start_date = r.test_date + static_cast<int>(rng.uniform_int(0, kLabelWindowDays));
            b.confirmed = true;
            b.confirmation_date = b.start_date + static_cast<int>(rng.uniform_int(0, 30));
            out.breakdowns.push_back(std::move(b));
        } else if (rng.uniform01() < 0.05) {
            // Occasional unconfirmed breakdown; never affects labels.
            BreakdownEvent b;
            b.herd_id = r.herd_id;
            b.start_date = r.test_date + static_cast<int>(rng.uniform_int(0, kLabelWindowDays));
            b.confirmed = false;
            out.breakdowns.push_back(std::move(b));
        }
    }
    out.truth.bayes_auc = rank_auc(out.truth.latent_risk, labels);

    for (std::size_t i = 0; i < protos.size(); ++i) {
        TestRecord& r = protos[i].rec;
        Rng rng(derive_seed(cfg.seed, "missing", i));
        for (const auto& field : kOptionalFields) {
            const double q = cfg.missing_fraction(field);
            const bool mask = q > 0.0 && rng.uniform01() < q;
            if (!mask) continue;
            if (field == "easting") r.easting.reset();
            else if (field == "northing") r.northing.reset();
            else if (field == "days_since_last_test") r.days_since_last_test.reset();
            else if (field == "days_since_last_breakdown") r.days_since_last_breakdown.reset();
            else if (field == "apha_risk_score") r.apha_risk_score.reset();
            else if (field == "badger_abundance") r.badger_abundance.reset();
            else if (field == "vet_practice") r.vet_practice.reset();
            else if (field == "tuberculin_batch_bovine") r.tuberculin_batch_bovine.reset();
            else if (field == "tuberculin_batch_avian") r.tuberculin_batch_avian.reset();
        }
    }

    out.records.reserve(protos.size());
    for (auto& p : protos) out.records.push_back(std::move(p.rec));
    std::sort(out.breakdowns.begin(), out.breakdowns.end(),
              [](const BreakdownEvent& a, const BreakdownEvent& b) {
                  if (a.start_date != b.start_date) return a.start_date < b.start_date;
                  return a.herd_id < b.herd_id;
              });
    return out;
}

SynthConfig synth_config_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw Error(std::string("synthetic config: invalid JSON: ") + e.what());
    }
    SynthConfig cfg;
    const std::set<std::string> known = {
        "n_records", "n_herds", "n_practices", "start_date", "span_years",
        "target_prevalence", "sicct_se", "sicct_sp", "effect_weights",
        "fraction_missing", "practice"};
    for (auto it = j.begin(); it != j.end(); ++it)
        require(known.count(it.key()) > 0, "synthetic config: unknown field '" + it.key() + "'");
    try {
        if (j.contains("n_records")) cfg.n_records = j["n_records"].get<std::size_t>();
        if (j.contains("n_herds")) cfg.n_herds = j["n_herds"].get<std::size_t>();
        if (j.contains("n_practices")) cfg.n_practices = j["n_practices"].get<std::size_t>();
        if (j.contains("start_date")) cfg.start_date = Date::parse(j["start_date"].get<std::string>());
        if (j.contains("span_years")) cfg.span_years = j["span_years"].get<int>();
        if (j.contains("target_prevalence"))
            cfg.target_prevalence = j["target_prevalence"].get<double>();
        if (j.contains("sicct_se")) cfg.sicct_se = j["sicct_se"].get<double>();
        if (j.contains("sicct_sp")) cfg.sicct_sp = j["sicct_sp"].get<double>();
        if (j.contains("effect_weights"))
            for (auto it = j["effect_weights"].begin(); it != j["effect_weights"].end(); ++it)
                cfg.effect_weights.emplace_back(it.key(), it.value().get<double>());
        if (j.contains("fraction_missing"))
            for (auto it = j["fraction_missing"].begin(); it != j["fraction_missing"].end(); ++it)
                cfg.fraction_missing.emplace_back(it.key(), it.value().get<double>());
        if (j.contains("practice")) {
            const auto& p = j["practice"];
            if (p.contains("target_pearson_r"))
                cfg.practice.target_pearson_r = p["target_pearson_r"].get<double>();
            if (p.contains("effect_sd")) cfg.practice.effect_sd = p["effect_sd"].get<double>();
            if (p.contains("mean_herd_size"))
                cfg.practice.mean_herd_size = p["mean_herd_size"].get<double>();
            if (p.contains("herd_size_spread"))
                cfg.practice.herd_size_spread = p["herd_size_spread"].get<double>();
        }
    } catch (const json::exception& e) {
        throw Error(std::string("synthetic config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

// --- matrix view ------------------------------------------------------------

const std::vector<std::string>& feature_columns() {
    static const std::vector<std::string> cols = [] {
        std::vector<std::string> c;
        for (const auto& name : dataset_columns())
            if (name != "test_id" && name != "herd_id" && name != "label_confirmed_breakdown")
                c.push_back(name);
        return c;
    }();
    return cols;
}

DataMatrix to_matrix(const std::vector<TestRecord>& records, const MatrixOptions& opts) {
    DataMatrix m;
    m.n_rows = records.size();

    auto numeric = [&](const std::string& name, auto getter) {
        Column col;
        col.name = name;
        col.kind = ColumnKind::numeric;
        col.num.resize(m.n_rows, 0.0);
        col.present.assign(m.n_rows, 1);
        for (std::size_t i = 0; i < records.size(); ++i) {
            const std::optional<double> v = getter(records[i]);
            if (v) col.num[i] = *v;
            else col.present[i] = 0;
        }
        m.cols.push_back(std::move(col));
    };
    auto categorical = [&](const std::string& name, std::vector<std::string> fixed_labels,
                           auto getter) {
        Column col;
        col.name = name;
        col.kind = ColumnKind::categorical;
        col.labels = std::move(fixed_labels);
        col.cat.resize(m.n_rows, 0);
        col.present.assign(m.n_rows, 1);
        for (std::size_t i = 0; i < records.size(); ++i) {
            const std::optional<std::string> v = getter(records[i]);
            if (v) col.cat[i] = col.intern(*v);
            else col.present[i] = 0;
        }
        m.cols.push_back(std::move(col));
    };

    for (const auto& name : feature_columns()) {
        if (name == "test_date")
            numeric(name, [](const TestRecord& r) -> std::optional<double> {
                return static_cast<double>(r.test_date.days_since_epoch());
            });
        else if (name == "month")
            numeric(name, [](const TestRecord& r) -> std::optional<double> { return r.month; });
        else if (name == "severe_interpretation")
            numeric(name, [](const TestRecord& r) -> std::optional<double> {
                return r.severe_interpretation ? 1.0 : 0.0;
            });
        else if (name == "n_animals_tested")
            numeric(name, [](const TestRecord& r) -> std::optional<double> {
                return r.n_animals_tested;
            });
        else if (name == "easting")
            numeric(name, [](const TestRecord& r) { return r.easting; });
        else if (name == "northing")
            numeric(name, [](const TestRecord& r) { return r.northing; });
        else if (name == "prev_result_1")
            categorical(name, {"clear", "not_clear", "unknown"},
                        [](const TestRecord& r) -> std::optional<std::string> {
                            return std::string(to_string(r.prev_result_1));
                        });
        else if (name == "prev_result_2")
            categorical(name, {"clear", "not_clear", "unknown"},
                        [](const TestRecord& r) -> std::optional<std::string> {
                            return std::string(to_string(r.prev_result_2));
                        });
        else if (name == "days_since_last_test")
            numeric(name, [](const TestRecord& r) -> std::optional<double> {
                if (!r.days_since_last_test) return std::nullopt;
                return static_cast<double>(*r.days_since_last_test);
            });
        else if (name == "days_since_last_breakdown")
            numeric(name, [](const TestRecord& r) -> std::optional<double> {
                if (!r.days_since_last_breakdown) return std::nullopt;
                return static_cast<double>(*r.days_since_last_breakdown);
            });
        else if (name == "n_prior_ifn_gamma_tests")
            numeric(name, [](const TestRecord& r) -> std::optional<double> {
                return r.n_prior_ifn_gamma_tests;
            });
        else if (name == "test_type")
            categorical(name, {"routine", "pre_movement", "short_interval", "other"},
                        [](const TestRecord& r) -> std::optional<std::string> {
                            return std::string(to_string(r.test_type));
                        });
        else if (name == "herd_type")
            categorical(name, {"dairy", "beef", "mixed", "other"},
                        [](const TestRecord& r) -> std::optional<std::string> {
                            return std::string(to_string(r.herd_type));
                        });
        else if (name == "apha_risk_score")
            numeric(name, [](const TestRecord& r) -> std::optional<double> {
                if (!r.apha_risk_score) return std::nullopt;
                return static_cast<double>(*r.apha_risk_score);
            });
        else if (name == "badger_abundance")
            numeric(name, [](const TestRecord& r) { return r.badger_abundance; });
        else if (name == "vet_practice")
            categorical(name, {}, [](const TestRecord& r) { return r.vet_practice; });
        else if (name == "tuberculin_batch_bovine")
            categorical(name, {}, [](const TestRecord& r) { return r.tuberculin_batch_bovine; });
        else if (name == "tuberculin_batch_avian")
            categorical(name, {}, [](const TestRecord& r) { return r.tuberculin_batch_avian; });
        else if (name == "sicct_herd_result")
            categorical(name, {"clear", "not_clear"},
                        [](const TestRecord& r) -> std::optional<std::string> {
                            return std::string(to_string(r.sicct_herd_result));
                        });
        else {
            // Movement windows.
            bool handled = false;
            for (int dir = 0; dir < 2 && !handled; ++dir) {
                const std::string base = dir == 0 ? "moves_in_" : "moves_out_";
                for (int k = 0; k < 4 && !handled; ++k) {
                    if (name == base + kWindowSuffix[k]) {
                        numeric(name, [dir, k](const TestRecord& r) -> std::optional<double> {
                            return (dir == 0 ? r.moves_in : r.moves_out)[k];
                        });
                        handled = true;
                    } else if (name == "risky_" + base + kWindowSuffix[k]) {
                        numeric(name, [dir, k](const TestRecord& r) -> std::optional<double> {
                            return (dir == 0 ? r.risky_moves_in : r.risky_moves_out)[k];
                        });
                        handled = true;
                    }
                }
            }
            require(handled, "to_matrix: unmapped column '" + name + "'");
        }
    }

    if (opts.include_control) {
        Column col;
        col.name = "control";
        col.kind = ColumnKind::numeric;
        col.present.assign(m.n_rows, 1);
        col.num.resize(m.n_rows);
        Rng rng(derive_seed(opts.control_seed, "control-column"));
        for (std::size_t i = 0; i < m.n_rows; ++i) col.num[i] = rng.uniform01();
        m.cols.push_back(std::move(col));
    }
    m.validate();
    return m;
}

std::vector<std::uint8_t> labels_of(const std::vector<TestRecord>& records) {
    std::vector<std::uint8_t> y(records.size());
    for (std::size_t i = 0; i < records.size(); ++i)
        y[i] = records[i].label_confirmed_breakdown ? 1 : 0;
    return y;
}

} // namespace herdgate::records
