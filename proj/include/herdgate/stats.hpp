#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "herdgate/error.hpp"

namespace herdgate::stats {

inline double sigmoid(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double logit(double p) {
    require(p > 0.0 && p < 1.0, "logit argument must be in (0,1)");
    return std::log(p / (1.0 - p));
}

inline double log_loss(std::span<const double> prob, std::span<const std::uint8_t> label) {
    require(prob.size() == label.size(), "log_loss: size mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        const double p = std::clamp(prob[i], 1e-15, 1.0 - 1e-15);
        sum += label[i] ? -std::log(p) : -std::log(1.0 - p);
    }
    return sum / static_cast<double>(prob.size());
}

inline double mean(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double sample_variance(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

inline double sample_sd(std::span<const double> v) { return std::sqrt(sample_variance(v)); }

// Linear-interpolation quantile on a sorted copy (the "type 7" convention).
inline double quantile(std::vector<double> v, double q) {
    require(!v.empty(), "quantile of empty set");
    require(q >= 0.0 && q <= 1.0, "quantile level out of range");
    std::sort(v.begin(), v.end());
    const double idx = q * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(idx);
    if (lo + 1 >= v.size()) return v.back();
    const double frac = idx - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
}

inline double pearson_r(std::span<const double> x, std::span<const double> y) {
    require(x.size() == y.size() && x.size() >= 2, "pearson_r needs paired data");
    const double mx = mean(x), my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    require(sxx > 0.0 && syy > 0.0, "pearson_r undefined for constant input");
    return sxy / std::sqrt(sxx * syy);
}

inline double log_choose(long long n, long long k) {
    return std::lgamma(static_cast<double>(n + 1)) - std::lgamma(static_cast<double>(k + 1)) -
           std::lgamma(static_cast<double>(n - k + 1));
}

inline double binom_log_pmf(long long k, long long n, double p) {
    if (p <= 0.0) return k == 0 ? 0.0 : -INFINITY;
    if (p >= 1.0) return k == n ? 0.0 : -INFINITY;
    return log_choose(n, k) + static_cast<double>(k) * std::log(p) +
           static_cast<double>(n - k) * std::log1p(-p);
}

// Exact two-sided binomial test: total probability of outcomes no more likely
// than the observed one.
inline double binom_test_two_sided(long long k, long long n, double p) {
    require(n >= 1 && k >= 0 && k <= n, "binom_test: bad arguments");
    require(p >= 0.0 && p <= 1.0, "binom_test: bad p");
    const double obs = binom_log_pmf(k, n, p);
    const double slack = 1e-12;
    double total = 0.0;
    for (long long i = 0; i <= n; ++i) {
        const double lp = binom_log_pmf(i, n, p);
        if (lp <= obs + slack) total += std::exp(lp);
    }
    return std::min(1.0, total);
}

// Regularized incomplete beta via the standard continued fraction.
inline double betacf(double a, double b, double x) {
    const int max_iter = 300;
    const double eps = 3e-14, fpmin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

inline double inc_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    if (x < (a + 1.0) / (a + b + 2.0))
        return std::exp(ln_front) * betacf(a, b, x) / a;
    return 1.0 - std::exp(ln_front + std::log(betacf(b, a, 1.0 - x)) - std::log(b));
}

inline double student_t_cdf(double t, double df) {
    const double x = df / (df + t * t);
    const double p = 0.5 * inc_beta(df / 2.0, 0.5, x);
    return t >= 0.0 ? 1.0 - p : p;
}

// One-sided paired t-test of H1: mean(a - b) < 0.  Returns the p-value.
inline double paired_t_test_less(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size() && a.size() >= 2, "paired t-test needs >= 2 pairs");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    const double m = mean(d);
    const double sd = sample_sd(d);
    require(sd > 0.0, "paired t-test: zero-variance differences");
    const double t = m / (sd / std::sqrt(static_cast<double>(d.size())));
    return student_t_cdf(t, static_cast<double>(d.size() - 1));
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

} // namespace herdgate::stats
