#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "corrfair/errors.hpp"

namespace corrfair::stats {

// Pearson correlation with its two-sided significance.
struct CorrelationResult {
    double r = 0.0;
    double p_value = 1.0;
    std::size_t n = 0;
};

namespace detail {

// Neumaier-compensated sum.
inline double compensated_sum(std::span<const double> v) {
    double sum = 0.0, comp = 0.0;
    for (double x : v) {
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x)) {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    return sum + comp;
}

inline bool all_equal(std::span<const double> v) {
    for (double x : v) {
        if (x != v[0]) return false;
    }
    return true;
}

}  // namespace detail

// Arithmetic mean. A constant input returns that constant exactly, so
// downstream deviation sums of uniform data are exactly zero.
inline double mean(std::span<const double> v) {
    if (v.empty()) return 0.0;
    if (detail::all_equal(v)) return v[0];
    return detail::compensated_sum(v) / static_cast<double>(v.size());
}

// Sample Pearson correlation, two-pass, clamped to [-1, 1].
inline double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw LengthMismatch(x.size(), y.size());
    if (x.size() < 2) throw TooFewSamples(x.size());
    const double mx = mean(x);
    const double my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0) throw DegenerateVector("x is constant; correlation undefined");
    if (syy == 0.0) throw DegenerateVector("y is constant; correlation undefined");
    const double r = sxy / std::sqrt(sxx * syy);
    return std::clamp(r, -1.0, 1.0);
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    return pearson(std::span<const double>(x), std::span<const double>(y));
}

namespace detail {

// Continued fraction for the regularized incomplete beta (modified Lentz).
inline double beta_cont_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3.0e-16;
    constexpr double kTiny = 1.0e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) <= kEps) break;
    }
    return h;
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * detail::beta_cont_fraction(a, b, x) / a;
    }
    return 1.0 - front * detail::beta_cont_fraction(b, a, 1.0 - x) / b;
}

// Two-sided p-value of a sample correlation r over n pairs, from the
// t-statistic t = r*sqrt(n-2)/sqrt(1-r^2) under Student's t with n-2 dof:
//   p = I_{nu/(nu+t^2)}(nu/2, 1/2),  nu = n - 2.
inline double pearson_p_value(double r, std::size_t n) {
    if (n < 3) throw TooFewSamples(n);
    const double ar = std::abs(r);
    if (ar > 1.0) throw Error("correlation magnitude exceeds 1");
    if (ar == 1.0) return 0.0;
    if (ar == 0.0) return 1.0;
    const double nu = static_cast<double>(n - 2);
    const double t2 = nu * r * r / (1.0 - r * r);
    const double p = incomplete_beta(nu / 2.0, 0.5, nu / (nu + t2));
    return std::clamp(p, 0.0, 1.0);
}

// Affine map of v onto [0,1]; min -> 0, max -> 1.
inline std::vector<double> min_max_normalize(std::span<const double> v) {
    if (v.size() < 2) throw TooFewSamples(v.size());
    const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
    const double lo = *lo_it, hi = *hi_it;
    if (lo == hi) throw DegenerateVector("constant vector cannot be min-max normalized");
    const double range = hi - lo;
    std::vector<double> out;
    out.reserve(v.size());
    for (double x : v) out.push_back((x - lo) / range);
    return out;
}

inline std::vector<double> min_max_normalize(const std::vector<double>& v) {
    return min_max_normalize(std::span<const double>(v));
}

}  // namespace corrfair::stats
