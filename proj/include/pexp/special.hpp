#ifndef PEXP_SPECIAL_HPP
#define PEXP_SPECIAL_HPP

#include <cmath>
#include <limits>
#include <numbers>

#include "error.hpp"

// Special functions behind the p-exponential CDF and its inverse.
//
// The regularized incomplete gamma pair uses the power series for x < a+1
// and a Lentz continued fraction otherwise. Inverses run Newton on the log
// of whichever tail is being matched, guarded by a bracket so that each
// step either shrinks the bracket or falls back to bisection.

namespace pexp::special {

inline constexpr int kMaxIterations = 500;

inline double log_gamma(double x) {
    if (!(x > 0.0)) {
        throw DomainError("log_gamma: argument must be positive");
    }
    return std::lgamma(x);
}

namespace detail {

// log of x^a e^{-x} / Gamma(a)
inline double log_prefactor(double a, double x) {
    return a * std::log(x) - x - std::lgamma(a);
}

inline double lower_series(double a, double x) {
    double ap = a;
    double del = 1.0 / a;
    double sum = del;
    for (int i = 0; i < kMaxIterations; ++i) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::abs(del) < std::abs(sum) * 1e-17) {
            return sum * std::exp(log_prefactor(a, x));
        }
    }
    throw NumericError("incomplete gamma: series did not converge");
}

inline double upper_fraction(double a, double x) {
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < kMaxIterations; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-16) {
            return std::exp(log_prefactor(a, x)) * h;
        }
    }
    throw NumericError("incomplete gamma: continued fraction did not converge");
}

inline void check_args(double a, double x) {
    if (!(a > 0.0)) throw DomainError("incomplete gamma: shape a must be positive");
    if (!(x >= 0.0)) throw DomainError("incomplete gamma: x must be nonnegative");
}

} // namespace detail

/// Regularized lower incomplete gamma P(a, x).
inline double reg_lower_inc_gamma(double a, double x) {
    detail::check_args(a, x);
    if (x == 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;
    if (x < a + 1.0) return detail::lower_series(a, x);
    return 1.0 - detail::upper_fraction(a, x);
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x), accurate in the tail.
inline double reg_upper_inc_gamma(double a, double x) {
    detail::check_args(a, x);
    if (x == 0.0) return 1.0;
    if (std::isinf(x)) return 0.0;
    if (x < a + 1.0) return 1.0 - detail::lower_series(a, x);
    return detail::upper_fraction(a, x);
}

namespace detail {

// Solve tail(a, x) = target where tail is P (lower = true) or Q. target <= 0.5
// so that the matched tail is the small one and keeps full relative precision.
inline double invert_tail(double a, double target, bool lower) {
    const double log_target = std::log(target);
    double x;
    if (lower) {
        x = std::exp((log_target + std::lgamma(a + 1.0)) / a);
        if (!(x > 0.0)) x = std::numeric_limits<double>::min();
    } else {
        const double t = -log_target;
        x = t + (a - 1.0) * std::log(std::max(t, 1.0)) - std::lgamma(a);
        if (!(x > 1e-3)) x = std::max(a, 1e-3);
    }
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    for (int i = 0; i < kMaxIterations; ++i) {
        const double tail = lower ? reg_lower_inc_gamma(a, x) : reg_upper_inc_gamma(a, x);
        if (tail == 0.0) {
            // Underflowed: x is too far into the small tail.
            if (lower) lo = x; else hi = x;
            x = std::isinf(hi) ? 2.0 * x + 1.0 : 0.5 * (lo + hi);
            continue;
        }
        const double f = std::log(tail) - log_target;
        // P increases with x, Q decreases.
        const bool too_big = lower ? (f > 0.0) : (f < 0.0);
        if (too_big) hi = x; else lo = x;
        if (f == 0.0) return x;
        const double dens = std::exp(log_prefactor(a, x)) / x;
        double slope = dens / tail;
        if (!lower) slope = -slope;
        double next = x - f / slope;
        if (!(next > lo && next < hi) || !std::isfinite(next)) {
            next = std::isinf(hi) ? 2.0 * x + 1.0 : 0.5 * (lo + hi);
        }
        if (std::abs(next - x) <= 1e-15 * std::abs(x) || (std::isfinite(hi) && hi - lo <= 1e-15 * hi)) {
            return next;
        }
        x = next;
    }
    throw NumericError("inverse incomplete gamma: iteration cap reached");
}

} // namespace detail

/// x such that P(a, x) = u.
inline double inv_reg_lower_inc_gamma(double a, double u) {
    if (!(a > 0.0)) throw DomainError("inverse incomplete gamma: a must be positive");
    if (!(u >= 0.0 && u <= 1.0)) throw DomainError("inverse incomplete gamma: u must lie in [0,1]");
    if (u == 0.0) return 0.0;
    if (u == 1.0) return std::numeric_limits<double>::infinity();
    if (u <= 0.5) return detail::invert_tail(a, u, true);
    return detail::invert_tail(a, 1.0 - u, false);
}

/// x such that Q(a, x) = v.
inline double inv_reg_upper_inc_gamma(double a, double v) {
    if (!(a > 0.0)) throw DomainError("inverse incomplete gamma: a must be positive");
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("inverse incomplete gamma: v must lie in [0,1]");
    if (v == 1.0) return 0.0;
    if (v == 0.0) return std::numeric_limits<double>::infinity();
    if (v <= 0.5) return detail::invert_tail(a, v, false);
    return detail::invert_tail(a, 1.0 - v, true);
}

inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

inline double normal_log_density(double x) {
    return -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi);
}

/// Standard normal quantile: Acklam's rational approximation refined by one
/// Halley step against erfc.
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw DomainError("normal_quantile: p must lie in (0,1)");
    }
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // Refine against the smaller tail so that both ends keep relative accuracy.
    for (int k = 0; k < 2; ++k) {
        double e;
        if (x < 0.0) {
            e = normal_cdf(x) - p;
        } else {
            e = (1.0 - p) - normal_cdf(-x);
        }
        const double log_u = std::log(std::abs(e)) + 0.5 * std::log(2.0 * std::numbers::pi) + 0.5 * x * x;
        if (e == 0.0 || log_u > 700.0) break;
        const double u = std::copysign(std::exp(log_u), e);
        x = x - u / (1.0 + 0.5 * x * u);
    }
    return x;
}

} // namespace pexp::special

#endif
