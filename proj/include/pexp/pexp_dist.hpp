#ifndef PEXP_PEXP_DIST_HPP
#define PEXP_PEXP_DIST_HPP

#include <cmath>
#include <numbers>

#include "error.hpp"
#include "rng.hpp"
#include "special.hpp"

namespace pexp {

/// Univariate p-exponential law with density exp(-|x|^p / p) / c_p, p in [1, 2].
///
/// p = 1 is the standard Laplace law and p = 2 the standard normal; both have
/// closed-form branches for the CDF and its inverse.
class PExp {
public:
    explicit PExp(double p) : p_(p) {
        if (!(p >= 1.0 && p <= 2.0)) {
            throw DomainError("PExp: shape p must lie in [1, 2]");
        }
        log_norm_ = std::log(2.0) + std::lgamma(1.0 / p) + (1.0 / p - 1.0) * std::log(p);
    }

    double p() const noexcept { return p_; }
    /// c_p = 2 Gamma(1/p) p^{1/p - 1}
    double normalizer() const noexcept { return std::exp(log_norm_); }
    double log_normalizer() const noexcept { return log_norm_; }

    double log_density(double x) const {
        return -std::pow(std::abs(x), p_) / p_ - log_norm_;
    }

    /// P(X > t) for t >= 0; carries full relative precision into the tail.
    double upper_tail(double t) const {
        if (t <= 0.0) return 0.5;
        if (p_ == 1.0) return 0.5 * std::exp(-t);
        if (p_ == 2.0) return 0.5 * std::erfc(t / std::numbers::sqrt2);
        return 0.5 * special::reg_upper_inc_gamma(1.0 / p_, std::pow(t, p_) / p_);
    }

    /// Inverse of upper_tail on (0, 1/2].
    double inv_upper_tail(double v) const {
        if (!(v > 0.0 && v <= 0.5)) {
            throw DomainError("PExp::inv_upper_tail: tail probability must lie in (0, 1/2]");
        }
        if (v == 0.5) return 0.0;
        if (p_ == 1.0) return -std::log(2.0 * v);
        if (p_ == 2.0) return -special::normal_quantile(v);
        const double y = special::inv_reg_upper_inc_gamma(1.0 / p_, 2.0 * v);
        return std::pow(p_ * y, 1.0 / p_);
    }

    double cdf(double x) const {
        return x < 0.0 ? upper_tail(-x) : 1.0 - upper_tail(x);
    }

    /// 1 - cdf(x), without cancellation for large x.
    double ccdf(double x) const { return cdf(-x); }

    double inv_cdf(double u) const {
        if (!(u > 0.0 && u < 1.0)) {
            throw DomainError("PExp::inv_cdf: u must lie in (0, 1)");
        }
        if (u < 0.5) return -inv_upper_tail(u);
        return inv_upper_tail(1.0 - u);
    }

    /// Inverse of ccdf, accurate where ccdf is tiny.
    double inv_ccdf(double v) const { return -inv_cdf(v); }

    /// X = S (p G)^{1/p}, G ~ Gamma(1/p, 1), S a fair sign.
    double sample(Rng& rng) const {
        const double g = p_ == 1.0 ? -std::log(rng.uniform()) : rng.gamma(1.0 / p_);
        const double mag = p_ == 1.0 ? g : std::pow(p_ * g, 1.0 / p_);
        return rng.sign() * mag;
    }

    /// E|X|^k = p^{k/p} Gamma((k+1)/p) / Gamma(1/p)
    double abs_moment(double k) const {
        return std::exp(k / p_ * std::log(p_) + std::lgamma((k + 1.0) / p_) - std::lgamma(1.0 / p_));
    }

    double variance() const { return abs_moment(2.0); }

private:
    double p_;
    double log_norm_;
};

} // namespace pexp

#endif
