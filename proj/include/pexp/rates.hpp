#ifndef PEXP_RATES_HPP
#define PEXP_RATES_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "pexp_dist.hpp"
#include "prior.hpp"
#include "rng.hpp"
#include "seq_core.hpp"

namespace pexp {

/// m*_n = n^{-beta/(1+2beta)}
inline double minimax_rate(double beta, double n) {
    if (!(beta > 0.0)) throw DomainError("minimax_rate: beta must be positive");
    if (!(n >= 1.0)) throw DomainError("minimax_rate: n must be >= 1");
    return std::pow(n, -beta / (1.0 + 2.0 * beta));
}

/// l*_n = n^{-(beta - g/2)/(1 + 2beta - g)}, g = 2/q - 2/max(q, 2).
inline double linear_minimax_rate(double beta, double q, double n) {
    if (!(q >= 1.0)) throw DomainError("linear_minimax_rate: q must be >= 1");
    if (!(beta > 1.0 / q || (q == 1.0 && beta >= 1.0))) {
        throw DomainError("linear_minimax_rate: requires beta > 1/q (beta >= 1 when q = 1)");
    }
    if (!(n >= 1.0)) throw DomainError("linear_minimax_rate: n must be >= 1");
    const double g = 2.0 / q - 2.0 / std::max(q, 2.0);
    if (g == 0.0) return minimax_rate(beta, n);
    return std::pow(n, -(beta - g / 2.0) / (1.0 + 2.0 * beta - g));
}

enum class Regime { BelowCritical, AboveCritical, Critical };

inline std::string_view to_string(Regime r) {
    switch (r) {
    case Regime::BelowCritical: return "below";
    case Regime::AboveCritical: return "above";
    case Regime::Critical: return "critical";
    }
    return "below";
}

/// Position of beta relative to alpha + 1/p; equality within 1e-12 relative counts as critical.
inline Regime classify(double beta, double alpha, double p) {
    const double crit = alpha + 1.0 / p;
    if (std::abs(beta - crit) <= 1e-12 * std::max(1.0, crit)) return Regime::Critical;
    return beta < crit ? Regime::BelowCritical : Regime::AboveCritical;
}

struct RateQuery {
    double n;
    double beta;
    double q = 2.0;
    double p = 1.0;
    double alpha = 1.0;
    double tau = 1.0;
    double K = 1.0;

    void validate() const {
        if (!(n >= 2.0)) throw DomainError("RateQuery: n must be >= 2");
        if (!(beta > 0.0)) throw DomainError("RateQuery: beta must be positive");
        if (!(q >= 1.0)) throw DomainError("RateQuery: q must be >= 1");
        if (!(p >= 1.0 && p <= 2.0)) throw DomainError("RateQuery: p must lie in [1,2]");
        if (!(alpha > 0.0) || !(tau > 0.0) || !(K > 0.0)) {
            throw DomainError("RateQuery: alpha, tau and K must be positive");
        }
    }

    Regime regime() const { return classify(beta, alpha, p); }
};

enum class TruthClass { Sobolev, BesovQ };

struct RateBound {
    double value;
    Regime regime;
    /// [tau-increasing term, tau-decreasing term]; value is their sum.
    std::array<double, 2> components;
};

/// Upper bound on eps_n(alpha, tau) as the sum of a term increasing in tau,
/// n^{-alpha/(1+2alpha)} tau^{1/(1+2alpha)}, and a decreasing term whose form
/// depends on the regime and on the truth class.
inline RateBound eps_upper(const RateQuery& q, TruthClass cls) {
    q.validate();
    if (cls == TruthClass::BesovQ) {
        if (!(q.p <= q.q && q.q < 2.0)) throw DomainError("eps_upper: Besov bound requires p <= q < 2");
        if (!(q.beta >= 1.0 / q.p)) throw DomainError("eps_upper: Besov bound requires beta >= 1/p");
    }
    const Regime r = q.regime();
    const double a = q.alpha;
    const double first = std::pow(q.n, -a / (1.0 + 2.0 * a)) * std::pow(q.tau, 1.0 / (1.0 + 2.0 * a));
    const double ntp = q.n * std::pow(q.tau, q.p);
    double second = 0.0;
    switch (r) {
    case Regime::BelowCritical:
        if (cls == TruthClass::Sobolev) {
            second = std::pow(ntp, q.beta / (q.beta * (q.p - 2.0) - a * q.p - 1.0));
        } else {
            const double b = q.beta, qq = q.q, p = q.p;
            const double e = (2.0 * b * qq + qq - 2.0) / (4.0 * b * qq + 4.0 * qq - 4.0 - 2.0 * b * p * qq + 2.0 * a * p * qq);
            second = std::pow(ntp, -e);
        }
        break;
    case Regime::AboveCritical:
        second = 1.0 / std::sqrt(ntp);
        break;
    case Regime::Critical: {
        const double e = cls == TruthClass::Sobolev ? 0.5 - q.p / 4.0 : (q.q - q.p) / (2.0 * q.q);
        double factor = 1.0;
        if (e != 0.0) {
            const double lg = std::log(std::sqrt(ntp));
            if (!(lg > 0.0)) throw DomainError("eps_upper: critical-regime log factor requires n tau^p > 1");
            factor = std::pow(lg, e);
        }
        second = factor / std::sqrt(ntp);
        break;
    }
    }
    return {first + second, r, {first, second}};
}

struct TauOptimum {
    double tau0;
    /// eps_upper evaluated at tau0.
    RateBound bound;
    /// Order of the optimized bound without constants.
    double rate;
};

/// Balancing choice of tau for a Sobolev truth at fixed alpha.
inline TauOptimum optimize_tau(double alpha, double beta, double p, double n) {
    RateQuery q{n, beta, 2.0, p, alpha, 1.0, 1.0};
    q.validate();
    double tau0 = 0.0;
    double rate = 0.0;
    switch (q.regime()) {
    case Regime::BelowCritical:
        tau0 = std::pow(n, (alpha - beta) / (1.0 + 2.0 * beta));
        rate = minimax_rate(beta, n);
        break;
    case Regime::AboveCritical:
        tau0 = std::pow(n, -1.0 / (2.0 + p * (1.0 + 2.0 * alpha)));
        rate = std::pow(n, -(1.0 + alpha * p) / (2.0 + p * (1.0 + 2.0 * alpha)));
        break;
    case Regime::Critical: {
        const double s = minimax_rate(beta, n) * std::pow(std::log(n), (2.0 - p) / (2.0 * p * (1.0 + 2.0 * beta)));
        tau0 = std::pow(s, 1.0 / (beta * p)) *
               std::pow(std::log(1.0 / s), (2.0 - p) * (beta * p - 1.0) / (2.0 * beta * p * p));
        rate = s;
        break;
    }
    }
    q.tau = tau0;
    return {tau0, eps_upper(q, TruthClass::Sobolev), rate};
}

struct AlphaOptimum {
    double alpha0;
    RateBound bound;
};

/// alpha0 = beta at tau = 1; the bound is of the order of the minimax rate.
inline AlphaOptimum optimize_alpha(double beta, double p, double n) {
    const RateQuery q{n, beta, 2.0, p, beta, 1.0, 1.0};
    return {beta, eps_upper(q, TruthClass::Sobolev)};
}

struct BesovOptimum {
    double alpha0;
    double tau0;
    double omega;
    double rate;
};

/// alpha0 = beta - 1/p, tau0 = n^{-1/(p(1+2beta))} (log n)^omega with
/// omega = (p - 1/(1+2beta)) (q-p)/(p^2 q); rate m*_n (log n)^{(q-p)/(pq(1+2beta))}.
inline BesovOptimum besov_optimal(double beta, double q, double p, double n) {
    if (!(p >= 1.0 && p <= 2.0)) throw DomainError("besov_optimal: p must lie in [1,2]");
    if (p > q) throw DomainError("besov_optimal: requires p <= q");
    if (!(q < 2.0)) throw DomainError("besov_optimal: requires q < 2");
    if (!(beta >= 1.0 / p)) throw DomainError("besov_optimal: requires beta >= 1/p");
    if (!(n >= 2.0)) throw DomainError("besov_optimal: n must be >= 2");
    const double ln = std::log(n);
    const double omega = (p - 1.0 / (1.0 + 2.0 * beta)) * (q - p) / (p * p * q);
    const double tau0 = std::pow(n, -1.0 / (p * (1.0 + 2.0 * beta))) * std::pow(ln, omega);
    const double rate = minimax_rate(beta, n) * std::pow(ln, (q - p) / (p * q * (1.0 + 2.0 * beta)));
    return {beta - 1.0 / p, tau0, omega, rate};
}

/// Contraction rate (up to constants) that the adaptive procedures attain in the given mode.
///
/// Tau: alpha = mode.fixed, requires beta >= (1 + alpha p)/(p + 2 alpha p).
/// Alpha: requires alpha_low < beta < alpha_high; rate m*_n.
/// Both: requires p <= q < 2 and alpha_low + 1/p < beta < alpha_high + 1/p.
inline double adaptive_rate_target(const HyperParamMode& mode, double beta, double q, double p, double n,
                                   double alpha_low = 0.0, double alpha_high = 0.0) {
    if (!(n >= 2.0) || !(beta > 0.0)) throw DomainError("adaptive_rate_target: need n >= 2 and beta > 0");
    switch (mode.free) {
    case FreeParams::Tau: {
        const double a = mode.fixed;
        if (!(beta >= (1.0 + a * p) / (p + 2.0 * a * p))) {
            throw DomainError("adaptive_rate_target: beta outside the admissible window of tau-adaptive contraction");
        }
        switch (classify(beta, a, p)) {
        case Regime::BelowCritical: return minimax_rate(beta, n);
        case Regime::AboveCritical: return std::pow(n, -(1.0 + a * p) / (2.0 + p * (1.0 + 2.0 * a)));
        case Regime::Critical:
            return minimax_rate(beta, n) * std::pow(std::log(n), (2.0 - p) / (2.0 * p * (1.0 + 2.0 * beta)));
        }
        break;
    }
    case FreeParams::Alpha:
        if (!(beta > alpha_low && beta < alpha_high)) {
            throw DomainError("adaptive_rate_target: beta outside the admissible window of alpha-adaptive contraction");
        }
        return minimax_rate(beta, n);
    case FreeParams::Both:
        if (!(p <= q && q < 2.0)) {
            throw DomainError("adaptive_rate_target: joint adaptation requires p <= q < 2");
        }
        if (!(beta > alpha_low + 1.0 / p && beta < alpha_high + 1.0 / p)) {
            throw DomainError("adaptive_rate_target: beta outside the admissible window for joint adaptation");
        }
        return minimax_rate(beta, n) * std::pow(std::log(n), (q - p) / (p * q * (1.0 + 2.0 * beta)));
    }
    return minimax_rate(beta, n);
}

// ---------------------------------------------------------------------------
// Monte-Carlo small-ball machinery

/// Sorted squared distances |theta - center|^2 of n_samples prior draws.
inline std::vector<double> sorted_sq_distances(const PriorSpec& spec, const CoefficientVector& center,
                                               std::size_t n_samples, Rng& rng) {
    spec.validate();
    if (center.trunc_level() != spec.L) throw DomainError("small ball: center and prior have different L");
    const PExp d(spec.p);
    const auto g = spec.scales();
    const auto c = center.values();
    std::vector<double> out(n_samples);
    for (auto& v : out) {
        double s = 0.0;
        for (std::size_t i = 0; i < spec.L; ++i) {
            const double diff = g[i] * d.sample(rng) - c[i];
            s += diff * diff;
        }
        v = s;
    }
    std::sort(out.begin(), out.end());
    return out;
}

struct BallEstimate {
    double log_prob;
    /// Standard error of log_prob (binomial, delta method).
    double se;
    std::size_t hits;
    std::size_t n_samples;
};

inline constexpr std::size_t kMinBallHits = 20;

/// Ball probability read off sorted squared distances.
inline BallEstimate ball_from_sorted(const std::vector<double>& sorted_sq, double radius) {
    const auto hits = static_cast<std::size_t>(
        std::upper_bound(sorted_sq.begin(), sorted_sq.end(), radius * radius) - sorted_sq.begin());
    const auto N = sorted_sq.size();
    if (hits < kMinBallHits) {
        throw InfeasibleError("small ball: only " + std::to_string(hits) + " of " + std::to_string(N) +
                              " draws fell in the ball; the probability is too small to estimate");
    }
    const double ph = static_cast<double>(hits) / static_cast<double>(N);
    const double se_p = std::sqrt(ph * (1.0 - ph) / static_cast<double>(N));
    return {std::log(ph), se_p / ph, hits, N};
}

/// Pi(|theta - center| <= K eps) by plain Monte Carlo under the prior.
inline BallEstimate small_ball_mc(const PriorSpec& spec, double eps, double K, const CoefficientVector& center,
                                  std::size_t n_samples, Rng& rng) {
    if (!(eps > 0.0) || !(K > 0.0)) throw DomainError("small_ball_mc: eps and K must be positive");
    return ball_from_sorted(sorted_sq_distances(spec, center, n_samples, rng), K * eps);
}

/// The same estimate on a list of radii from one shared sample.
inline std::vector<BallEstimate> small_ball_curve(const PriorSpec& spec, const std::vector<double>& eps, double K,
                                                  const CoefficientVector& center, std::size_t n_samples, Rng& rng) {
    const auto d = sorted_sq_distances(spec, center, n_samples, rng);
    std::vector<BallEstimate> out;
    out.reserve(eps.size());
    for (double e : eps) out.push_back(ball_from_sorted(d, K * e));
    return out;
}

struct EpsilonSolve {
    double estimate;
    /// Standard error across replicates.
    double se;
    /// Bisection bracket of the first replicate.
    double bracket_lo;
    double bracket_hi;
    std::vector<double> replicates;
    /// (eps, g(eps)) at every evaluated point of the first replicate, g increasing.
    std::vector<std::pair<double, double>> trace;
};

struct EpsilonOptions {
    std::size_t n_samples = 200000;
    std::size_t replicates = 5;
    double rel_width = 0.01;
};

/// Solves log Pi(|theta - theta0| <= K eps) + n eps^2 = 0 by bisection on the
/// empirical ball probability, once per independent replicate sample.
///
/// Throws InfeasibleError when the crossing lies where fewer than 20 draws hit the ball.
inline EpsilonSolve epsilon_n_solve(const PriorSpec& spec, const CoefficientVector& theta0, double K, double n,
                                    Rng& rng, const EpsilonOptions& opt = {}) {
    if (!(n > 0.0) || !(K > 0.0)) throw DomainError("epsilon_n_solve: n and K must be positive");
    if (opt.replicates < 2) throw DomainError("epsilon_n_solve: need at least two replicates");
    EpsilonSolve out{};
    for (std::size_t r = 0; r < opt.replicates; ++r) {
        const auto d = sorted_sq_distances(spec, theta0, opt.n_samples, rng);
        std::vector<std::pair<double, double>> trace;
        auto g = [&](double eps) {
            const double v = ball_from_sorted(d, K * eps).log_prob + n * eps * eps;
            trace.emplace_back(eps, v);
            return v;
        };
        // Smallest radius with enough hits; g must be negative there.
        // Nudged up so that squaring the radius back cannot drop the 20th hit.
        double lo = std::sqrt(d[kMinBallHits - 1]) * (1.0 + 1e-12) / K;
        double hi = std::max(lo, std::sqrt(d.back()) / K);
        if (g(lo) >= 0.0) {
            throw InfeasibleError("epsilon_n_solve: the crossing lies below the Monte-Carlo resolution");
        }
        while (g(hi) <= 0.0) hi *= 2.0;
        while (hi - lo > opt.rel_width * 0.5 * (hi + lo)) {
            const double mid = 0.5 * (lo + hi);
            (g(mid) < 0.0 ? lo : hi) = mid;
        }
        out.replicates.push_back(0.5 * (lo + hi));
        if (r == 0) {
            out.bracket_lo = lo;
            out.bracket_hi = hi;
            std::sort(trace.begin(), trace.end());
            for (std::size_t i = 1; i < trace.size(); ++i) {
                if (trace[i].second < trace[i - 1].second) {
                    throw NumericError("epsilon_n_solve: g is not monotone on the evaluated points");
                }
            }
            out.trace = std::move(trace);
        }
    }
    double m = 0.0;
    for (double v : out.replicates) m += v;
    m /= static_cast<double>(out.replicates.size());
    double ss = 0.0;
    for (double v : out.replicates) ss += (v - m) * (v - m);
    out.estimate = m;
    out.se = std::sqrt(ss / static_cast<double>(out.replicates.size() - 1) / static_cast<double>(out.replicates.size()));
    return out;
}

struct ConcentrationBound {
    double value;
    /// Truncation index of h_m = (theta0_1, ..., theta0_m, 0, ...).
    std::size_t m;
    double infimum_term;
    double centered_term;
};

/// Upper bound on the concentration function at theta0: |h_m|_Z^p for the
/// shortest truncation h_m within eps of theta0, plus c (eps/tau)^{-1/alpha}
/// for the centered small-ball exponent.
inline ConcentrationBound concentration_upper(const CoefficientVector& theta0, double eps, const PriorSpec& spec,
                                              double c_tilde = 1.0) {
    spec.validate();
    if (!(eps > 0.0)) throw DomainError("concentration_upper: eps must be positive");
    const auto v = theta0.values();
    // tail[m] = sum_{l > m} theta_l^2
    std::vector<double> tail(v.size() + 1, 0.0);
    for (std::size_t i = v.size(); i-- > 0;) tail[i] = tail[i + 1] + v[i] * v[i];
    std::size_t m = 0;
    while (m <= v.size() && tail[m] > eps * eps) ++m;
    if (m > v.size()) throw DomainError("concentration_upper: tail of theta0 never drops below eps");
    double inf_term = 0.0;
    if (m > 0) {
        const CoefficientVector h(std::vector<double>(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m)));
        inf_term = std::pow(weighted_norm(h, norm::ZNorm{spec.alpha, spec.tau, spec.p}), spec.p);
    }
    const double centered = c_tilde * std::pow(eps / spec.tau, -1.0 / spec.alpha);
    return {inf_term + centered, m, inf_term, centered};
}

} // namespace pexp

#endif
