#ifndef PEXP_EBAYES_HPP
#define PEXP_EBAYES_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "error.hpp"
#include "hbayes.hpp"
#include "parallel.hpp"
#include "pexp_dist.hpp"
#include "prior.hpp"
#include "quadrature.hpp"
#include "seq_core.hpp"
#include "wn_model.hpp"

namespace pexp {

struct QuadratureSpec {
    int order = 20;
    /// Tolerance relative to the integral of exp(g - max g).
    double rel_tol = 1e-12;
    /// The window extends until the log-integrand has dropped this far below its maximum.
    double log_drop = 50.0;
    int max_panels = 2000;
    /// At p = 2 use the Gaussian closed form unless this is set.
    bool force_quadrature = false;
};

/// Quadrature failure at one coordinate (1-based index).
class CoordinateError : public NumericError {
public:
    CoordinateError(std::size_t index, const std::string& what)
        : NumericError("coordinate " + std::to_string(index) + ": " + what), index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

/// log of the Gaussian convolution: -1/2 log(1 + n g^2) + n^2 g^2 x^2 / (2 (1 + n g^2)).
inline double gaussian_coord_log_marginal(double x, double n, double gamma) {
    const double b = n * gamma * gamma;
    return -0.5 * std::log1p(b) + 0.5 * n * b * x * x / (1.0 + b);
}

namespace detail {

// g(u) = a u - b u^2 / 2 - |u|^p / p with a >= 0, b > 0; concave.
struct CoordIntegrand {
    double a, b, p;

    double pen(double u) const {
        const double au = std::abs(u);
        return p == 1.0 ? au : p == 2.0 ? 0.5 * u * u : std::pow(au, p) / p;
    }

    double operator()(double u) const { return u * (a - 0.5 * b * u) - pen(u); }

    // g(u0 + d) - g(u0) without cancelling the large terms.
    double offset(double u0, double d) const {
        const double u = u0 + d;
        double dpen;
        if (p == 2.0) {
            dpen = d * (u0 + 0.5 * d);
        } else if (u0 > 0.0 && u > 0.0) {
            dpen = p == 1.0 ? d : std::pow(u0, p) * std::expm1(p * std::log1p(d / u0)) / p;
        } else {
            dpen = pen(u) - pen(u0);
        }
        return (a - b * u0) * d - 0.5 * b * d * d - dpen;
    }

    // g'(u) for u > 0.
    double slope(double u) const { return a - b * u - (p == 1.0 ? 1.0 : std::pow(u, p - 1.0)); }

    // Maximizer, which is >= 0 since a >= 0.
    double mode() const {
        if (p == 1.0) return std::max(0.0, (a - 1.0) / b);
        if (p == 2.0) return a / (b + 1.0);
        if (a == 0.0) return 0.0;
        double lo = 0.0;
        double hi = std::min(a / b, std::pow(a, 1.0 / (p - 1.0)));
        double u = 0.5 * (lo + hi);
        for (int it = 0; it < 200; ++it) {
            const double s = slope(u);
            if (s > 0.0) lo = u; else hi = u;
            const double curv = b + (p - 1.0) * std::pow(u, p - 2.0);
            double next = u + s / curv;
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            if (std::abs(next - u) <= 1e-15 * std::max(1.0, u) || hi - lo <= 1e-15 * std::max(1.0, hi)) {
                return next;
            }
            u = next;
        }
        return u;
    }
};

} // namespace detail

/// log of the integral of exp(n x t - n t^2 / 2) against the prior
/// density gamma^{-1} f_p(t / gamma), i.e. the per-coordinate marginal
/// likelihood ratio against theta_l = 0.
///
/// Works in u = t / gamma, where the log-integrand is g(u) = n gamma x u -
/// n gamma^2 u^2 / 2 - |u|^p / p. The mode is found by safeguarded Newton,
/// the window is where g stays within log_drop of its maximum, and the
/// non-smooth point u = 0 is a panel boundary.
inline double coord_log_marginal(double x, double n, double gamma, double p, const QuadratureSpec& quad = {}) {
    if (!(gamma > 0.0) || !(n > 0.0)) throw DomainError("coord_log_marginal: gamma and n must be positive");
    if (!(p >= 1.0 && p <= 2.0)) throw DomainError("coord_log_marginal: p must lie in [1, 2]");
    if (!std::isfinite(x)) throw DomainError("coord_log_marginal: x must be finite");
    const detail::CoordIntegrand g{n * gamma * std::abs(x), n * gamma * gamma, p};
    const double u0 = g.mode();
    const double g0 = g(u0);

    // Penalty curvature (p - 1) u^{p-2} is unbounded near 0 for p < 2; cap it
    // at its value at 1 so a flat likelihood cannot stretch the window.
    double curv = g.b + (p > 1.0 ? (p - 1.0) * std::pow(std::max(u0, 1.0), p - 2.0) : 0.0);
    double step = curv > 0.0 ? 1.0 / std::sqrt(curv) : 1.0;
    if (p == 1.0 && u0 == 0.0) step = std::min(step, 1.0);
    // Integrate over the offset d = u - u0.
    auto edge = [&](double dir) {
        double d = step;
        for (int it = 0; it < 2000 && g.offset(u0, dir * d) > -quad.log_drop; ++it) d *= 2.0;
        return dir * d;
    };
    const double lo = edge(-1.0);
    const double hi = edge(1.0);

    auto f = [&](double d) { return std::exp(g.offset(u0, d)); };
    const double rough = quad::gauss_legendre_panel(quad::gauss_legendre(quad.order), f, lo, hi);
    const double tol = quad.rel_tol * std::max(rough, std::numeric_limits<double>::min());
    double total = 0.0;
    bool converged = true;
    auto piece = [&](double a, double b) {
        const auto r = quad::integrate_adaptive(f, a, b, tol * (b - a) / (hi - lo), quad.order, quad.max_panels);
        total += r.value;
        converged = converged && r.converged;
    };
    const double kink = -u0;
    if (p < 2.0 && lo < kink && hi > kink) {
        piece(lo, kink);
        piece(kink, hi);
    } else {
        piece(lo, hi);
    }
    if (!converged || !(total > 0.0)) throw NumericError("quadrature did not converge");
    return g0 + std::log(total) - PExp(p).log_normalizer();
}

struct MarginalResult {
    Lambda lambda{};
    double log_marginal = 0.0;
    /// Per-coordinate log integrals, when requested.
    std::vector<double> per_coordinate;
};

/// Sum of coord_log_marginal over coordinates [first, last) (0-based).
inline MarginalResult log_marginal_block(const Observation& obs, const Lambda& lambda, double p, std::size_t first,
                                         std::size_t last, const QuadratureSpec& quad = {}, bool keep_terms = false) {
    if (!(lambda.tau > 0.0) || !(lambda.alpha > 0.0)) throw DomainError("log_marginal: lambda must be positive");
    last = std::min(last, obs.trunc_level());
    MarginalResult out{lambda, 0.0, {}};
    CompensatedSum s;
    for (std::size_t i = first; i < last; ++i) {
        const double ell = static_cast<double>(i + 1);
        const double gamma = lambda.tau * std::pow(ell, -0.5 - lambda.alpha);
        double v;
        if (p == 2.0 && !quad.force_quadrature) {
            v = gaussian_coord_log_marginal(obs.x[i], obs.n, gamma);
        } else {
            try {
                v = coord_log_marginal(obs.x[i], obs.n, gamma, p, quad);
            } catch (const NumericError& e) {
                throw CoordinateError(i + 1, e.what());
            }
        }
        s.add(v);
        if (keep_terms) out.per_coordinate.push_back(v);
    }
    out.log_marginal = s.value();
    return out;
}

/// log of the marginal likelihood ratio of X under the prior with hyper-parameter lambda.
inline MarginalResult log_marginal(const Observation& obs, const Lambda& lambda, double p,
                                   const QuadratureSpec& quad = {}, bool keep_terms = false) {
    return log_marginal_block(obs, lambda, p, 0, obs.trunc_level(), quad, keep_terms);
}

// ---------------------------------------------------------------------------
// Candidate grids

struct GridResolution {
    double tau_per_decade = 25.0;
    double alpha_step = 0.05;
    /// alpha interval used by the AlphaOnly and Both modes.
    double alpha_low = 0.5;
    double alpha_high = 100.0;
};

struct CandidateGrid {
    HyperParamMode mode;
    std::vector<Lambda> points;
    double alpha_low, alpha_high;
    double tau_low, tau_high;
    GridResolution resolution;
};

/// TauOnly bounds [n^{-1/(2 + p + 2 alpha p)}, n^alpha].
inline std::pair<double, double> tau_bounds(double n, double p, double alpha) {
    return {std::pow(n, -1.0 / (2.0 + p + 2.0 * alpha * p)), std::pow(n, alpha)};
}

namespace detail {

inline std::vector<double> geometric_points(double lo, double hi, double per_decade) {
    const double decades = std::log10(hi / lo);
    const auto k = std::max<long>(1, static_cast<long>(std::floor(decades * per_decade + 1e-9)));
    std::vector<double> v(static_cast<std::size_t>(k) + 1);
    for (long i = 0; i <= k; ++i) v[static_cast<std::size_t>(i)] = lo * std::pow(hi / lo, static_cast<double>(i) / k);
    v.front() = lo;
    v.back() = hi;
    return v;
}

inline std::vector<double> uniform_points(double lo, double hi, double step) {
    const auto k = std::max<long>(1, static_cast<long>(std::floor((hi - lo) / step + 1e-9)));
    std::vector<double> v(static_cast<std::size_t>(k) + 1);
    for (long i = 0; i <= k; ++i) v[static_cast<std::size_t>(i)] = lo + (hi - lo) * static_cast<double>(i) / k;
    v.back() = hi;
    return v;
}

} // namespace detail

/// Candidate set: geometric in tau, uniform in alpha, both including the end points.
/// A range shorter than one resolution step gives just its two end points.
inline CandidateGrid build_grid(const HyperParamMode& mode, double n, double p, const GridResolution& res = {}) {
    if (!(n >= 2.0)) throw DomainError("build_grid: n must be >= 2");
    if (!(res.tau_per_decade > 0.0) || !(res.alpha_step > 0.0)) throw DomainError("build_grid: bad resolution");
    mode.validate();
    CandidateGrid g{mode, {}, 0, 0, 0, 0, res};
    switch (mode.free) {
    case FreeParams::Tau: {
        const auto [lo, hi] = tau_bounds(n, p, mode.fixed);
        for (double t : detail::geometric_points(lo, hi, res.tau_per_decade)) g.points.push_back({mode.fixed, t});
        g.alpha_low = g.alpha_high = mode.fixed;
        g.tau_low = lo;
        g.tau_high = hi;
        break;
    }
    case FreeParams::Alpha:
        if (!(res.alpha_low > 0.0 && res.alpha_high >= res.alpha_low)) {
            throw DomainError("build_grid: alpha bounds must satisfy 0 < low <= high");
        }
        for (double a : detail::uniform_points(res.alpha_low, res.alpha_high, res.alpha_step)) {
            g.points.push_back({a, mode.fixed});
        }
        g.alpha_low = res.alpha_low;
        g.alpha_high = res.alpha_high;
        g.tau_low = g.tau_high = mode.fixed;
        break;
    case FreeParams::Both:
        if (!(res.alpha_low > 0.0 && res.alpha_high >= res.alpha_low)) {
            throw DomainError("build_grid: alpha bounds must satisfy 0 < low <= high");
        }
        g.alpha_low = res.alpha_low;
        g.alpha_high = res.alpha_high;
        g.tau_low = std::numeric_limits<double>::infinity();
        g.tau_high = 0.0;
        for (double a : detail::uniform_points(res.alpha_low, res.alpha_high, res.alpha_step)) {
            const auto [lo, hi] = tau_bounds(n, p, a);
            g.tau_low = std::min(g.tau_low, lo);
            g.tau_high = std::max(g.tau_high, hi);
            for (double t : detail::geometric_points(lo, hi, res.tau_per_decade)) g.points.push_back({a, t});
        }
        break;
    }
    if (g.points.empty()) throw DomainError("build_grid: empty grid");
    return g;
}

struct MmleResult {
    Lambda lambda_hat{};
    std::size_t argmax = 0;
    /// One entry per grid point, in grid order.
    std::vector<MarginalResult> table;
};

/// Grid maximizer of the marginal likelihood. NaN entries are skipped; ties
/// go to the smaller tau, then the smaller alpha, so the answer does not
/// depend on the order of the grid.
inline MmleResult mmle(const Observation& obs, const CandidateGrid& grid, double p, const QuadratureSpec& quad = {}) {
    if (grid.points.empty()) throw DomainError("mmle: empty grid");
    MmleResult out;
    out.table.resize(grid.points.size());
    parallel_for(grid.points.size(), [&](std::size_t i) { out.table[i] = log_marginal(obs, grid.points[i], p, quad); });
    bool found = false;
    for (std::size_t i = 0; i < out.table.size(); ++i) {
        const auto& r = out.table[i];
        if (std::isnan(r.log_marginal)) continue;
        if (!found) {
            out.argmax = i;
            found = true;
            continue;
        }
        const auto& best = out.table[out.argmax];
        const bool better =
            r.log_marginal > best.log_marginal ||
            (r.log_marginal == best.log_marginal &&
             (r.lambda.tau < best.lambda.tau || (r.lambda.tau == best.lambda.tau && r.lambda.alpha < best.lambda.alpha)));
        if (better) out.argmax = i;
    }
    if (!found) throw NumericError("mmle: every grid value of the marginal likelihood is NaN");
    out.lambda_hat = out.table[out.argmax].lambda;
    return out;
}

/// Empirical Bayes posterior Pi(. | X, lambda_hat), sampled with lambda frozen.
inline PosteriorSummary eb_posterior(const Observation& obs, const Lambda& lambda_hat, double p, const GibbsConfig& cfg) {
    return run_frozen(obs, p, lambda_hat, cfg).summary;
}

/// Conjugate posterior mean at p = 2: n g_l^2 x_l / (1 + n g_l^2).
inline CoefficientVector gaussian_posterior_mean(const Observation& obs, const Lambda& lambda) {
    std::vector<double> m(obs.trunc_level());
    for (std::size_t i = 0; i < m.size(); ++i) {
        const double g = lambda.tau * std::pow(static_cast<double>(i + 1), -0.5 - lambda.alpha);
        const double b = obs.n * g * g;
        m[i] = b * obs.x[i] / (1.0 + b);
    }
    return CoefficientVector(std::move(m), obs.x.basis());
}

/// Conjugate posterior variances g_l^2 / (1 + n g_l^2).
inline std::vector<double> gaussian_posterior_variance(const Observation& obs, const Lambda& lambda) {
    std::vector<double> v(obs.trunc_level());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double g = lambda.tau * std::pow(static_cast<double>(i + 1), -0.5 - lambda.alpha);
        v[i] = g * g / (1.0 + obs.n * g * g);
    }
    return v;
}

} // namespace pexp

#endif
