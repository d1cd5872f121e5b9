#ifndef PEXP_PRIOR_HPP
#define PEXP_PRIOR_HPP

#include <atomic>
#include <cmath>
#include <iostream>
#include <limits>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "pexp_dist.hpp"
#include "rng.hpp"
#include "seq_core.hpp"
#include "special.hpp"

namespace pexp {

/// Hyper-parameter lambda = (alpha, tau). Components that a mode keeps fixed
/// simply carry the fixed value.
struct Lambda {
    double alpha;
    double tau;

    friend bool operator==(const Lambda&, const Lambda&) = default;
};

/// alpha-regular, tau-scaled p-exponential prior truncated at L:
/// theta_l = gamma_l xi_l with gamma_l = tau l^{-1/2-alpha}.
struct PriorSpec {
    double p;
    double alpha;
    double tau;
    std::size_t L;

    void validate() const {
        if (!(p >= 1.0 && p <= 2.0)) throw DomainError("PriorSpec: p must lie in [1,2]");
        if (!(alpha > 0.0)) throw DomainError("PriorSpec: alpha must be positive");
        if (!(tau > 0.0) || !std::isfinite(tau)) throw DomainError("PriorSpec: tau must be positive");
        if (L < 1) throw DomainError("PriorSpec: L must be at least 1");
    }

    Lambda lambda() const { return {alpha, tau}; }
    PriorSpec with(const Lambda& l) const { return {p, l.alpha, l.tau, L}; }

    double scale(std::size_t ell) const {
        return tau * std::pow(static_cast<double>(ell), -0.5 - alpha);
    }

    std::vector<double> scales() const {
        std::vector<double> g(L);
        for (std::size_t i = 0; i < L; ++i) g[i] = scale(i + 1);
        return g;
    }
};

inline CoefficientVector sample_prior(const PriorSpec& spec, Rng& rng, Basis basis = Basis::AbstractSequence) {
    spec.validate();
    const PExp d(spec.p);
    std::vector<double> th(spec.L);
    for (std::size_t i = 0; i < spec.L; ++i) th[i] = spec.scale(i + 1) * d.sample(rng);
    return CoefficientVector(std::move(th), basis);
}

inline double prior_log_density(const PriorSpec& spec, const CoefficientVector& theta) {
    spec.validate();
    if (theta.trunc_level() != spec.L) throw DomainError("prior_log_density: dimension mismatch");
    const PExp d(spec.p);
    CompensatedSum s;
    for (std::size_t i = 0; i < spec.L; ++i) {
        const double g = spec.scale(i + 1);
        s.add(d.log_density(theta[i] / g) - std::log(g));
    }
    return s.value();
}

// ---------------------------------------------------------------------------
// Whitening: theta_l = gamma_l F_p^{-1}(Phi(xi_l)).

namespace detail {

inline std::atomic<long>& saturation_count() {
    static std::atomic<long> count{0};
    return count;
}

inline double clamp_tail(double v) {
    constexpr double floor = std::numeric_limits<double>::min();
    if (v < floor) {
        if (saturation_count().fetch_add(1) == 0) {
            std::clog << "pexp: warning: whitening tail probability underflowed; clamped to "
                      << floor << '\n';
        }
        return floor;
    }
    return v;
}

} // namespace detail

/// Unit-scale whitening map z -> F_p^{-1}(Phi(z)), evaluated through the
/// smaller tail so it stays exact-to-rounding for |z| well past 8.
inline double whiten_unit(double z, const PExp& d) {
    if (d.p() == 2.0 || z == 0.0) return z;
    const double tail = detail::clamp_tail(special::normal_cdf(-std::abs(z)));
    return std::copysign(d.inv_upper_tail(tail), z);
}

inline double unwhiten_unit(double t, const PExp& d) {
    if (d.p() == 2.0 || t == 0.0) return t;
    const double tail = detail::clamp_tail(d.upper_tail(std::abs(t)));
    if (tail >= 0.5) return 0.0;
    return std::copysign(-special::normal_quantile(tail), t);
}

inline CoefficientVector whiten_transform(const CoefficientVector& xi, const PriorSpec& spec) {
    spec.validate();
    if (xi.trunc_level() != spec.L) throw DomainError("whiten_transform: dimension mismatch");
    const PExp d(spec.p);
    std::vector<double> th(spec.L);
    for (std::size_t i = 0; i < spec.L; ++i) th[i] = spec.scale(i + 1) * whiten_unit(xi[i], d);
    return CoefficientVector(std::move(th), xi.basis());
}

inline CoefficientVector inverse_whiten_transform(const CoefficientVector& theta, const PriorSpec& spec) {
    spec.validate();
    if (theta.trunc_level() != spec.L) throw DomainError("inverse_whiten_transform: dimension mismatch");
    const PExp d(spec.p);
    std::vector<double> xi(spec.L);
    for (std::size_t i = 0; i < spec.L; ++i) xi[i] = unwhiten_unit(theta[i] / spec.scale(i + 1), d);
    return CoefficientVector(std::move(xi), theta.basis());
}

/// Coordinate map theta_j -> (tau'/tau) j^{alpha - alpha'} theta_j carrying
/// Pi(.|alpha, tau) onto Pi(.|alpha', tau').
inline CoefficientVector rescale_noncentered(const CoefficientVector& v, const Lambda& from, const Lambda& to) {
    if (!(from.tau > 0.0 && to.tau > 0.0)) throw DomainError("rescale_noncentered: tau must be positive");
    std::vector<double> out(v.trunc_level());
    const double ratio = to.tau / from.tau;
    const double dalpha = from.alpha - to.alpha;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double w = dalpha == 0.0 ? 1.0 : std::pow(static_cast<double>(i + 1), dalpha);
        out[i] = ratio * w * v[i];
    }
    return CoefficientVector(std::move(out), v.basis());
}

// ---------------------------------------------------------------------------
// Hyper-parameter modes and hyper-priors

enum class FreeParams { Tau, Alpha, Both };

struct HyperParamMode {
    FreeParams free;
    /// Value of the component held fixed (alpha for Tau, tau for Alpha); unused for Both.
    double fixed;

    static HyperParamMode tau_only(double alpha) { return {FreeParams::Tau, alpha}; }
    static HyperParamMode alpha_only(double tau) { return {FreeParams::Alpha, tau}; }
    static HyperParamMode both() { return {FreeParams::Both, 0.0}; }

    bool alpha_free() const { return free != FreeParams::Tau; }
    bool tau_free() const { return free != FreeParams::Alpha; }

    void validate() const {
        if (free != FreeParams::Both && !(fixed > 0.0)) {
            throw DomainError("HyperParamMode: fixed component must be positive");
        }
    }

    /// Overwrite the fixed component of lambda.
    Lambda pin(Lambda l) const {
        if (free == FreeParams::Tau) l.alpha = fixed;
        if (free == FreeParams::Alpha) l.tau = fixed;
        return l;
    }
};

inline std::string_view to_string(FreeParams f) {
    switch (f) {
    case FreeParams::Tau: return "tau";
    case FreeParams::Alpha: return "alpha";
    case FreeParams::Both: return "both";
    }
    return "both";
}

/// Left truncation point of the tau hyper-prior, possibly depending on alpha.
namespace tau_trunc {
struct Fixed { double left; };
/// n^{-1/(2 + p + 2 alpha p)}: the support under which adaptation is guaranteed.
struct Assumption { double n; double p; };
/// n^{-1/(3 + 2 alpha)}: the truncation used in the published Laplace experiment.
struct Experiment { double n; };
} // namespace tau_trunc

using TauTruncation = std::variant<tau_trunc::Fixed, tau_trunc::Assumption, tau_trunc::Experiment>;

inline double tau_left(const TauTruncation& t, double alpha) {
    return std::visit(
        [&](const auto& k) -> double {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, tau_trunc::Fixed>) {
                return k.left;
            } else if constexpr (std::is_same_v<K, tau_trunc::Assumption>) {
                return std::pow(k.n, -1.0 / (2.0 + k.p + 2.0 * alpha * k.p));
            } else {
                return std::pow(k.n, -1.0 / (3.0 + 2.0 * alpha));
            }
        },
        t);
}

/// Inverse-gamma(a, b) density proportional to tau^{-a-1} e^{-b/tau}, on [left, inf).
struct TruncInvGamma {
    double a;
    double b;
    TauTruncation trunc;

    double left(double alpha) const { return tau_left(trunc, alpha); }

    // P(tau >= left) = P(G <= b/left) with G ~ Gamma(a, 1)
    double support_mass(double alpha) const {
        const double l = left(alpha);
        return l > 0.0 ? special::reg_lower_inc_gamma(a, b / l) : 1.0;
    }

    double log_density(double tau, double alpha) const {
        if (!(tau >= left(alpha)) || !std::isfinite(tau)) return -std::numeric_limits<double>::infinity();
        return a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(tau) - b / tau -
               std::log(support_mass(alpha));
    }

    double quantile(double u, double alpha) const {
        const double g = special::inv_reg_lower_inc_gamma(a, u * support_mass(alpha));
        return b / g;
    }

    double sample(Rng& rng, double alpha) const { return quantile(rng.uniform(), alpha); }
    double median(double alpha) const { return quantile(0.5, alpha); }
};

/// rate e^{-rate x} restricted to [lo, hi].
struct TruncExp {
    double rate;
    double lo;
    double hi;

    double log_mass() const { return std::log(-std::expm1(-rate * (hi - lo))); }

    double log_density(double x) const {
        if (!(x >= lo && x <= hi)) return -std::numeric_limits<double>::infinity();
        return std::log(rate) - rate * (x - lo) - log_mass();
    }

    double quantile(double u) const {
        return lo - std::log1p(u * std::expm1(-rate * (hi - lo))) / rate;
    }

    double sample(Rng& rng) const { return quantile(rng.uniform()); }
    double median() const { return quantile(0.5); }

    double mean() const {
        const double w = hi - lo;
        return lo + 1.0 / rate - w * std::exp(-rate * w) / (-std::expm1(-rate * w));
    }
};

/// alpha ~ TruncExp, tau | alpha ~ TruncInvGamma with alpha-dependent truncation.
struct ProductHyper {
    TruncExp alpha_part;
    TruncInvGamma tau_part;
};

/// Hyper-prior on the free components of lambda. The variant alternative
/// determines the mode: TruncInvGamma -> tau, TruncExp -> alpha, ProductHyper -> both.
class HyperPriorSpec {
public:
    using Kind = std::variant<TruncInvGamma, TruncExp, ProductHyper>;

    HyperPriorSpec(Kind kind, HyperParamMode mode) : kind_(std::move(kind)), mode_(mode) {
        mode_.validate();
        const bool ok = (std::holds_alternative<TruncInvGamma>(kind_) && mode_.free == FreeParams::Tau) ||
                        (std::holds_alternative<TruncExp>(kind_) && mode_.free == FreeParams::Alpha) ||
                        (std::holds_alternative<ProductHyper>(kind_) && mode_.free == FreeParams::Both);
        if (!ok) throw ConfigError("hyper.kind", "hyper-prior kind does not match the hyper-parameter mode");
    }

    const Kind& kind() const noexcept { return kind_; }
    const HyperParamMode& mode() const noexcept { return mode_; }

    /// Normalized log-density of the free components; -inf outside the support.
    double log_density(const Lambda& l) const {
        return std::visit(
            [&](const auto& k) -> double {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, TruncInvGamma>) {
                    return k.log_density(l.tau, mode_.fixed);
                } else if constexpr (std::is_same_v<K, TruncExp>) {
                    return k.log_density(l.alpha);
                } else {
                    const double la = k.alpha_part.log_density(l.alpha);
                    if (!std::isfinite(la)) return la;
                    return la + k.tau_part.log_density(l.tau, l.alpha);
                }
            },
            kind_);
    }

    bool in_support(const Lambda& l) const { return std::isfinite(log_density(l)); }

    Lambda sample(Rng& rng) const {
        return std::visit(
            [&](const auto& k) -> Lambda {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, TruncInvGamma>) {
                    return {mode_.fixed, k.sample(rng, mode_.fixed)};
                } else if constexpr (std::is_same_v<K, TruncExp>) {
                    return {k.sample(rng), mode_.fixed};
                } else {
                    const double a = k.alpha_part.sample(rng);
                    return {a, k.tau_part.sample(rng, a)};
                }
            },
            kind_);
    }

    /// Componentwise median (for Both: alpha median, then tau median given it).
    Lambda median() const {
        return std::visit(
            [&](const auto& k) -> Lambda {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, TruncInvGamma>) {
                    return {mode_.fixed, k.median(mode_.fixed)};
                } else if constexpr (std::is_same_v<K, TruncExp>) {
                    return {k.median(), mode_.fixed};
                } else {
                    const double a = k.alpha_part.median();
                    return {a, k.tau_part.median(a)};
                }
            },
            kind_);
    }

private:
    Kind kind_;
    HyperParamMode mode_;
};

inline double hyper_log_density(const HyperPriorSpec& h, const Lambda& l) { return h.log_density(l); }
inline Lambda hyper_sample(const HyperPriorSpec& h, Rng& rng) { return h.sample(rng); }

// ---------------------------------------------------------------------------
// JSON schema: {p, alpha, tau, hyper: {kind, params, trunc}}

inline nlohmann::json to_json(const PriorSpec& s) {
    return {{"p", s.p}, {"alpha", s.alpha}, {"tau", s.tau}, {"L", s.L}};
}

inline PriorSpec prior_from_json(const nlohmann::json& j) {
    auto get = [&](const char* key) {
        if (!j.contains(key) || !j[key].is_number()) throw ConfigError(key, "missing or not a number");
        return j[key].get<double>();
    };
    PriorSpec s{get("p"), get("alpha"), get("tau"), j.value("L", std::size_t{1})};
    try {
        s.validate();
    } catch (const DomainError& e) {
        throw ConfigError("prior", e.what());
    }
    return s;
}

namespace detail {

inline nlohmann::json trunc_to_json(const TauTruncation& t) {
    return std::visit(
        [](const auto& k) -> nlohmann::json {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, tau_trunc::Fixed>) return {{"rule", "fixed"}, {"left", k.left}};
            else if constexpr (std::is_same_v<K, tau_trunc::Assumption>)
                return {{"rule", "assumption"}, {"n", k.n}, {"p", k.p}};
            else return {{"rule", "experiment"}, {"n", k.n}};
        },
        t);
}

inline double num(const nlohmann::json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key) || !j[key].is_number()) {
        throw ConfigError(where + "." + key, "missing or not a number");
    }
    return j[key].get<double>();
}

inline TauTruncation trunc_from_json(const nlohmann::json& j, const std::string& where) {
    const std::string rule = j.value("rule", std::string("assumption"));
    if (rule == "fixed") return tau_trunc::Fixed{num(j, "left", where)};
    if (rule == "assumption") return tau_trunc::Assumption{num(j, "n", where), num(j, "p", where)};
    if (rule == "experiment") return tau_trunc::Experiment{num(j, "n", where)};
    throw ConfigError(where + ".rule", "unknown truncation rule '" + rule + "'");
}

} // namespace detail

inline nlohmann::json to_json(const HyperPriorSpec& h) {
    nlohmann::json j;
    std::visit(
        [&](const auto& k) {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, TruncInvGamma>) {
                j["kind"] = "trunc_inv_gamma";
                j["params"] = {{"a", k.a}, {"b", k.b}};
                j["trunc"] = detail::trunc_to_json(k.trunc);
            } else if constexpr (std::is_same_v<K, TruncExp>) {
                j["kind"] = "trunc_exp";
                j["params"] = {{"rate", k.rate}};
                j["trunc"] = {{"lo", k.lo}, {"hi", k.hi}};
            } else {
                j["kind"] = "product";
                j["params"] = {{"alpha", {{"rate", k.alpha_part.rate}}},
                               {"tau", {{"a", k.tau_part.a}, {"b", k.tau_part.b}}}};
                j["trunc"] = {{"alpha", {{"lo", k.alpha_part.lo}, {"hi", k.alpha_part.hi}}},
                              {"tau", detail::trunc_to_json(k.tau_part.trunc)}};
            }
        },
        h.kind());
    j["mode"] = std::string(to_string(h.mode().free));
    if (h.mode().free != FreeParams::Both) j["fixed"] = h.mode().fixed;
    return j;
}

inline HyperPriorSpec hyper_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("kind")) throw ConfigError("hyper.kind", "missing");
    const std::string kind = j["kind"].get<std::string>();
    const nlohmann::json params = j.value("params", nlohmann::json::object());
    const nlohmann::json trunc = j.value("trunc", nlohmann::json::object());
    if (kind == "trunc_inv_gamma") {
        TruncInvGamma g{detail::num(params, "a", "hyper.params"), detail::num(params, "b", "hyper.params"),
                        detail::trunc_from_json(trunc, "hyper.trunc")};
        return HyperPriorSpec(g, HyperParamMode::tau_only(detail::num(j, "fixed", "hyper")));
    }
    if (kind == "trunc_exp") {
        TruncExp e{detail::num(params, "rate", "hyper.params"), detail::num(trunc, "lo", "hyper.trunc"),
                   detail::num(trunc, "hi", "hyper.trunc")};
        if (!(e.lo < e.hi) || !(e.rate > 0.0)) throw ConfigError("hyper.trunc", "need rate > 0 and lo < hi");
        return HyperPriorSpec(e, HyperParamMode::alpha_only(detail::num(j, "fixed", "hyper")));
    }
    if (kind == "product") {
        const auto pa = params.value("alpha", nlohmann::json::object());
        const auto pt = params.value("tau", nlohmann::json::object());
        const auto ta = trunc.value("alpha", nlohmann::json::object());
        const auto tt = trunc.value("tau", nlohmann::json::object());
        ProductHyper ph{TruncExp{detail::num(pa, "rate", "hyper.params.alpha"), detail::num(ta, "lo", "hyper.trunc.alpha"),
                                 detail::num(ta, "hi", "hyper.trunc.alpha")},
                        TruncInvGamma{detail::num(pt, "a", "hyper.params.tau"), detail::num(pt, "b", "hyper.params.tau"),
                                      detail::trunc_from_json(tt, "hyper.trunc.tau")}};
        return HyperPriorSpec(ph, HyperParamMode::both());
    }
    throw ConfigError("hyper.kind", "unknown hyper-prior kind '" + kind + "'");
}

} // namespace pexp

#endif
