#ifndef PEXP_WN_MODEL_HPP
#define PEXP_WN_MODEL_HPP

#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "rng.hpp"
#include "seq_core.hpp"

namespace pexp {

/// Sequence-space white noise data x_l = theta_{0,l} + z_l / sqrt(n).
struct Observation {
    CoefficientVector x;
    double n;
    std::optional<std::uint64_t> seed;

    Observation(CoefficientVector data, double noise_precision, std::optional<std::uint64_t> s = {})
        : x(std::move(data)), n(noise_precision), seed(s) {
        if (!(n > 0.0) || !std::isfinite(n)) {
            throw DomainError("Observation: n must be positive and finite");
        }
    }

    std::size_t trunc_level() const noexcept { return x.trunc_level(); }
};

inline Observation simulate(const CoefficientVector& theta0, double n, Rng& rng) {
    if (!(n > 0.0)) throw DomainError("simulate: n must be positive");
    const double sd = 1.0 / std::sqrt(n);
    std::vector<double> x(theta0.trunc_level());
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = theta0[i] + sd * rng.normal();
    }
    return Observation(CoefficientVector(std::move(x), theta0.basis()), n);
}

inline Observation simulate(const CoefficientVector& theta0, double n, std::uint64_t seed) {
    Rng rng(seed);
    Observation obs = simulate(theta0, n, rng);
    obs.seed = seed;
    return obs;
}

/// l_n(theta) = n <x, theta> - (n/2) |theta|^2; the shorter vector is zero-padded.
inline double log_likelihood(const Observation& obs, std::span<const double> theta) {
    const auto x = obs.x.values();
    CompensatedSum s;
    const std::size_t m = std::min(x.size(), theta.size());
    for (std::size_t i = 0; i < m; ++i) {
        s.add(theta[i] * (x[i] - 0.5 * theta[i]));
    }
    for (std::size_t i = m; i < theta.size(); ++i) {
        s.add(-0.5 * theta[i] * theta[i]);
    }
    return obs.n * s.value();
}

inline double log_likelihood(const Observation& obs, const CoefficientVector& theta) {
    return log_likelihood(obs, theta.values());
}

/// l_n(a) - l_n(b) = n sum (a_l - b_l)(x_l - (a_l + b_l)/2), free of the
/// cancellation of differencing two large log-likelihoods.
inline double log_likelihood_diff(const Observation& obs, std::span<const double> a, std::span<const double> b) {
    const auto x = obs.x.values();
    CompensatedSum s;
    const std::size_t m = std::max(a.size(), b.size());
    for (std::size_t i = 0; i < m; ++i) {
        const double ai = i < a.size() ? a[i] : 0.0;
        const double bi = i < b.size() ? b[i] : 0.0;
        const double xi = i < x.size() ? x[i] : 0.0;
        s.add((ai - bi) * (xi - 0.5 * (ai + bi)));
    }
    return obs.n * s.value();
}

namespace trunc_rule {
struct Fixed { std::size_t L; };
struct PowerRule { double exponent; };
} // namespace trunc_rule

using TruncationRule = std::variant<trunc_rule::Fixed, trunc_rule::PowerRule>;

/// Fixed(L) -> L; PowerRule(e) -> ceil(n^e). Powers within 1e-9 relative of an
/// integer are snapped to it, so 1000^{2/3} gives 100 rather than 101.
inline std::size_t truncation_level(double n, const TruncationRule& rule) {
    if (!(n >= 1.0)) throw DomainError("truncation_level: n must be >= 1");
    std::size_t L = 0;
    if (const auto* f = std::get_if<trunc_rule::Fixed>(&rule)) {
        L = f->L;
    } else {
        const double v = std::pow(n, std::get<trunc_rule::PowerRule>(rule).exponent);
        const double r = std::round(v);
        L = static_cast<std::size_t>(std::abs(v - r) <= 1e-9 * std::max(1.0, r) ? r : std::ceil(v));
    }
    if (L < 1) throw DomainError("truncation_level: rule produced L < 1");
    return L;
}

// CSV body (index, x_value) plus a JSON header {n, L, basis, seed}.

inline nlohmann::json observation_header(const Observation& obs) {
    nlohmann::json h;
    h["n"] = obs.n;
    h["L"] = obs.trunc_level();
    h["basis"] = std::string(to_string(obs.x.basis()));
    h["seed"] = obs.seed ? nlohmann::json(*obs.seed) : nlohmann::json(nullptr);
    return h;
}

inline void write_observation_csv(std::ostream& os, const Observation& obs) {
    os << "index,x_value\n";
    os.precision(17);
    for (std::size_t i = 0; i < obs.trunc_level(); ++i) {
        os << (i + 1) << ',' << obs.x[i] << '\n';
    }
}

inline Observation read_observation(const nlohmann::json& header, std::istream& csv) {
    if (!header.contains("n")) throw ConfigError("n", "missing from observation header");
    const Basis basis = basis_from_string(header.value("basis", std::string("abstract")));
    CoefficientVector x = read_csv(csv, basis);
    if (header.contains("L") && header["L"].get<std::size_t>() != x.trunc_level()) {
        throw ConfigError("L", "header L does not match the number of CSV rows");
    }
    std::optional<std::uint64_t> seed;
    if (header.contains("seed") && !header["seed"].is_null()) seed = header["seed"].get<std::uint64_t>();
    return Observation(std::move(x), header["n"].get<double>(), seed);
}

} // namespace pexp

#endif
