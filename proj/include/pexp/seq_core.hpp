#ifndef PEXP_SEQ_CORE_HPP
#define PEXP_SEQ_CORE_HPP

#include <cmath>
#include <cstddef>
#include <istream>
#include <numbers>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "error.hpp"

namespace pexp {

enum class Basis { Sine, CosineHalfShift, AbstractSequence };

inline std::string_view to_string(Basis b) {
    switch (b) {
    case Basis::Sine: return "sine";
    case Basis::CosineHalfShift: return "cosine_half_shift";
    case Basis::AbstractSequence: return "abstract";
    }
    return "abstract";
}

inline Basis basis_from_string(std::string_view s) {
    if (s == "sine") return Basis::Sine;
    if (s == "cosine_half_shift" || s == "cosine") return Basis::CosineHalfShift;
    if (s == "abstract") return Basis::AbstractSequence;
    throw ConfigError("basis", "unknown basis '" + std::string(s) + "'");
}

/// Truncation theta_1..theta_L of a square-summable sequence, single-indexed.
class CoefficientVector {
public:
    explicit CoefficientVector(std::vector<double> coeffs, Basis basis = Basis::AbstractSequence)
        : coeffs_(std::move(coeffs)), basis_(basis) {
        if (coeffs_.empty()) {
            throw DomainError("CoefficientVector: truncation level must be at least 1");
        }
        for (double v : coeffs_) {
            if (!std::isfinite(v)) {
                throw DomainError("CoefficientVector: entries must be finite");
            }
        }
    }

    static CoefficientVector zeros(std::size_t L, Basis basis = Basis::AbstractSequence) {
        return CoefficientVector(std::vector<double>(L, 0.0), basis);
    }

    std::size_t trunc_level() const noexcept { return coeffs_.size(); }
    Basis basis() const noexcept { return basis_; }
    std::span<const double> values() const noexcept { return coeffs_; }
    const std::vector<double>& vec() const noexcept { return coeffs_; }

    /// 1-based access, matching the sequence index ell.
    double at(std::size_t ell) const { return coeffs_.at(ell - 1); }
    double operator[](std::size_t i) const noexcept { return coeffs_[i]; }

    CoefficientVector with_basis(Basis b) const { return CoefficientVector(coeffs_, b); }

    friend bool operator==(const CoefficientVector&, const CoefficientVector&) = default;

private:
    std::vector<double> coeffs_;
    Basis basis_;
};

/// Neumaier-compensated accumulator.
class CompensatedSum {
public:
    void add(double v) noexcept {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v)) {
            comp_ += (sum_ - t) + v;
        } else {
            comp_ += (v - t) + sum_;
        }
        sum_ = t;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double l2_distance(std::span<const double> a, std::span<const double> b) {
    CompensatedSum s;
    const std::size_t n = std::max(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) {
        const double d = (i < a.size() ? a[i] : 0.0) - (i < b.size() ? b[i] : 0.0);
        s.add(d * d);
    }
    return std::sqrt(s.value());
}

// ---------------------------------------------------------------------------
// Norms

namespace norm {

struct L2 {};
struct Sobolev { double s; };
struct Besov { double s; double q; };
/// tau^{-1} (sum theta_l^2 l^{1+2 alpha})^{1/2}: Cameron-Martin-type space of the prior.
struct QNorm { double alpha; double tau; };
/// tau^{-1} (sum |theta_l|^p l^{p/2 + alpha p})^{1/p}: the Banach space entering the
/// concentration function.
struct ZNorm { double alpha; double tau; double p; };

} // namespace norm

using NormSpec = std::variant<norm::L2, norm::Sobolev, norm::Besov, norm::QNorm, norm::ZNorm>;

namespace detail {

// Exponent of l in the Besov(s, q) sum; Sobolev(s) is the q = 2 case.
inline double besov_weight(double s, double q) { return q * s + q / 2.0 - 1.0; }

// (sum_l l^{w} |theta_l|^q)^{1/q}
inline double weighted_lq(std::span<const double> theta, double w, double q) {
    CompensatedSum s;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double a = std::abs(theta[i]);
        if (a == 0.0) continue;
        const double logl = std::log(static_cast<double>(i + 1));
        s.add(std::exp(w * logl + q * std::log(a)));
    }
    return std::pow(s.value(), 1.0 / q);
}

} // namespace detail

inline double weighted_norm(const CoefficientVector& theta, const NormSpec& spec) {
    const auto v = theta.values();
    return std::visit(
        [&](const auto& k) -> double {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, norm::L2>) {
                return detail::weighted_lq(v, 0.0, 2.0);
            } else if constexpr (std::is_same_v<K, norm::Sobolev>) {
                return detail::weighted_lq(v, detail::besov_weight(k.s, 2.0), 2.0);
            } else if constexpr (std::is_same_v<K, norm::Besov>) {
                if (!(k.q >= 1.0)) throw DomainError("Besov norm: integrability q must be >= 1");
                return detail::weighted_lq(v, detail::besov_weight(k.s, k.q), k.q);
            } else if constexpr (std::is_same_v<K, norm::QNorm>) {
                if (!(k.tau > 0.0)) throw DomainError("Q norm: tau must be positive");
                return detail::weighted_lq(v, 1.0 + 2.0 * k.alpha, 2.0) / k.tau;
            } else {
                if (!(k.tau > 0.0)) throw DomainError("Z norm: tau must be positive");
                if (!(k.p >= 1.0 && k.p <= 2.0)) throw DomainError("Z norm: p must lie in [1,2]");
                return detail::weighted_lq(v, k.p / 2.0 + k.alpha * k.p, k.p) / k.tau;
            }
        },
        spec);
}

// ---------------------------------------------------------------------------
// Truths

namespace truth {

/// theta_l = l^{-decay} sin(frequency * l) on the sine basis.
struct PowerSine { double decay; double frequency; };
/// Same coefficients, tagged with the half-shifted cosine basis.
struct PowerSineCos { double decay; double frequency; };
/// Nonzero only at l = 2^k: theta = 2^{-k(beta+1/2-1/q)} k^{-2/q-delta}.
struct SparseDyadic { double beta; double q; double delta; };

} // namespace truth

struct TruthSpec {
    std::variant<truth::PowerSine, truth::PowerSineCos, truth::SparseDyadic> kind;
    std::size_t L;
};

inline CoefficientVector make_truth(const TruthSpec& spec) {
    if (spec.L < 1) throw DomainError("make_truth: L must be at least 1");
    std::vector<double> c(spec.L, 0.0);
    Basis basis = Basis::AbstractSequence;
    std::visit(
        [&](const auto& k) {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, truth::SparseDyadic>) {
                if (!(k.q >= 1.0)) throw DomainError("SparseDyadic: q must be >= 1");
                if (!(k.beta >= 1.0 / k.q)) throw DomainError("SparseDyadic: requires beta >= 1/q");
                if (!(k.delta > 0.0)) throw DomainError("SparseDyadic: delta must be positive");
                const double rate = k.beta + 0.5 - 1.0 / k.q;
                const double poly = 2.0 / k.q + k.delta;
                for (std::size_t kk = 1; (std::size_t{1} << kk) <= spec.L; ++kk) {
                    const double kd = static_cast<double>(kk);
                    c[(std::size_t{1} << kk) - 1] = std::exp2(-kd * rate) * std::pow(kd, -poly);
                }
            } else {
                if (!(k.decay > 0.5)) throw DomainError("PowerSine: decay exponent must exceed 1/2");
                for (std::size_t i = 0; i < spec.L; ++i) {
                    const double l = static_cast<double>(i + 1);
                    c[i] = std::pow(l, -k.decay) * std::sin(k.frequency * l);
                }
                basis = std::is_same_v<K, truth::PowerSine> ? Basis::Sine : Basis::CosineHalfShift;
            }
        },
        spec.kind);
    return CoefficientVector(std::move(c), basis);
}

/// f(t) = sum_l theta_l e_l(t) with e_l(t) = sqrt2 sin(pi l t) or sqrt2 cos(pi (l-1/2) t).
inline std::vector<double> evaluate_on_grid(const CoefficientVector& theta, std::span<const double> points) {
    if (theta.basis() == Basis::AbstractSequence) {
        throw DomainError("evaluate_on_grid: abstract sequences have no function-space basis");
    }
    const bool sine = theta.basis() == Basis::Sine;
    std::vector<double> out;
    out.reserve(points.size());
    for (double t : points) {
        CompensatedSum s;
        for (std::size_t i = 0; i < theta.trunc_level(); ++i) {
            const double l = static_cast<double>(i + 1);
            const double arg = sine ? std::numbers::pi * l * t : std::numbers::pi * (l - 0.5) * t;
            s.add(theta[i] * std::numbers::sqrt2 * (sine ? std::sin(arg) : std::cos(arg)));
        }
        out.push_back(s.value());
    }
    return out;
}

/// Equispaced points t_i = i/m, i = 1..m, in (0, 1].
inline std::vector<double> unit_grid(std::size_t m) {
    std::vector<double> t(m);
    for (std::size_t i = 0; i < m; ++i) t[i] = static_cast<double>(i + 1) / static_cast<double>(m);
    return t;
}

// ---------------------------------------------------------------------------
// Serialization

inline void write_csv(std::ostream& os, const CoefficientVector& theta) {
    os << "index,value\n";
    os.precision(17);
    for (std::size_t i = 0; i < theta.trunc_level(); ++i) {
        os << (i + 1) << ',' << theta[i] << '\n';
    }
}

inline CoefficientVector read_csv(std::istream& is, Basis basis = Basis::AbstractSequence) {
    std::string line;
    std::vector<double> values;
    bool header = true;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (header) {
            header = false;
            if (line.rfind("index", 0) == 0) continue;
        }
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw ConfigError("csv", "expected 'index,value' rows");
        const std::size_t idx = std::stoul(line.substr(0, comma));
        if (idx != values.size() + 1) throw ConfigError("csv", "indices must run 1..L in order");
        values.push_back(std::stod(line.substr(comma + 1)));
    }
    return CoefficientVector(std::move(values), basis);
}

inline nlohmann::json to_json_array(const CoefficientVector& theta) {
    return nlohmann::json(theta.vec());
}

inline CoefficientVector from_json_array(const nlohmann::json& j, Basis basis = Basis::AbstractSequence) {
    if (!j.is_array()) throw ConfigError("coefficients", "expected a JSON array");
    return CoefficientVector(j.get<std::vector<double>>(), basis);
}

} // namespace pexp

#endif
