#ifndef PEXP_HBAYES_HPP
#define PEXP_HBAYES_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "pexp_dist.hpp"
#include "prior.hpp"
#include "rng.hpp"
#include "seq_core.hpp"
#include "wn_model.hpp"

// Hierarchical posterior sampling by non-centred, whitened pCN-within-Gibbs.
//
// The chain lives on (xi, lambda) with xi a priori iid N(0,1) and
// theta = T(xi, lambda), T(xi, lambda)_l = gamma_l(lambda) F_p^{-1}(Phi(xi_l)).
// The xi-block is a pCN move, which leaves N(0, I) invariant, so its
// acceptance ratio is the likelihood ratio alone. The lambda-block is a
// Gaussian random walk on (log tau, alpha) with xi held fixed.

namespace pexp {

struct StepSizes {
    double pcn_beta = 0.1;
    double log_tau = 0.2;
    double alpha = 0.2;
};

enum class Kernel {
    /// pCN on whitened xi (default).
    Whitened,
    /// Random-walk Metropolis on the unit-scale coordinates v/gamma(1) of
    /// theta = tau v; TauOnly only. Kept for mixing comparisons.
    NonCentered,
};

struct GibbsConfig {
    std::size_t iters = 10000;
    std::size_t burnin = 2000;
    std::size_t thin = 1;
    std::uint64_t seed = 1;
    bool adapt = true;
    double target_accept_xi = 0.30;
    double target_accept_lambda = 0.35;
    bool update_lambda = true;
    Kernel kernel = Kernel::Whitened;
    StepSizes steps{};
    std::optional<Lambda> init_lambda;
    std::optional<std::vector<double>> init_xi;
    double band_level = 0.95;
    std::size_t band_grid = 200;
    std::size_t se_batches = 20;

    // Checkpointing: JSON-lines log at checkpoint_path, draws in checkpoint_path + ".draws".
    std::string checkpoint_path;
    std::size_t snapshot_every = 0;
    bool resume = false;
    /// Stop (as if killed) after this many iterations; 0 disables.
    std::size_t stop_after = 0;
    /// Where to dump chain state if the log-likelihood stops being finite.
    std::string dump_dir;

    /// Burn-in of 20% and thinning 1.
    static GibbsConfig with_defaults(std::size_t iters, std::uint64_t seed) {
        GibbsConfig c;
        c.iters = iters;
        c.burnin = iters / 5;
        c.seed = seed;
        return c;
    }
};

struct ChainState {
    std::vector<double> xi;
    /// F_p^{-1}(Phi(xi)): the lambda-free part of theta.
    std::vector<double> unit;
    std::vector<double> theta;
    Lambda lambda{};
    double cached_loglik = 0.0;
    StepSizes steps{};
    std::uint64_t iteration = 0;
    std::uint64_t xi_accepted = 0;
    std::uint64_t xi_proposed = 0;
    std::uint64_t lambda_accepted = 0;
    std::uint64_t lambda_proposed = 0;
};

/// Fixed quantities shared by the updates of one chain.
class ChainContext {
public:
    ChainContext(const Observation& obs, double p, HyperParamMode mode)
        : obs_(&obs), dist_(p), mode_(mode), L_(obs.trunc_level()), log_ell_(L_) {
        for (std::size_t i = 0; i < L_; ++i) log_ell_[i] = std::log(static_cast<double>(i + 1));
    }

    const Observation& obs() const { return *obs_; }
    const PExp& dist() const { return dist_; }
    const HyperParamMode& mode() const { return mode_; }
    std::size_t L() const { return L_; }

    /// theta_l = tau l^{-1/2-alpha} unit_l
    void assemble(const Lambda& l, std::span<const double> unit, std::vector<double>& theta) const {
        theta.resize(L_);
        const double e = -0.5 - l.alpha;
        for (std::size_t i = 0; i < L_; ++i) theta[i] = l.tau * std::exp(e * log_ell_[i]) * unit[i];
    }

private:
    const Observation* obs_;
    PExp dist_;
    HyperParamMode mode_;
    std::size_t L_;
    std::vector<double> log_ell_;
};

/// Hyper-prior stand-in for a frozen lambda.
struct FrozenHyper {
    double log_density(const Lambda&) const { return 0.0; }
};

inline ChainState init_chain(const ChainContext& ctx, Lambda lambda, const StepSizes& steps,
                             std::optional<std::vector<double>> xi = {}) {
    ChainState s;
    s.xi = xi ? std::move(*xi) : std::vector<double>(ctx.L(), 0.0);
    if (s.xi.size() != ctx.L()) throw DomainError("init_chain: xi has the wrong length");
    s.unit.resize(ctx.L());
    for (std::size_t i = 0; i < ctx.L(); ++i) s.unit[i] = whiten_unit(s.xi[i], ctx.dist());
    s.lambda = ctx.mode().pin(lambda);
    ctx.assemble(s.lambda, s.unit, s.theta);
    s.cached_loglik = log_likelihood(ctx.obs(), s.theta);
    s.steps = steps;
    return s;
}

/// pCN move on xi with lambda fixed: xi' = sqrt(1 - beta^2) xi + beta zeta.
inline bool pcn_update(ChainState& s, const ChainContext& ctx, Rng& rng) {
    const double beta = s.steps.pcn_beta;
    const double rho = std::sqrt(1.0 - beta * beta);
    const std::size_t L = ctx.L();
    std::vector<double> xi(L), unit(L), theta;
    for (std::size_t i = 0; i < L; ++i) {
        xi[i] = rho * s.xi[i] + beta * rng.normal();
        unit[i] = whiten_unit(xi[i], ctx.dist());
    }
    ctx.assemble(s.lambda, unit, theta);
    const double delta = log_likelihood_diff(ctx.obs(), theta, s.theta);
    const bool accept = std::log(rng.uniform()) < delta;
    ++s.xi_proposed;
    if (accept) {
        s.xi = std::move(xi);
        s.unit = std::move(unit);
        s.theta = std::move(theta);
        s.cached_loglik = log_likelihood(ctx.obs(), s.theta);
        ++s.xi_accepted;
    }
    return accept;
}

/// Random-walk move on the standardized coordinates (non-centred kernel).
inline bool noncentered_update(ChainState& s, const ChainContext& ctx, Rng& rng) {
    const double step = s.steps.pcn_beta;
    const std::size_t L = ctx.L();
    std::vector<double> unit(L), theta;
    double log_prior = 0.0;
    for (std::size_t i = 0; i < L; ++i) {
        unit[i] = s.unit[i] + step * rng.normal();
        log_prior += ctx.dist().log_density(unit[i]) - ctx.dist().log_density(s.unit[i]);
    }
    ctx.assemble(s.lambda, unit, theta);
    const double delta = log_likelihood_diff(ctx.obs(), theta, s.theta) + log_prior;
    const bool accept = std::log(rng.uniform()) < delta;
    ++s.xi_proposed;
    if (accept) {
        s.unit = std::move(unit);
        for (std::size_t i = 0; i < L; ++i) s.xi[i] = unwhiten_unit(s.unit[i], ctx.dist());
        s.theta = std::move(theta);
        s.cached_loglik = log_likelihood(ctx.obs(), s.theta);
        ++s.xi_accepted;
    }
    return accept;
}

/// Log Metropolis ratio for moving lambda -> proposal with xi fixed.
///
/// The walk is symmetric in (log tau, alpha), so no proposal density appears;
/// the log tau' - log tau term is the Jacobian that turns the hyper-prior
/// density in tau into one in log tau.
template <class Hyper>
double lambda_log_accept_ratio(const ChainState& s, const ChainContext& ctx, const Hyper& hyper,
                               const Lambda& proposal, std::vector<double>* theta_out = nullptr) {
    const double lp_new = hyper.log_density(proposal);
    if (!std::isfinite(lp_new)) return -std::numeric_limits<double>::infinity();
    std::vector<double> local;
    std::vector<double>& theta = theta_out ? *theta_out : local;
    ctx.assemble(proposal, s.unit, theta);
    double r = log_likelihood_diff(ctx.obs(), theta, s.theta) + lp_new - hyper.log_density(s.lambda);
    if (ctx.mode().tau_free()) r += std::log(proposal.tau) - std::log(s.lambda.tau);
    return r;
}

template <class Hyper>
bool lambda_update(ChainState& s, const ChainContext& ctx, const Hyper& hyper, Rng& rng) {
    Lambda prop = s.lambda;
    if (ctx.mode().tau_free()) prop.tau = s.lambda.tau * std::exp(s.steps.log_tau * rng.normal());
    if (ctx.mode().alpha_free()) prop.alpha = s.lambda.alpha + s.steps.alpha * rng.normal();
    std::vector<double> theta;
    const double r = lambda_log_accept_ratio(s, ctx, hyper, prop, &theta);
    const bool accept = std::log(rng.uniform()) < r;
    ++s.lambda_proposed;
    if (accept) {
        s.lambda = prop;
        s.theta = std::move(theta);
        s.cached_loglik = log_likelihood(ctx.obs(), s.theta);
        ++s.lambda_accepted;
    }
    return accept;
}

// ---------------------------------------------------------------------------
// Draw storage and summaries

/// Row-major retained draws. Stored in single precision: a 2000-coordinate
/// chain with 20000 kept draws fits in 160 MB, and summaries accumulate in double.
class DrawMatrix {
public:
    explicit DrawMatrix(std::size_t L = 0) : L_(L) {}

    std::size_t cols() const noexcept { return L_; }
    std::size_t rows() const noexcept { return L_ ? data_.size() / L_ : 0; }

    void push(std::span<const double> theta) {
        for (double v : theta) data_.push_back(static_cast<float>(v));
    }
    std::span<const float> row(std::size_t i) const { return {data_.data() + i * L_, L_}; }
    void truncate(std::size_t rows) { data_.resize(rows * L_); }
    const std::vector<float>& raw() const noexcept { return data_; }
    std::vector<float>& raw() noexcept { return data_; }

private:
    std::size_t L_;
    std::vector<float> data_;
};

struct PosteriorSummary {
    CoefficientVector mean = CoefficientVector::zeros(1);
    /// Monte-Carlo standard error of each coordinate of the mean (batch means).
    std::vector<double> mc_se;
    /// Indices of the retained draws that form the credible set.
    std::vector<std::size_t> band_members;
    std::vector<double> grid;
    std::vector<double> mean_curve;
    std::vector<double> band_lower;
    std::vector<double> band_upper;
    double accept_xi = 0.0;
    double accept_lambda = 0.0;
    double alpha_mean = 0.0;
    double alpha_sd = 0.0;
    double tau_mean = 0.0;
    double tau_sd = 0.0;
    std::size_t n_kept = 0;

    /// Average vertical width of the credible envelope.
    double band_width() const {
        if (band_lower.empty()) return 0.0;
        double s = 0.0;
        for (std::size_t i = 0; i < band_lower.size(); ++i) s += band_upper[i] - band_lower[i];
        return s / static_cast<double>(band_lower.size());
    }
};

namespace detail {

// Non-overlapping batch means with `batches` equal batches.
inline std::vector<double> batch_means_se(const DrawMatrix& d, std::span<const double> mean, std::size_t batches) {
    const std::size_t N = d.rows();
    const std::size_t L = d.cols();
    batches = std::clamp<std::size_t>(batches, 2, std::max<std::size_t>(2, N / 2));
    const std::size_t b = N / batches;
    std::vector<double> var(L, 0.0);
    std::vector<double> bm(L);
    for (std::size_t k = 0; k < batches; ++k) {
        std::fill(bm.begin(), bm.end(), 0.0);
        for (std::size_t r = k * b; r < (k + 1) * b; ++r) {
            const auto row = d.row(r);
            for (std::size_t j = 0; j < L; ++j) bm[j] += row[j];
        }
        for (std::size_t j = 0; j < L; ++j) {
            const double dev = bm[j] / static_cast<double>(b) - mean[j];
            var[j] += dev * dev;
        }
    }
    std::vector<double> se(L);
    for (std::size_t j = 0; j < L; ++j) {
        se[j] = std::sqrt(var[j] / static_cast<double>(batches - 1) / static_cast<double>(batches));
    }
    return se;
}

// rows x cols matrix of basis functions e_l(t_i).
inline std::vector<double> basis_matrix(Basis basis, std::span<const double> grid, std::size_t L) {
    std::vector<double> B(grid.size() * L);
    const bool sine = basis == Basis::Sine;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        for (std::size_t l = 0; l < L; ++l) {
            const double ell = static_cast<double>(l + 1);
            const double arg = sine ? std::numbers::pi * ell * grid[i] : std::numbers::pi * (ell - 0.5) * grid[i];
            B[i * L + l] = std::numbers::sqrt2 * (sine ? std::sin(arg) : std::cos(arg));
        }
    }
    return B;
}

} // namespace detail

/// Posterior mean and the L2-nearest credible set: the ceil(level N) draws
/// closest to the mean (ties broken by draw index), reported as a pointwise
/// envelope on `grid_points` equispaced points of (0, 1], or coordinatewise
/// for abstract sequences.
inline PosteriorSummary summarize(const DrawMatrix& draws, double level, Basis basis, std::size_t grid_points = 200,
                                  std::size_t se_batches = 20) {
    const std::size_t N = draws.rows();
    const std::size_t L = draws.cols();
    if (N < 100) throw DomainError("summarize: at least 100 retained draws are required");
    if (!(level > 0.0 && level <= 1.0)) throw DomainError("summarize: level must lie in (0, 1]");

    PosteriorSummary out;
    out.n_kept = N;
    std::vector<double> mean(L, 0.0);
    for (std::size_t r = 0; r < N; ++r) {
        const auto row = draws.row(r);
        for (std::size_t j = 0; j < L; ++j) mean[j] += row[j];
    }
    for (double& m : mean) m /= static_cast<double>(N);
    out.mc_se = detail::batch_means_se(draws, mean, se_batches);

    std::vector<std::pair<double, std::size_t>> dist(N);
    for (std::size_t r = 0; r < N; ++r) {
        const auto row = draws.row(r);
        double s = 0.0;
        for (std::size_t j = 0; j < L; ++j) {
            const double d = row[j] - mean[j];
            s += d * d;
        }
        dist[r] = {s, r};
    }
    const auto keep = static_cast<std::size_t>(std::ceil(level * static_cast<double>(N) - 1e-9));
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(keep), dist.end());
    out.band_members.reserve(keep);
    for (std::size_t k = 0; k < keep; ++k) out.band_members.push_back(dist[k].second);
    std::sort(out.band_members.begin(), out.band_members.end());

    if (basis == Basis::AbstractSequence) {
        out.grid.resize(L);
        std::iota(out.grid.begin(), out.grid.end(), 1.0);
        out.mean_curve = mean;
        out.band_lower.assign(L, std::numeric_limits<double>::infinity());
        out.band_upper.assign(L, -std::numeric_limits<double>::infinity());
        for (std::size_t r : out.band_members) {
            const auto row = draws.row(r);
            for (std::size_t j = 0; j < L; ++j) {
                out.band_lower[j] = std::min(out.band_lower[j], static_cast<double>(row[j]));
                out.band_upper[j] = std::max(out.band_upper[j], static_cast<double>(row[j]));
            }
        }
    } else {
        out.grid = unit_grid(grid_points);
        const auto B = detail::basis_matrix(basis, out.grid, L);
        const std::size_t G = out.grid.size();
        out.mean_curve.assign(G, 0.0);
        for (std::size_t i = 0; i < G; ++i)
            for (std::size_t j = 0; j < L; ++j) out.mean_curve[i] += B[i * L + j] * mean[j];
        out.band_lower.assign(G, std::numeric_limits<double>::infinity());
        out.band_upper.assign(G, -std::numeric_limits<double>::infinity());
        for (std::size_t r : out.band_members) {
            const auto row = draws.row(r);
            for (std::size_t i = 0; i < G; ++i) {
                const double* b = &B[i * L];
                double f = 0.0;
                for (std::size_t j = 0; j < L; ++j) f += b[j] * row[j];
                out.band_lower[i] = std::min(out.band_lower[i], f);
                out.band_upper[i] = std::max(out.band_upper[i], f);
            }
        }
    }
    out.mean = CoefficientVector(std::move(mean), basis);
    return out;
}

inline PosteriorSummary summarize(std::span<const CoefficientVector> draws, double level, std::size_t grid_points = 200) {
    if (draws.empty()) throw DomainError("summarize: no draws");
    DrawMatrix m(draws.front().trunc_level());
    for (const auto& d : draws) m.push(d.values());
    return summarize(m, level, draws.front().basis(), grid_points);
}

// ---------------------------------------------------------------------------
// Chain log

struct ChainRecord {
    std::uint64_t iter;
    double alpha;
    double tau;
    double loglik;

    friend bool operator==(const ChainRecord&, const ChainRecord&) = default;
};

struct ChainLog {
    std::vector<ChainRecord> records;
    DrawMatrix draws;

    friend bool operator==(const ChainLog& a, const ChainLog& b) {
        return a.records == b.records && a.draws.raw() == b.draws.raw();
    }
};

struct GibbsResult {
    PosteriorSummary summary;
    ChainLog log;
    ChainState final_state;
    bool completed = true;
};

namespace detail {

inline nlohmann::json record_json(const ChainRecord& r) {
    return {{"type", "draw"}, {"iter", r.iter}, {"alpha", r.alpha}, {"tau", r.tau}, {"loglik", r.loglik}};
}

inline nlohmann::json snapshot_json(const ChainState& s, const Rng& rng, std::size_t n_kept) {
    return {{"type", "snapshot"},
            {"iter", s.iteration},
            {"xi", s.xi},
            {"alpha", s.lambda.alpha},
            {"tau", s.lambda.tau},
            {"loglik", s.cached_loglik},
            {"pcn_beta", s.steps.pcn_beta},
            {"step_log_tau", s.steps.log_tau},
            {"step_alpha", s.steps.alpha},
            {"xi_accepted", s.xi_accepted},
            {"xi_proposed", s.xi_proposed},
            {"lambda_accepted", s.lambda_accepted},
            {"lambda_proposed", s.lambda_proposed},
            {"n_kept", n_kept},
            {"rng", rng.state()}};
}

inline std::string dump_state(const std::string& dir, const ChainState& s, const Rng& rng) {
    namespace fs = std::filesystem;
    const fs::path base = dir.empty() ? fs::temp_directory_path() : fs::path(dir);
    fs::create_directories(base);
    const fs::path path = base / ("chain_dump_iter" + std::to_string(s.iteration) + ".json");
    std::ofstream f(path);
    auto j = snapshot_json(s, rng, 0);
    j["theta"] = s.theta;
    f << j.dump() << '\n';
    return path.string();
}

} // namespace detail

/// Alternates pCN (xi | lambda) and random-walk (lambda | xi) updates.
///
/// During burn-in the pCN beta and the lambda walk scales adapt by
/// Robbins-Monro on their logs toward the target acceptance rates; after
/// burn-in the kernel is fixed. Every `thin`-th post-burn-in state is kept.
template <class Hyper>
GibbsResult run_gibbs(const Observation& obs, double p, HyperParamMode mode, const Hyper& hyper, Lambda start,
                      const GibbsConfig& cfg) {
    if (!(cfg.iters > cfg.burnin)) throw DomainError("run_gibbs: iters must exceed burnin");
    if (cfg.thin < 1) throw DomainError("run_gibbs: thin must be >= 1");
    if (cfg.kernel == Kernel::NonCentered && mode.free != FreeParams::Tau && cfg.update_lambda) {
        throw DomainError("run_gibbs: the non-centred kernel supports the TauOnly mode only");
    }
    mode.validate();
    const ChainContext ctx(obs, p, mode);
    Rng rng(cfg.seed);
    ChainState s = init_chain(ctx, cfg.init_lambda.value_or(start), cfg.steps, cfg.init_xi);
    GibbsResult res;
    res.log.draws = DrawMatrix(ctx.L());

    const bool checkpointing = !cfg.checkpoint_path.empty();
    const std::string draws_path = cfg.checkpoint_path + ".draws";
    std::ofstream log_out;
    std::ofstream draws_out;
    if (checkpointing && cfg.resume && std::filesystem::exists(cfg.checkpoint_path)) {
        std::ifstream in(cfg.checkpoint_path);
        std::vector<std::string> lines;
        std::string line;
        std::size_t last_snapshot = std::string::npos;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            lines.push_back(line);
            if (nlohmann::json::parse(line).value("type", "") == "snapshot") last_snapshot = lines.size() - 1;
        }
        if (last_snapshot != std::string::npos) {
            const auto j = nlohmann::json::parse(lines[last_snapshot]);
            s.iteration = j["iter"].get<std::uint64_t>();
            s.xi = j["xi"].get<std::vector<double>>();
            for (std::size_t i = 0; i < ctx.L(); ++i) s.unit[i] = whiten_unit(s.xi[i], ctx.dist());
            s.lambda = {j["alpha"].get<double>(), j["tau"].get<double>()};
            ctx.assemble(s.lambda, s.unit, s.theta);
            s.cached_loglik = log_likelihood(obs, s.theta);
            s.steps = {j["pcn_beta"].get<double>(), j["step_log_tau"].get<double>(), j["step_alpha"].get<double>()};
            s.xi_accepted = j["xi_accepted"];
            s.xi_proposed = j["xi_proposed"];
            s.lambda_accepted = j["lambda_accepted"];
            s.lambda_proposed = j["lambda_proposed"];
            rng.set_state(j["rng"].get<std::string>());
            const std::size_t kept = j["n_kept"];
            for (std::size_t k = 0; k <= last_snapshot; ++k) {
                const auto r = nlohmann::json::parse(lines[k]);
                if (r.value("type", "") == "draw") {
                    res.log.records.push_back({r["iter"], r["alpha"], r["tau"], r["loglik"]});
                }
            }
            std::ifstream din(draws_path, std::ios::binary);
            auto& raw = res.log.draws.raw();
            raw.resize(kept * ctx.L());
            din.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(float)));
            if (!din || res.log.records.size() != kept) {
                throw ConfigError("checkpoint", "draws sidecar or records do not match the snapshot");
            }
            lines.resize(last_snapshot + 1);
            std::ofstream rewrite(cfg.checkpoint_path, std::ios::trunc);
            for (const auto& l : lines) rewrite << l << '\n';
            std::filesystem::resize_file(draws_path, raw.size() * sizeof(float));
        }
    }
    if (checkpointing) {
        log_out.open(cfg.checkpoint_path, std::ios::app);
        draws_out.open(draws_path, std::ios::binary | std::ios::app);
    }

    const double lambda_target = cfg.target_accept_lambda;
    while (s.iteration < cfg.iters) {
        if (cfg.stop_after && s.iteration >= cfg.stop_after) {
            res.completed = false;
            break;
        }
        const bool xi_acc = cfg.kernel == Kernel::Whitened ? pcn_update(s, ctx, rng) : noncentered_update(s, ctx, rng);
        bool lam_acc = false;
        if (cfg.update_lambda) lam_acc = lambda_update(s, ctx, hyper, rng);
        if (!std::isfinite(s.cached_loglik)) {
            const std::string path = detail::dump_state(cfg.dump_dir, s, rng);
            throw NumericError("run_gibbs: non-finite log-likelihood at iteration " + std::to_string(s.iteration) +
                               "; state dumped to " + path);
        }
        if (cfg.adapt && s.iteration < cfg.burnin) {
            const double eta = std::min(0.5, std::pow(static_cast<double>(s.iteration) + 1.0, -0.6));
            s.steps.pcn_beta = std::clamp(
                s.steps.pcn_beta * std::exp(eta * ((xi_acc ? 1.0 : 0.0) - cfg.target_accept_xi)), 1e-8, 1.0);
            if (cfg.update_lambda) {
                const double f = std::exp(eta * ((lam_acc ? 1.0 : 0.0) - lambda_target));
                s.steps.log_tau = std::clamp(s.steps.log_tau * f, 1e-8, 10.0);
                s.steps.alpha = std::clamp(s.steps.alpha * f, 1e-8, 10.0);
            }
        }
        ++s.iteration;
        if (s.iteration > cfg.burnin && (s.iteration - cfg.burnin) % cfg.thin == 0) {
            const ChainRecord rec{s.iteration, s.lambda.alpha, s.lambda.tau, s.cached_loglik};
            res.log.records.push_back(rec);
            res.log.draws.push(s.theta);
            if (checkpointing) {
                log_out << detail::record_json(rec).dump() << '\n';
                const auto row = res.log.draws.row(res.log.draws.rows() - 1);
                draws_out.write(reinterpret_cast<const char*>(row.data()),
                                static_cast<std::streamsize>(row.size() * sizeof(float)));
            }
        }
        if (checkpointing && cfg.snapshot_every && s.iteration % cfg.snapshot_every == 0) {
            draws_out.flush();
            log_out << detail::snapshot_json(s, rng, res.log.draws.rows()).dump() << '\n';
            log_out.flush();
        }
    }
    res.final_state = s;
    if (!res.completed) return res;

    res.summary = summarize(res.log.draws, cfg.band_level, obs.x.basis(), cfg.band_grid, cfg.se_batches);
    res.summary.accept_xi = s.xi_proposed ? static_cast<double>(s.xi_accepted) / s.xi_proposed : 0.0;
    res.summary.accept_lambda = s.lambda_proposed ? static_cast<double>(s.lambda_accepted) / s.lambda_proposed : 0.0;
    double sa = 0, saa = 0, st = 0, stt = 0;
    for (const auto& r : res.log.records) {
        sa += r.alpha;
        saa += r.alpha * r.alpha;
        st += r.tau;
        stt += r.tau * r.tau;
    }
    const double N = static_cast<double>(res.log.records.size());
    res.summary.alpha_mean = sa / N;
    res.summary.alpha_sd = std::sqrt(std::max(0.0, saa / N - res.summary.alpha_mean * res.summary.alpha_mean));
    res.summary.tau_mean = st / N;
    res.summary.tau_sd = std::sqrt(std::max(0.0, stt / N - res.summary.tau_mean * res.summary.tau_mean));
    return res;
}

/// Hierarchical run starting from the hyper-prior median.
inline GibbsResult run_gibbs(const Observation& obs, double p, const HyperPriorSpec& hyper, const GibbsConfig& cfg) {
    return run_gibbs(obs, p, hyper.mode(), hyper, hyper.median(), cfg);
}

/// Posterior under a fixed lambda: only the xi-block moves.
inline GibbsResult run_frozen(const Observation& obs, double p, const Lambda& lambda, GibbsConfig cfg) {
    cfg.update_lambda = false;
    return run_gibbs(obs, p, HyperParamMode::both(), FrozenHyper{}, lambda, cfg);
}

} // namespace pexp

#endif
