#ifndef PEXP_HARNESS_HPP
#define PEXP_HARNESS_HPP

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ebayes.hpp"
#include "error.hpp"
#include "hbayes.hpp"
#include "parallel.hpp"
#include "prior.hpp"
#include "rates.hpp"
#include "rng.hpp"
#include "seq_core.hpp"
#include "svg.hpp"
#include "wn_model.hpp"

namespace pexp {

enum class Method {
    EB,
    HB,
    Both,
    /// lambda held at ExperimentConfig::fixed_lambda (oracle runs).
    Fixed,
};

inline std::string_view to_string(Method m) {
    switch (m) {
    case Method::EB: return "eb";
    case Method::HB: return "hb";
    case Method::Both: return "both";
    case Method::Fixed: return "fixed";
    }
    return "eb";
}

inline Method method_from_string(const std::string& s) {
    if (s == "eb") return Method::EB;
    if (s == "hb") return Method::HB;
    if (s == "both") return Method::Both;
    if (s == "fixed") return Method::Fixed;
    throw ConfigError("method", "expected eb, hb, both or fixed, got '" + s + "'");
}

/// Replace n in n-dependent tau truncations (the hyper-prior support moves with n).
inline HyperPriorSpec rebind_n(const HyperPriorSpec& h, double n) {
    auto fix = [&](TauTruncation t) -> TauTruncation {
        if (auto* a = std::get_if<tau_trunc::Assumption>(&t)) a->n = n;
        if (auto* e = std::get_if<tau_trunc::Experiment>(&t)) e->n = n;
        return t;
    };
    return std::visit(
        [&](auto k) -> HyperPriorSpec {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, TruncInvGamma>) k.trunc = fix(k.trunc);
            else if constexpr (std::is_same_v<K, ProductHyper>) k.tau_part.trunc = fix(k.tau_part.trunc);
            return HyperPriorSpec(k, h.mode());
        },
        h.kind());
}

struct ExperimentConfig {
    std::string label = "study";
    TruthSpec truth{truth::PowerSine{1.5, 1.0}, 1};
    std::vector<double> n_list{200.0};
    TruncationRule L_rule = trunc_rule::Fixed{200};
    double p = 1.0;
    HyperParamMode mode = HyperParamMode::tau_only(1.0);
    std::optional<HyperPriorSpec> hyper;
    Method method = Method::HB;
    Lambda fixed_lambda{1.0, 1.0};
    GibbsConfig mcmc = GibbsConfig::with_defaults(10000, 1);
    GridResolution grid{};
    QuadratureSpec quad{};
    /// EB/Fixed at p = 2: use the conjugate posterior (exact mean, iid draws).
    bool exact_gaussian = true;
    /// Compute credible envelopes (skipped in rate sweeps where only the mean matters).
    bool compute_band = true;
    std::uint64_t seed = 1;
    std::size_t reps = 1;
    std::string out_dir;
    /// Smoothness of the truth, used for rate targets.
    double beta = 1.0;
    double q = 2.0;

    void validate() const {
        if (n_list.empty()) throw ConfigError("n", "at least one n is required");
        for (double n : n_list) {
            if (!(n >= 1.0)) throw ConfigError("n", "every n must be >= 1");
        }
        if (reps < 1) throw ConfigError("reps", "must be positive");
        if (!(p >= 1.0 && p <= 2.0)) throw ConfigError("p", "must lie in [1, 2]");
        const bool needs_hyper = method == Method::HB || method == Method::Both;
        if (needs_hyper && !hyper) throw ConfigError("hyper", "required for hierarchical runs");
        if (hyper && needs_hyper) {
            if (hyper->mode().free != mode.free) throw ConfigError("hyper.mode", "does not match mode");
        }
        try {
            mode.validate();
        } catch (const DomainError& e) {
            throw ConfigError("mode", e.what());
        }
    }
};

struct RunRecord {
    double n = 0;
    std::size_t rep = 0;
    Method method = Method::EB;
    FreeParams mode = FreeParams::Tau;
    std::string tag;
    std::size_t L = 0;
    /// lambda_hat for EB and Fixed; posterior mean of lambda for HB.
    Lambda lambda{};
    double l2_error = 0;
    double zero_error = 0;
    double band_width = 0;
    double seconds = 0;
    double alpha_sd = 0;
    double tau_sd = 0;
    double accept_xi = 0;
    double accept_lambda = 0;
};

struct RunCurves {
    std::string tag;
    std::vector<double> t, truth, mean, lower, upper;
};

struct StudyResult {
    std::vector<RunRecord> runs;
    std::vector<RunCurves> curves;
    /// (n, median l2 error) per distinct n, increasing n.
    std::vector<std::pair<double, double>> median_errors;
    std::optional<double> slope;
    std::optional<double> intercept;
    std::optional<double> slope_se;
    double target_exponent = 0;
};

namespace detail {

inline std::uint64_t n_key(double n) { return std::bit_cast<std::uint64_t>(n); }

struct RunOutput {
    RunRecord record;
    RunCurves curves;
};

inline PosteriorSummary gaussian_exact_summary(const Observation& obs, const Lambda& lambda, std::size_t draws,
                                               std::uint64_t seed, double level, std::size_t grid) {
    const auto mean = gaussian_posterior_mean(obs, lambda);
    const auto var = gaussian_posterior_variance(obs, lambda);
    Rng rng(seed);
    DrawMatrix m(obs.trunc_level());
    std::vector<double> row(obs.trunc_level());
    for (std::size_t r = 0; r < draws; ++r) {
        for (std::size_t i = 0; i < row.size(); ++i) row[i] = mean[i] + std::sqrt(var[i]) * rng.normal();
        m.push(row);
    }
    auto s = summarize(m, level, obs.x.basis(), grid);
    s.mean = mean;
    return s;
}

inline RunOutput run_single(const ExperimentConfig& cfg, double n, std::size_t rep, Method method,
                            const std::string& tag) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t run_seed = derive_seed(cfg.seed, {n_key(n), rep});
    const std::size_t L = truncation_level(n, cfg.L_rule);
    TruthSpec ts = cfg.truth;
    ts.L = L;
    const CoefficientVector theta0 = make_truth(ts);
    const Observation obs = simulate(theta0, n, derive_seed(run_seed, {0}));

    RunRecord rec;
    rec.n = n;
    rec.rep = rep;
    rec.method = method;
    rec.mode = cfg.mode.free;
    rec.tag = tag;
    rec.L = L;
    GibbsConfig mc = cfg.mcmc;
    mc.seed = derive_seed(run_seed, {1});
    const std::size_t kept = (mc.iters - mc.burnin) / mc.thin;

    std::optional<PosteriorSummary> summary;
    CoefficientVector mean = CoefficientVector::zeros(L, theta0.basis());
    if (method == Method::HB) {
        const HyperPriorSpec h = rebind_n(*cfg.hyper, n);
        auto res = run_gibbs(obs, cfg.p, h, mc);
        summary = std::move(res.summary);
        mean = summary->mean;
        rec.lambda = {summary->alpha_mean, summary->tau_mean};
        rec.alpha_sd = summary->alpha_sd;
        rec.tau_sd = summary->tau_sd;
    } else {
        Lambda lam = cfg.fixed_lambda;
        if (method == Method::EB) {
            lam = mmle(obs, build_grid(cfg.mode, n, cfg.p, cfg.grid), cfg.p, cfg.quad).lambda_hat;
        }
        rec.lambda = lam;
        if (cfg.p == 2.0 && cfg.exact_gaussian) {
            mean = gaussian_posterior_mean(obs, lam);
            if (cfg.compute_band) {
                summary = gaussian_exact_summary(obs, lam, kept, mc.seed, mc.band_level, mc.band_grid);
            }
        } else {
            summary = run_frozen(obs, cfg.p, lam, mc).summary;
            mean = summary->mean;
        }
    }
    if (summary) {
        rec.band_width = summary->band_width();
        rec.accept_xi = summary->accept_xi;
        rec.accept_lambda = summary->accept_lambda;
    }
    rec.l2_error = l2_distance(mean.values(), theta0.values());
    rec.zero_error = weighted_norm(theta0, norm::L2{});

    RunCurves curves;
    curves.tag = tag;
    if (summary && theta0.basis() != Basis::AbstractSequence) {
        curves.t = summary->grid;
        curves.truth = evaluate_on_grid(theta0, curves.t);
        curves.mean = summary->mean_curve;
        curves.lower = summary->band_lower;
        curves.upper = summary->band_upper;
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {rec, std::move(curves)};
}

// Least squares of y on x: (slope, intercept, slope standard error).
inline std::tuple<double, double, double> least_squares(const std::vector<double>& x, const std::vector<double>& y) {
    const double m = static_cast<double>(x.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / m, my = sy / m;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    const double b = sxy / sxx;
    const double a = my - b * mx;
    double rss = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - a - b * x[i];
        rss += r * r;
    }
    const double se = x.size() > 2 ? std::sqrt(rss / (m - 2.0) / sxx) : 0.0;
    return {b, a, se};
}

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t k = v.size() / 2;
    return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

} // namespace detail

/// Runs every (n, rep, method) combination of cfg; slope fields are filled
/// when at least three distinct n are present.
inline StudyResult run_study(const ExperimentConfig& cfg, const std::string& tag = "") {
    cfg.validate();
    std::vector<Method> methods;
    if (cfg.method == Method::Both) methods = {Method::EB, Method::HB};
    else methods = {cfg.method};
    struct Job {
        double n;
        std::size_t rep;
        Method m;
    };
    std::vector<Job> jobs;
    for (double n : cfg.n_list)
        for (std::size_t r = 0; r < cfg.reps; ++r)
            for (Method m : methods) jobs.push_back({n, r, m});
    // Curve tags must be unique per run; suffix only the dimensions that vary.
    const std::string base = tag.empty() ? cfg.label : tag;
    const bool many_n = std::set<double>(cfg.n_list.begin(), cfg.n_list.end()).size() > 1;
    auto job_tag = [&](const Job& j) {
        std::ostringstream os;
        os << base;
        if (methods.size() > 1) os << '_' << to_string(j.m);
        if (many_n) os << "_n=" << j.n;
        if (cfg.reps > 1) os << "_rep=" << j.rep;
        return os.str();
    };
    std::vector<std::optional<detail::RunOutput>> out(jobs.size());
    parallel_for(jobs.size(), [&](std::size_t i) {
        out[i] = detail::run_single(cfg, jobs[i].n, jobs[i].rep, jobs[i].m, job_tag(jobs[i]));
    });

    StudyResult res;
    for (auto& o : out) {
        res.runs.push_back(o->record);
        if (!o->curves.t.empty()) res.curves.push_back(std::move(o->curves));
    }
    std::set<double> ns(cfg.n_list.begin(), cfg.n_list.end());
    std::vector<double> lx, ly;
    for (double n : ns) {
        std::vector<double> errs;
        for (const auto& r : res.runs)
            if (r.n == n) errs.push_back(r.l2_error);
        const double med = detail::median(errs);
        res.median_errors.emplace_back(n, med);
        lx.push_back(std::log(n));
        ly.push_back(std::log(med));
    }
    if (ns.size() >= 3) {
        const auto [b, a, se] = detail::least_squares(lx, ly);
        res.slope = b;
        res.intercept = a;
        res.slope_se = se;
    }
    const double n0 = *ns.begin(), n1 = *ns.rbegin();
    res.target_exponent = -cfg.beta / (1.0 + 2.0 * cfg.beta);
    if (n1 > n0 && n0 >= 2.0) {
        try {
            double r0, r1;
            if (cfg.method == Method::Fixed) {
                // Non-adaptive: the bound at the fixed lambda.
                RateQuery q{n0, cfg.beta, cfg.q, cfg.p, cfg.fixed_lambda.alpha, cfg.fixed_lambda.tau, 1.0};
                r0 = eps_upper(q, TruthClass::Sobolev).value;
                q.n = n1;
                r1 = eps_upper(q, TruthClass::Sobolev).value;
            } else {
                const double lo = std::max(cfg.grid.alpha_low, 1e-12);
                r0 = adaptive_rate_target(cfg.mode, cfg.beta, cfg.q, cfg.p, n0, lo, cfg.grid.alpha_high);
                r1 = adaptive_rate_target(cfg.mode, cfg.beta, cfg.q, cfg.p, n1, lo, cfg.grid.alpha_high);
            }
            res.target_exponent = std::log(r1 / r0) / std::log(n1 / n0);
        } catch (const DomainError&) {
        }
    }
    return res;
}

/// Empirical contraction-rate sweep: slope of log median error against log n.
inline StudyResult contraction_study(ExperimentConfig cfg) {
    std::set<double> ns(cfg.n_list.begin(), cfg.n_list.end());
    if (ns.size() < 3) throw ConfigError("n", "a contraction study needs at least 3 distinct n values");
    if (cfg.reps < 3) throw ConfigError("reps", "a contraction study needs at least 3 replications");
    return run_study(cfg);
}

// ---------------------------------------------------------------------------
// Persistence

inline std::string lambda_field(const RunRecord& r) {
    std::ostringstream os;
    os.precision(10);
    switch (r.mode) {
    case FreeParams::Tau: os << r.lambda.tau; break;
    case FreeParams::Alpha: os << r.lambda.alpha; break;
    case FreeParams::Both: os << r.lambda.alpha << ':' << r.lambda.tau; break;
    }
    return os.str();
}

inline void write_results_csv(const std::string& path, const std::vector<RunRecord>& runs) {
    std::ofstream f(path);
    if (!f) throw ConfigError("out_dir", "cannot write " + path);
    f.precision(12);
    f << "n,rep,method,mode,lambda_hat_or_mean,l2_error,band_width,seconds\n";
    for (const auto& r : runs) {
        f << r.n << ',' << r.rep << ',' << to_string(r.method) << ',' << to_string(r.mode) << ',' << lambda_field(r)
          << ',' << r.l2_error << ',' << r.band_width << ',' << r.seconds << '\n';
    }
}

/// Long format: tag,t,truth,mean,lower,upper. Figures are rendered from this file alone.
inline void write_curves_csv(const std::string& path, const std::vector<RunCurves>& curves) {
    std::ofstream f(path);
    if (!f) throw ConfigError("out_dir", "cannot write " + path);
    f.precision(12);
    f << "tag,t,truth,mean,lower,upper\n";
    for (const auto& c : curves)
        for (std::size_t i = 0; i < c.t.size(); ++i)
            f << c.tag << ',' << c.t[i] << ',' << c.truth[i] << ',' << c.mean[i] << ',' << c.lower[i] << ','
              << c.upper[i] << '\n';
}

inline std::vector<RunCurves> read_curves_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("curves", "cannot read " + path);
    std::string line;
    std::getline(f, line);
    if (line != "tag,t,truth,mean,lower,upper") throw ConfigError("curves", "unexpected header in " + path);
    std::vector<RunCurves> out;
    std::map<std::string, std::size_t> index;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tag, cell;
        std::getline(ss, tag, ',');
        double v[5];
        for (double& x : v) {
            if (!std::getline(ss, cell, ',')) throw ConfigError("curves", "short row in " + path);
            x = std::stod(cell);
        }
        auto [it, fresh] = index.emplace(tag, out.size());
        if (fresh) out.push_back(RunCurves{tag, {}, {}, {}, {}, {}});
        auto& c = out[it->second];
        c.t.push_back(v[0]);
        c.truth.push_back(v[1]);
        c.mean.push_back(v[2]);
        c.lower.push_back(v[3]);
        c.upper.push_back(v[4]);
    }
    return out;
}

inline std::string file_safe(std::string s) {
    for (char& c : s)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_')) c = '_';
    return s;
}

/// One SVG per curve set: truth (black), posterior mean (red), envelope (shaded).
inline std::vector<std::string> render_figures(const std::vector<RunCurves>& curves, const std::string& dir,
                                               const std::string& prefix) {
    std::vector<std::string> paths;
    for (const auto& c : curves) {
        svg::Plot plot(prefix + " " + c.tag);
        plot.add(svg::Band{c.t, c.lower, c.upper, "#9ecae1", 0.7, "95% band"});
        plot.add(svg::Series{c.t, c.truth, "black", 1.5, false, "truth"});
        plot.add(svg::Series{c.t, c.mean, "#d62728", 1.5, true, "posterior mean"});
        const std::string path = (std::filesystem::path(dir) / (prefix + "_" + file_safe(c.tag) + ".svg")).string();
        plot.write(path);
        paths.push_back(path);
    }
    return paths;
}

inline void write_study_json(const std::string& path, const StudyResult& r) {
    nlohmann::json j;
    j["target_exponent"] = r.target_exponent;
    if (r.slope) {
        j["slope"] = *r.slope;
        j["intercept"] = *r.intercept;
        j["slope_se"] = *r.slope_se;
    }
    for (const auto& [n, e] : r.median_errors) j["median_errors"].push_back({{"n", n}, {"l2_error", e}});
    for (const auto& x : r.runs) {
        j["runs"].push_back({{"n", x.n}, {"rep", x.rep}, {"tag", x.tag}, {"L", x.L}, {"alpha", x.lambda.alpha},
                             {"tau", x.lambda.tau}, {"alpha_sd", x.alpha_sd}, {"tau_sd", x.tau_sd},
                             {"l2_error", x.l2_error}, {"zero_error", x.zero_error}, {"band_width", x.band_width},
                             {"accept_xi", x.accept_xi}, {"accept_lambda", x.accept_lambda}});
    }
    std::ofstream f(path);
    if (!f) throw ConfigError("out_dir", "cannot write " + path);
    f << j.dump(2) << '\n';
}

inline void write_study(const StudyResult& r, const std::string& dir, const std::string& prefix) {
    std::filesystem::create_directories(dir);
    const std::filesystem::path d(dir);
    write_results_csv((d / "results.csv").string(), r.runs);
    write_study_json((d / "summary.json").string(), r);
    if (!r.curves.empty()) {
        const std::string curves = (d / "curves.csv").string();
        write_curves_csv(curves, r.curves);
        render_figures(read_curves_csv(curves), dir, prefix);
    }
}

// ---------------------------------------------------------------------------
// The two simulation studies

struct Experiment1Options {
    double n = 200;
    std::size_t L = 200;
    /// Defaults to beta - 1, beta - 1/2, beta, beta + 1/2, beta + 1 with beta = 1.75.
    std::vector<double> alphas{0.75, 1.25, 1.75, 2.25, 2.75};
    std::size_t iters = 50000;
    std::size_t retained = 20000;
    std::uint64_t seed = 1;
    std::string out_dir;
};

/// Laplace priors with a hyper-prior on tau, sine basis, truth l^{-2.25} sin(10 l).
inline StudyResult run_experiment_1(const Experiment1Options& o = {}) {
    StudyResult all;
    for (double alpha : o.alphas) {
        ExperimentConfig c;
        c.label = "experiment1";
        c.truth = {truth::PowerSine{2.25, 10.0}, o.L};
        c.n_list = {o.n};
        c.L_rule = trunc_rule::Fixed{o.L};
        c.p = 1.0;
        c.mode = HyperParamMode::tau_only(alpha);
        c.hyper = HyperPriorSpec(TruncInvGamma{1.0, 1.0, tau_trunc::Experiment{o.n}}, c.mode);
        c.method = Method::HB;
        c.mcmc = GibbsConfig::with_defaults(o.iters, 0);
        c.mcmc.burnin = o.iters - o.retained;
        c.seed = derive_seed(o.seed, {detail::n_key(alpha)});
        c.beta = 1.75;
        std::ostringstream tag;
        tag << "alpha=" << alpha;
        auto r = run_study(c, tag.str());
        all.runs.insert(all.runs.end(), r.runs.begin(), r.runs.end());
        all.curves.insert(all.curves.end(), r.curves.begin(), r.curves.end());
    }
    all.target_exponent = -1.75 / 4.5;
    if (!o.out_dir.empty()) write_study(all, o.out_dir, "experiment1");
    return all;
}

struct Experiment2Options {
    std::vector<double> ns{1e3, 1e5};
    std::vector<double> ps{2.0, 1.0};
    std::size_t iters = 60000;
    std::size_t retained = 20000;
    std::uint64_t seed = 1;
    std::string out_dir;
};

/// tau = 1 fixed, alpha ~ Exp(1) on [0.5, 100], cosine basis, truth l^{-3/2} sin(l), L = n^{2/3}.
inline StudyResult run_experiment_2(const Experiment2Options& o = {}) {
    StudyResult all;
    for (double p : o.ps) {
        ExperimentConfig c;
        c.label = "experiment2";
        c.truth = {truth::PowerSineCos{1.5, 1.0}, 1};
        c.n_list = o.ns;
        c.L_rule = trunc_rule::PowerRule{1.0 / 1.5};
        c.p = p;
        c.mode = HyperParamMode::alpha_only(1.0);
        c.hyper = HyperPriorSpec(TruncExp{1.0, 0.5, 100.0}, c.mode);
        c.method = Method::HB;
        c.mcmc = GibbsConfig::with_defaults(o.iters, 0);
        c.mcmc.burnin = o.iters - o.retained;
        c.seed = derive_seed(o.seed, {detail::n_key(p)});
        c.beta = 1.0;
        const std::string prior = p == 2.0 ? "gaussian" : p == 1.0 ? "laplace" : "p=" + std::to_string(p);
        auto r = run_study(c, prior);
        for (auto& run : r.runs) {
            std::ostringstream tag;
            tag << prior << "_n=" << run.n;
            run.tag = tag.str();
        }
        // run_study keeps curves in job order, which is n order here.
        for (std::size_t i = 0; i < r.curves.size(); ++i) r.curves[i].tag = r.runs[i].tag;
        all.runs.insert(all.runs.end(), r.runs.begin(), r.runs.end());
        all.curves.insert(all.curves.end(), r.curves.begin(), r.curves.end());
    }
    all.target_exponent = -1.0 / 3.0;
    if (!o.out_dir.empty()) {
        write_study(all, o.out_dir, "experiment2");
        std::ofstream f((std::filesystem::path(o.out_dir) / "band_widths.csv").string());
        f.precision(10);
        f << "prior,n,band_width,l2_error\n";
        for (const auto& r : all.runs) f << r.tag.substr(0, r.tag.find('_')) << ',' << r.n << ',' << r.band_width << ',' << r.l2_error << '\n';
    }
    return all;
}

// ---------------------------------------------------------------------------
// JSON configuration

namespace detail {

inline double cfg_num(const nlohmann::json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError(where + key, "missing");
    if (!j[key].is_number()) throw ConfigError(where + key, "must be a number");
    return j[key].get<double>();
}

} // namespace detail

inline TruthSpec truth_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("truth", "must be an object");
    const std::string kind = j.value("kind", std::string());
    if (kind == "power_sine")
        return {truth::PowerSine{detail::cfg_num(j, "decay", "truth."), j.value("frequency", 1.0)}, 1};
    if (kind == "power_sine_cos")
        return {truth::PowerSineCos{detail::cfg_num(j, "decay", "truth."), j.value("frequency", 1.0)}, 1};
    if (kind == "sparse_dyadic")
        return {truth::SparseDyadic{detail::cfg_num(j, "beta", "truth."), detail::cfg_num(j, "q", "truth."),
                                    j.value("delta", 0.5)},
                1};
    throw ConfigError("truth.kind", "expected power_sine, power_sine_cos or sparse_dyadic");
}

inline HyperParamMode mode_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("mode", "must be an object");
    const std::string free = j.value("free", std::string());
    if (free == "tau") return HyperParamMode::tau_only(detail::cfg_num(j, "alpha", "mode."));
    if (free == "alpha") return HyperParamMode::alpha_only(detail::cfg_num(j, "tau", "mode."));
    if (free == "both") return HyperParamMode::both();
    throw ConfigError("mode.free", "expected tau, alpha or both");
}

/// Config document; see docs/config.schema.json.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("<root>", "config must be a JSON object");
    ExperimentConfig c;
    c.label = j.value("label", c.label);
    if (j.contains("truth")) c.truth = truth_from_json(j["truth"]);
    if (j.contains("n")) {
        const auto& n = j["n"];
        if (n.is_number()) c.n_list = {n.get<double>()};
        else if (n.is_array()) {
            c.n_list.clear();
            for (const auto& v : n) {
                if (!v.is_number()) throw ConfigError("n", "entries must be numbers");
                c.n_list.push_back(v.get<double>());
            }
        } else throw ConfigError("n", "must be a number or an array");
    }
    if (j.contains("L")) {
        const auto& L = j["L"];
        if (L.is_number_unsigned() || L.is_number_integer()) {
            if (L.get<long long>() < 1) throw ConfigError("L", "must be >= 1");
            c.L_rule = trunc_rule::Fixed{L.get<std::size_t>()};
        } else if (L.is_object()) {
            c.L_rule = trunc_rule::PowerRule{detail::cfg_num(L, "power", "L.")};
        } else throw ConfigError("L", "must be an integer or {\"power\": e}");
    }
    if (j.contains("p")) c.p = detail::cfg_num(j, "p", "");
    if (j.contains("mode")) c.mode = mode_from_json(j["mode"]);
    if (j.contains("hyper")) {
        nlohmann::json h = j["hyper"];
        if (h.is_object() && !h.contains("fixed") && c.mode.free != FreeParams::Both) h["fixed"] = c.mode.fixed;
        c.hyper = hyper_from_json(h);
    }
    if (j.contains("method")) {
        if (!j["method"].is_string()) throw ConfigError("method", "must be a string");
        c.method = method_from_string(j["method"].get<std::string>());
    }
    if (j.contains("lambda")) {
        c.fixed_lambda = {detail::cfg_num(j["lambda"], "alpha", "lambda."), detail::cfg_num(j["lambda"], "tau", "lambda.")};
    }
    if (j.contains("mcmc")) {
        const auto& m = j["mcmc"];
        if (!m.is_object()) throw ConfigError("mcmc", "must be an object");
        const auto iters = static_cast<std::size_t>(detail::cfg_num(m, "iters", "mcmc."));
        c.mcmc = GibbsConfig::with_defaults(iters, 0);
        if (m.contains("burnin")) c.mcmc.burnin = static_cast<std::size_t>(detail::cfg_num(m, "burnin", "mcmc."));
        if (m.contains("thin")) c.mcmc.thin = static_cast<std::size_t>(detail::cfg_num(m, "thin", "mcmc."));
        if (m.contains("adapt")) c.mcmc.adapt = m["adapt"].get<bool>();
        if (m.contains("pcn_beta")) c.mcmc.steps.pcn_beta = detail::cfg_num(m, "pcn_beta", "mcmc.");
        if (m.contains("kernel")) {
            const auto k = m["kernel"].get<std::string>();
            if (k == "whitened") c.mcmc.kernel = Kernel::Whitened;
            else if (k == "noncentered") c.mcmc.kernel = Kernel::NonCentered;
            else throw ConfigError("mcmc.kernel", "expected whitened or noncentered");
        }
        if (!(c.mcmc.iters > c.mcmc.burnin)) throw ConfigError("mcmc.burnin", "must be smaller than mcmc.iters");
        if (c.mcmc.iters - c.mcmc.burnin < 100) throw ConfigError("mcmc.iters", "fewer than 100 retained draws");
    }
    if (j.contains("grid")) {
        const auto& g = j["grid"];
        c.grid.tau_per_decade = g.value("tau_per_decade", c.grid.tau_per_decade);
        c.grid.alpha_step = g.value("alpha_step", c.grid.alpha_step);
        c.grid.alpha_low = g.value("alpha_low", c.grid.alpha_low);
        c.grid.alpha_high = g.value("alpha_high", c.grid.alpha_high);
    }
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("reps")) {
        if (!j["reps"].is_number_integer() || j["reps"].get<long long>() < 1) throw ConfigError("reps", "must be a positive integer");
        c.reps = j["reps"].get<std::size_t>();
    }
    c.out_dir = j.value("out_dir", c.out_dir);
    if (j.contains("beta")) c.beta = detail::cfg_num(j, "beta", "");
    if (j.contains("q")) c.q = detail::cfg_num(j, "q", "");
    c.exact_gaussian = j.value("exact_gaussian", c.exact_gaussian);
    c.compute_band = j.value("compute_band", c.compute_band);
    c.validate();
    return c;
}

} // namespace pexp

#endif
