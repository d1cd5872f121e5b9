// pexp: command-line front end for simulation, MMLE, Gibbs sampling, rate
// tables and the two simulation studies.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pexp/pexp.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

json read_json_file(const std::string& path, const std::string& field) {
    std::ifstream f(path);
    if (!f) throw pexp::ConfigError(field, "cannot open " + path);
    try {
        return json::parse(f);
    } catch (const json::parse_error& e) {
        throw pexp::ConfigError(field, std::string("invalid JSON: ") + e.what());
    }
}

pexp::Observation load_observation(const std::string& prefix) {
    const json header = read_json_file(prefix + ".json", "obs");
    std::ifstream csv(prefix + ".csv");
    if (!csv) throw pexp::ConfigError("obs", "cannot open " + prefix + ".csv");
    return pexp::read_observation(header, csv);
}

pexp::HyperParamMode parse_mode(const std::string& mode, double alpha, double tau) {
    if (mode == "tau") return pexp::HyperParamMode::tau_only(alpha);
    if (mode == "alpha") return pexp::HyperParamMode::alpha_only(tau);
    if (mode == "both") return pexp::HyperParamMode::both();
    throw pexp::ConfigError("mode", "expected tau, alpha or both");
}

// Default hyper-priors: InvGamma(1,1) on tau truncated at the assumption
// rule, Exp(1) on alpha over [alpha_low, alpha_high].
pexp::HyperPriorSpec default_hyper(const pexp::HyperParamMode& mode, double n, double p, double alpha_low,
                                   double alpha_high) {
    const pexp::TruncInvGamma tau_part{1.0, 1.0, pexp::tau_trunc::Assumption{n, p}};
    const pexp::TruncExp alpha_part{1.0, alpha_low, alpha_high};
    switch (mode.free) {
    case pexp::FreeParams::Tau: return pexp::HyperPriorSpec(tau_part, mode);
    case pexp::FreeParams::Alpha: return pexp::HyperPriorSpec(alpha_part, mode);
    case pexp::FreeParams::Both: return pexp::HyperPriorSpec(pexp::ProductHyper{alpha_part, tau_part}, mode);
    }
    return pexp::HyperPriorSpec(tau_part, mode);
}

void write_vector_csv(const fs::path& path, const pexp::CoefficientVector& v) {
    std::ofstream f(path);
    if (!f) throw pexp::ConfigError("out", "cannot write " + path.string());
    pexp::write_csv(f, v);
}

std::string dump_failure(const std::string& out_dir, const std::string& what, const std::vector<std::string>& argv) {
    const fs::path dir = out_dir.empty() ? fs::temp_directory_path() : fs::path(out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    const fs::path path = dir / "pexp_failure.json";
    std::ofstream f(path);
    f << json{{"error", what}, {"argv", argv}}.dump(2) << '\n';
    return path.string();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive p-exponential priors in the white noise model"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string out_dir = ".";
    app.add_option("--out", out_dir, "Output directory")->capture_default_str();

    // simulate
    auto* sim = app.add_subcommand("simulate", "Simulate sequence-space data from a truth");
    std::string truth_kind = "power_sine";
    double decay = 1.5, freq = 1.0, sim_n = 1000;
    std::size_t sim_L = 100;
    std::uint64_t seed = 1;
    std::string obs_name = "obs";
    sim->add_option("--truth", truth_kind, "power_sine | power_sine_cos")->capture_default_str();
    sim->add_option("--decay", decay)->capture_default_str();
    sim->add_option("--frequency", freq)->capture_default_str();
    sim->add_option("--n", sim_n)->capture_default_str();
    sim->add_option("--L", sim_L)->capture_default_str();
    sim->add_option("--seed", seed)->capture_default_str();
    sim->add_option("--name", obs_name, "Basename of the .json/.csv pair")->capture_default_str();

    // mmle
    auto* mm = app.add_subcommand("mmle", "Maximum marginal likelihood over a grid");
    std::string obs_prefix;
    std::string mode_name = "tau";
    double p = 1.0, fixed_alpha = 1.0, fixed_tau = 1.0;
    pexp::GridResolution res;
    mm->add_option("--obs", obs_prefix, "Observation basename (reads .json and .csv)")->required();
    mm->add_option("--p", p)->capture_default_str();
    mm->add_option("--mode", mode_name, "tau | alpha | both")->capture_default_str();
    mm->add_option("--alpha", fixed_alpha, "alpha when tau is free")->capture_default_str();
    mm->add_option("--tau", fixed_tau, "tau when alpha is free")->capture_default_str();
    mm->add_option("--per-decade", res.tau_per_decade)->capture_default_str();
    mm->add_option("--alpha-step", res.alpha_step)->capture_default_str();
    mm->add_option("--alpha-low", res.alpha_low)->capture_default_str();
    mm->add_option("--alpha-high", res.alpha_high)->capture_default_str();

    // gibbs
    auto* gb = app.add_subcommand("gibbs", "Hierarchical posterior by pCN-within-Gibbs");
    std::string hyper_file;
    std::size_t iters = 20000, burnin = 0, snapshot_every = 0, stop_after = 0;
    bool resume = false;
    std::string checkpoint;
    gb->add_option("--obs", obs_prefix, "Observation basename")->required();
    gb->add_option("--p", p)->capture_default_str();
    gb->add_option("--mode", mode_name)->capture_default_str();
    gb->add_option("--alpha", fixed_alpha)->capture_default_str();
    gb->add_option("--tau", fixed_tau)->capture_default_str();
    gb->add_option("--hyper", hyper_file, "Hyper-prior JSON (default: InvGamma(1,1) / Exp(1))");
    gb->add_option("--iters", iters)->capture_default_str();
    gb->add_option("--burnin", burnin, "Default: 20% of iters");
    gb->add_option("--seed", seed)->capture_default_str();
    gb->add_option("--checkpoint", checkpoint, "JSON-lines chain log");
    gb->add_option("--snapshot-every", snapshot_every)->capture_default_str();
    gb->add_flag("--resume", resume, "Continue from the last snapshot in --checkpoint");
    gb->add_option("--stop-after", stop_after, "Stop after this many iterations (testing)");

    // rates
    auto* rt = app.add_subcommand("rates", "Rate and bound table");
    double beta = 1.0, q = 2.0, rn = 1e4;
    std::optional<double> r_alpha, r_tau;
    rt->add_option("--beta", beta)->capture_default_str();
    rt->add_option("--q", q)->capture_default_str();
    rt->add_option("--p", p)->capture_default_str();
    rt->add_option("--n", rn)->capture_default_str();
    rt->add_option("--alpha", r_alpha, "Prior regularity (default: beta)");
    rt->add_option("--tau", r_tau, "Prior scale (default: balancing tau0)");

    // experiment
    auto* ex = app.add_subcommand("experiment", "Reproduce simulation study 1 or 2");
    int which = 1;
    std::vector<double> alphas;
    std::size_t ex_iters = 0;
    ex->add_option("which", which, "1 or 2")->required()->check(CLI::IsMember({1, 2}));
    ex->add_option("--alpha", alphas, "Study 1: prior regularities (repeatable)");
    ex->add_option("--seed", seed)->capture_default_str();
    ex->add_option("--iters", ex_iters, "Total iterations (final 20000 retained)");

    // contract
    auto* ct = app.add_subcommand("contract", "Empirical contraction-rate study from a JSON config");
    std::string config_file;
    ct->add_option("--config", config_file)->required();

    // report
    auto* rp = app.add_subcommand("report", "Render SVG figures from curves.csv");
    std::string report_dir;
    std::string prefix = "figure";
    rp->add_option("--dir", report_dir, "Directory holding curves.csv")->required();
    rp->add_option("--prefix", prefix)->capture_default_str();

    const std::vector<std::string> args(argv, argv + argc);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        const fs::path out(out_dir);
        if (*sim) {
            fs::create_directories(out);
            pexp::TruthSpec ts{pexp::truth::PowerSine{decay, freq}, sim_L};
            if (truth_kind == "power_sine_cos") ts.kind = pexp::truth::PowerSineCos{decay, freq};
            else if (truth_kind != "power_sine") throw pexp::ConfigError("truth", "expected power_sine or power_sine_cos");
            const auto theta0 = pexp::make_truth(ts);
            const auto obs = pexp::simulate(theta0, sim_n, seed);
            std::ofstream(out / (obs_name + ".json")) << pexp::observation_header(obs).dump(2) << '\n';
            std::ofstream csv(out / (obs_name + ".csv"));
            pexp::write_observation_csv(csv, obs);
            write_vector_csv(out / (obs_name + "_truth.csv"), theta0);
            std::cout << (out / obs_name).string() << '\n';
        } else if (*mm) {
            fs::create_directories(out);
            const auto obs = load_observation(obs_prefix);
            const auto mode = parse_mode(mode_name, fixed_alpha, fixed_tau);
            const auto grid = pexp::build_grid(mode, obs.n, p, res);
            const auto r = pexp::mmle(obs, grid, p);
            std::ofstream f(out / "mmle_table.csv");
            f.precision(15);
            f << "alpha,tau,log_marginal\n";
            for (const auto& row : r.table) f << row.lambda.alpha << ',' << row.lambda.tau << ',' << row.log_marginal << '\n';
            const json j{{"alpha_hat", r.lambda_hat.alpha}, {"tau_hat", r.lambda_hat.tau},
                         {"log_marginal", r.table[r.argmax].log_marginal}, {"grid_points", r.table.size()}};
            std::ofstream(out / "mmle.json") << j.dump(2) << '\n';
            std::cout << j.dump() << '\n';
        } else if (*gb) {
            fs::create_directories(out);
            const auto obs = load_observation(obs_prefix);
            const auto mode = parse_mode(mode_name, fixed_alpha, fixed_tau);
            const pexp::HyperPriorSpec hyper =
                hyper_file.empty() ? default_hyper(mode, obs.n, p, 0.5, 100.0) : pexp::hyper_from_json(read_json_file(hyper_file, "hyper"));
            auto cfg = pexp::GibbsConfig::with_defaults(iters, seed);
            if (gb->count("--burnin")) cfg.burnin = burnin;
            if (!(cfg.iters > cfg.burnin)) throw pexp::ConfigError("burnin", "must be smaller than iters");
            cfg.checkpoint_path = checkpoint;
            cfg.snapshot_every = snapshot_every;
            cfg.resume = resume;
            cfg.stop_after = stop_after;
            cfg.dump_dir = out.string();
            auto r = pexp::run_gibbs(obs, p, hyper, cfg);
            if (!r.completed) {
                std::cout << "stopped at iteration " << r.final_state.iteration << '\n';
                return 0;
            }
            write_vector_csv(out / "posterior_mean.csv", r.summary.mean);
            const json j{{"alpha_mean", r.summary.alpha_mean}, {"alpha_sd", r.summary.alpha_sd},
                         {"tau_mean", r.summary.tau_mean},     {"tau_sd", r.summary.tau_sd},
                         {"accept_xi", r.summary.accept_xi},   {"accept_lambda", r.summary.accept_lambda},
                         {"n_kept", r.summary.n_kept},         {"band_width", r.summary.band_width()}};
            std::ofstream(out / "gibbs_summary.json") << j.dump(2) << '\n';
            std::cout << j.dump() << '\n';
        } else if (*rt) {
            const double alpha = r_alpha.value_or(beta);
            const auto opt = pexp::optimize_tau(alpha, beta, p, rn);
            const double tau = r_tau.value_or(opt.tau0);
            const auto bound = pexp::eps_upper(pexp::RateQuery{rn, beta, q, p, alpha, tau, 1.0}, pexp::TruthClass::Sobolev);
            const double m = pexp::minimax_rate(beta, rn);
            std::string lin = "NA";
            try {
                std::ostringstream s;
                s.precision(6);
                s << pexp::linear_minimax_rate(beta, q, rn);
                lin = s.str();
            } catch (const pexp::DomainError&) {
            }
            std::cout.precision(6);
            std::cout << "n,beta,q,p,alpha,regime,tau0,alpha0,bound,minimax,linear_minimax,ratio\n";
            std::cout << rn << ',' << beta << ',' << q << ',' << p << ',' << alpha << ',' << pexp::to_string(bound.regime)
                      << ',' << opt.tau0 << ',' << beta << ',' << bound.value << ',' << m << ',' << lin << ','
                      << bound.value / m << '\n';
        } else if (*ex) {
            if (which == 1) {
                pexp::Experiment1Options o;
                if (!alphas.empty()) o.alphas = alphas;
                if (ex_iters) o.iters = ex_iters;
                o.seed = seed;
                o.out_dir = out.string();
                if (o.iters <= o.retained) throw pexp::ConfigError("iters", "must exceed the 20000 retained draws");
                const auto r = pexp::run_experiment_1(o);
                for (const auto& x : r.runs)
                    std::cout << x.tag << " l2_error=" << x.l2_error << " zero_error=" << x.zero_error << '\n';
            } else {
                pexp::Experiment2Options o;
                if (ex_iters) o.iters = ex_iters;
                o.seed = seed;
                o.out_dir = out.string();
                if (o.iters <= o.retained) throw pexp::ConfigError("iters", "must exceed the 20000 retained draws");
                const auto r = pexp::run_experiment_2(o);
                for (const auto& x : r.runs)
                    std::cout << x.tag << " l2_error=" << x.l2_error << " alpha_sd=" << x.alpha_sd << '\n';
            }
        } else if (*ct) {
            auto cfg = pexp::config_from_json(read_json_file(config_file, "config"));
            if (cfg.out_dir.empty()) cfg.out_dir = out.string();
            const auto r = pexp::contraction_study(cfg);
            pexp::write_study(r, cfg.out_dir, cfg.label);
            std::cout << "slope=" << *r.slope << " se=" << *r.slope_se << " target=" << r.target_exponent << '\n';
        } else if (*rp) {
            const auto curves = pexp::read_curves_csv((fs::path(report_dir) / "curves.csv").string());
            for (const auto& path : pexp::render_figures(curves, report_dir, prefix)) std::cout << path << '\n';
        }
    } catch (const pexp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const pexp::DomainError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const pexp::NumericError& e) {
        const std::string dump = dump_failure(out_dir, e.what(), args);
        std::cerr << "numeric failure: " << e.what() << "\ndiagnostic dump: " << dump << '\n';
        return kExitNumeric;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    }
    return 0;
}
