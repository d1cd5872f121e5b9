#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "pexp/pexp.hpp"

using namespace pexp;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("pexp_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
}

std::vector<std::string> lines_of(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string line;
    while (std::getline(ss, line))
        if (!line.empty()) out.push_back(line);
    return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, sep)) out.push_back(cell);
    return out;
}

struct CliResult {
    int code;
    std::string out, err;
};

CliResult run_cli(const std::string& args, const fs::path& scratch) {
    const fs::path o = scratch / "stdout.txt", e = scratch / "stderr.txt";
    const std::string cmd = std::string(PEXP_CLI_PATH) + " " + args + " > " + o.string() + " 2> " + e.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(o), slurp(e)};
}

std::string config_error_field(const json& j) {
    try {
        config_from_json(j);
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "";
}

ExperimentConfig small_eb_study() {
    ExperimentConfig c;
    c.label = "eb_small";
    c.truth = {truth::PowerSine{1.5, 1.0}, 1};
    c.n_list = {100, 400, 1600};
    c.L_rule = trunc_rule::Fixed{40};
    c.p = 2.0;
    c.mode = HyperParamMode::tau_only(1.0);
    c.method = Method::EB;
    c.mcmc = GibbsConfig::with_defaults(1500, 0);
    c.reps = 3;
    c.seed = 11;
    return c;
}

void write_obs(const fs::path& prefix, double n, const std::vector<double>& x) {
    std::ofstream(prefix.string() + ".json") << json{{"n", n}, {"L", x.size()}}.dump() << '\n';
    std::ofstream csv(prefix.string() + ".csv");
    csv.precision(17);
    csv << "index,x_value\n";
    for (std::size_t i = 0; i < x.size(); ++i) csv << i + 1 << ',' << x[i] << '\n';
}

} // namespace

TEST(ConfigJson, FullDocument) {
    const json j = json::parse(R"({
        "label": "demo",
        "truth": {"kind": "power_sine", "decay": 1.5},
        "n": [100, 1000, 10000],
        "L": {"power": 0.6666666666666666},
        "p": 1,
        "mode": {"free": "tau", "alpha": 1},
        "hyper": {"kind": "trunc_inv_gamma", "params": {"a": 1, "b": 1},
                  "trunc": {"rule": "assumption", "n": 100, "p": 1}},
        "method": "hb",
        "mcmc": {"iters": 5000, "burnin": 1000, "kernel": "noncentered"},
        "reps": 4,
        "seed": 9
    })");
    const auto c = config_from_json(j);
    EXPECT_EQ(c.label, "demo");
    EXPECT_EQ(c.n_list, (std::vector<double>{100, 1000, 10000}));
    EXPECT_EQ(truncation_level(1000, c.L_rule), 100u);
    EXPECT_EQ(c.method, Method::HB);
    ASSERT_TRUE(c.hyper.has_value());
    EXPECT_EQ(c.hyper->mode().free, FreeParams::Tau);
    EXPECT_EQ(c.mcmc.iters, 5000u);
    EXPECT_EQ(c.mcmc.burnin, 1000u);
    EXPECT_EQ(c.mcmc.kernel, Kernel::NonCentered);
    EXPECT_EQ(c.reps, 4u);
    EXPECT_EQ(c.seed, 9u);
}

TEST(ConfigJson, ErrorsNameTheField) {
    const json eb{{"method", "eb"}};
    auto with = [&](json extra) {
        json j = eb;
        for (auto& [k, v] : extra.items()) j[k] = v;
        return j;
    };
    EXPECT_EQ(config_error_field(json::array()), "<root>");
    EXPECT_EQ(config_error_field(json::object()), "hyper");
    EXPECT_EQ(config_error_field(with({{"truth", {{"kind", "power_sine"}}}})), "truth.decay");
    EXPECT_EQ(config_error_field(with({{"truth", {{"kind", "spiky"}}}})), "truth.kind");
    EXPECT_EQ(config_error_field(with({{"mode", {{"free", "sigma"}}}})), "mode.free");
    EXPECT_EQ(config_error_field(with({{"mode", {{"free", "tau"}}}})), "mode.alpha");
    EXPECT_EQ(config_error_field(with({{"n", "many"}})), "n");
    EXPECT_EQ(config_error_field(with({{"n", json::array({10, 0})}})), "n");
    EXPECT_EQ(config_error_field(with({{"L", 0}})), "L");
    EXPECT_EQ(config_error_field(with({{"L", {{"exponent", 1}}}})), "L.power");
    EXPECT_EQ(config_error_field(with({{"method", "mcmc"}})), "method");
    EXPECT_EQ(config_error_field(with({{"p", 3}})), "p");
    EXPECT_EQ(config_error_field(with({{"lambda", {{"tau", 1}}}})), "lambda.alpha");
    EXPECT_EQ(config_error_field(with({{"mcmc", {{"burnin", 10}}}})), "mcmc.iters");
    EXPECT_EQ(config_error_field(with({{"mcmc", {{"iters", 100}, {"burnin", 200}}}})), "mcmc.burnin");
    EXPECT_EQ(config_error_field(with({{"mcmc", {{"iters", 1000}, {"kernel", "mala"}}}})), "mcmc.kernel");
    EXPECT_EQ(config_error_field(with({{"reps", 0}})), "reps");
    EXPECT_EQ(config_error_field(with({{"reps", 2.5}})), "reps");
    const json mismatch = json::parse(R"({"method": "hb", "mode": {"free": "tau", "alpha": 1},
        "hyper": {"kind": "trunc_exp", "params": {"rate": 1}, "trunc": {"lo": 0.5, "hi": 100}, "fixed": 1}})");
    EXPECT_EQ(config_error_field(mismatch), "hyper.mode");
}

TEST(ConfigJson, ErrorMessageStartsWithField) {
    try {
        config_from_json(json{{"method", "eb"}, {"reps", -1}});
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(std::string(e.what()).rfind("reps", 0), 0u);
    }
}

TEST(RunStudy, WritesAllArtifacts) {
    const auto dir = fresh_dir("study");
    const auto r = run_study(small_eb_study());
    ASSERT_EQ(r.runs.size(), 9u);
    ASSERT_EQ(r.curves.size(), 9u);
    ASSERT_TRUE(r.slope.has_value());
    write_study(r, dir.string(), "eb");

    const auto rows = lines_of(slurp(dir / "results.csv"));
    ASSERT_EQ(rows.size(), 10u);
    EXPECT_EQ(rows[0], "n,rep,method,mode,lambda_hat_or_mean,l2_error,band_width,seconds");
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto cells = split(rows[i], ',');
        ASSERT_EQ(cells.size(), 8u);
        EXPECT_EQ(cells[2], "eb");
        EXPECT_GT(std::stod(cells[4]), 0.0);
        EXPECT_GT(std::stod(cells[5]), 0.0);
        EXPECT_GT(std::stod(cells[6]), 0.0);
    }

    const json s = json::parse(slurp(dir / "summary.json"));
    EXPECT_NEAR(s["slope"].get<double>(), *r.slope, 1e-12);
    EXPECT_EQ(s["runs"].size(), 9u);
    EXPECT_EQ(s["median_errors"].size(), 3u);

    std::size_t svgs = 0;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".svg") {
            ++svgs;
            EXPECT_NE(slurp(e.path()).find("<svg"), std::string::npos);
        }
    EXPECT_EQ(svgs, r.curves.size());
}

TEST(RunStudy, CurvesRoundTripAndFiguresReproduce) {
    const auto dir = fresh_dir("curves");
    const auto r = run_study(small_eb_study());
    write_study(r, dir.string(), "eb");
    const auto back = read_curves_csv((dir / "curves.csv").string());
    ASSERT_EQ(back.size(), r.curves.size());
    for (std::size_t k = 0; k < back.size(); ++k) {
        EXPECT_EQ(back[k].tag, r.curves[k].tag);
        ASSERT_EQ(back[k].t.size(), r.curves[k].t.size());
        for (std::size_t i = 0; i < back[k].t.size(); ++i) {
            EXPECT_NEAR(back[k].mean[i], r.curves[k].mean[i], 1e-10 * (1.0 + std::abs(r.curves[k].mean[i])));
            EXPECT_NEAR(back[k].lower[i], r.curves[k].lower[i], 1e-10 * (1.0 + std::abs(r.curves[k].lower[i])));
            EXPECT_LE(back[k].lower[i], back[k].upper[i]);
        }
    }
    // Figures come from the CSV alone, so re-rendering gives the same bytes.
    const auto dir2 = fresh_dir("curves_again");
    const auto paths = render_figures(back, dir2.string(), "eb");
    ASSERT_EQ(paths.size(), back.size());
    for (const auto& p : paths) EXPECT_EQ(slurp(p), slurp(dir / fs::path(p).filename()));
}

TEST(RunStudy, ReproducibleFromSeed) {
    auto c = small_eb_study();
    const auto a = run_study(c), b = run_study(c);
    ASSERT_EQ(a.runs.size(), b.runs.size());
    for (std::size_t i = 0; i < a.runs.size(); ++i) {
        EXPECT_EQ(a.runs[i].l2_error, b.runs[i].l2_error);
        EXPECT_EQ(a.runs[i].lambda.tau, b.runs[i].lambda.tau);
        EXPECT_EQ(a.runs[i].band_width, b.runs[i].band_width);
    }
    c.seed = 12;
    EXPECT_NE(run_study(c).runs[0].l2_error, a.runs[0].l2_error);
}

TEST(RunStudy, HierarchicalRunsCarrySamplerDiagnostics) {
    auto c = small_eb_study();
    c.n_list = {200};
    c.reps = 1;
    c.p = 1.0;
    c.method = Method::Both;
    c.hyper = HyperPriorSpec(TruncInvGamma{1.0, 1.0, tau_trunc::Assumption{200, 1.0}}, c.mode);
    c.mcmc = GibbsConfig::with_defaults(4000, 3);
    const auto r = run_study(c);
    ASSERT_EQ(r.runs.size(), 2u);
    EXPECT_EQ(r.runs[0].method, Method::EB);
    EXPECT_EQ(r.runs[1].method, Method::HB);
    EXPECT_GT(r.runs[1].accept_xi, 0.05);
    EXPECT_GT(r.runs[1].tau_sd, 0.0);
    EXPECT_FALSE(r.slope.has_value());
}

TEST(ContractionStudy, RejectsUnderspecifiedSweeps) {
    auto c = small_eb_study();
    c.n_list = {100, 100, 400};
    try {
        contraction_study(c);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.field(), "n");
    }
    c = small_eb_study();
    c.reps = 2;
    try {
        contraction_study(c);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.field(), "reps");
    }
}

TEST(ContractionStudy, ErrorDecreasesForGaussianEb) {
    auto c = small_eb_study();
    c.n_list = {256, 2048, 16384};
    c.L_rule = trunc_rule::PowerRule{2.0 / 3.0};
    c.compute_band = false;
    c.reps = 5;
    const auto r = contraction_study(c);
    ASSERT_TRUE(r.slope.has_value());
    EXPECT_LT(*r.slope, -0.15);
    EXPECT_LT(r.median_errors.back().second, r.median_errors.front().second);
}

TEST(Experiment1, ZeroNoiseRecoversTruth) {
    Experiment1Options o;
    o.n = 1e8;
    o.L = 50;
    o.alphas = {1.75};
    o.retained = 10000;
    // pCN starts at zero and moves a fraction of the way per step; the
    // concentrated posterior needs a long burn-in before the mean settles.
    o.iters = 300000;
    const auto r = run_experiment_1(o);
    ASSERT_EQ(r.runs.size(), 1u);
    EXPECT_EQ(r.runs[0].L, 50u);
    EXPECT_LT(r.runs[0].l2_error / r.runs[0].zero_error, 1e-2);
}

TEST(Experiment2, TruncationLevelsAndBandFile) {
    const auto dir = fresh_dir("exp2");
    Experiment2Options o;
    o.ps = {2.0};
    o.iters = 3000;
    o.retained = 1000;
    o.out_dir = dir.string();
    const auto r = run_experiment_2(o);
    ASSERT_EQ(r.runs.size(), 2u);
    EXPECT_EQ(r.runs[0].L, 100u);
    EXPECT_EQ(r.runs[1].L, 2155u);
    EXPECT_EQ(r.runs[0].tag, "gaussian_n=1000");
    const auto rows = lines_of(slurp(dir / "band_widths.csv"));
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0], "prior,n,band_width,l2_error");
    EXPECT_EQ(split(rows[1], ',')[0], "gaussian");
    EXPECT_TRUE(fs::exists(dir / "experiment2_gaussian_n_1000.svg"));
}

TEST(Cli, RatesRow) {
    const auto dir = fresh_dir("cli_rates");
    const auto r = run_cli("rates --beta 1 --q 1 --p 1 --n 1e4", dir);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = lines_of(r.out);
    ASSERT_EQ(rows.size(), 2u);
    const auto head = split(rows[0], ','), row = split(rows[1], ',');
    ASSERT_EQ(head.size(), row.size());
    auto cell = [&](const std::string& name) {
        for (std::size_t i = 0; i < head.size(); ++i)
            if (head[i] == name) return row[i];
        ADD_FAILURE() << name;
        return std::string();
    };
    EXPECT_NEAR(std::stod(cell("minimax")), 0.0464159, 1e-6);
    EXPECT_NEAR(std::stod(cell("linear_minimax")), 0.1, 1e-9);
    EXPECT_NEAR(std::stod(cell("ratio")), std::stod(cell("bound")) / std::stod(cell("minimax")), 1e-4);
}

TEST(Cli, LinearRateUndefinedPrintsNa) {
    const auto dir = fresh_dir("cli_rates_na");
    const auto r = run_cli("rates --beta 0.9 --q 1 --p 1 --n 1e4", dir);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find(",NA,"), std::string::npos);
}

TEST(Cli, BadInputExitsTwo) {
    const auto dir = fresh_dir("cli_bad");
    EXPECT_EQ(run_cli("rates --no-such-flag 1", dir).code, 2);
    EXPECT_EQ(run_cli("", dir).code, 2);
    EXPECT_EQ(run_cli("experiment 3", dir).code, 2);

    std::ofstream(dir / "bad.json") << json{{"method", "eb"}, {"reps", 0}}.dump();
    const auto r = run_cli("contract --config " + (dir / "bad.json").string(), dir);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("reps"), std::string::npos);

    const auto m = run_cli("mmle --obs " + (dir / "missing").string(), dir);
    EXPECT_EQ(m.code, 2);
    EXPECT_NE(m.err.find("obs"), std::string::npos);
}

TEST(Cli, NumericFailureExitsThreeWithDump) {
    const auto dir = fresh_dir("cli_numeric");
    write_obs(dir / "huge", 1e300, {1e10, 0.0, 0.0});
    const auto out = dir / "out";
    const auto r = run_cli("--out " + out.string() + " gibbs --obs " + (dir / "huge").string() +
                               " --p 1 --mode tau --alpha 1 --iters 2000",
                           dir);
    EXPECT_EQ(r.code, 3) << r.err;
    ASSERT_TRUE(fs::exists(out / "pexp_failure.json"));
    const json j = json::parse(slurp(out / "pexp_failure.json"));
    EXPECT_FALSE(j["error"].get<std::string>().empty());
    EXPECT_EQ(j["argv"][1], "--out");
}

TEST(Cli, MmleSingleCoordinate) {
    // x = 1, n = 4, p = 2, alpha = 1: the marginal N(0, tau^2 + 1/4) peaks at tau^2 = 3/4.
    const auto dir = fresh_dir("cli_mmle");
    write_obs(dir / "one", 4.0, {1.0});
    const auto r = run_cli("--out " + dir.string() + " mmle --obs " + (dir / "one").string() +
                               " --p 2 --mode tau --alpha 1 --per-decade 20",
                           dir);
    ASSERT_EQ(r.code, 0) << r.err;
    const json j = json::parse(slurp(dir / "mmle.json"));
    EXPECT_NEAR(std::log10(j["tau_hat"].get<double>()), std::log10(std::sqrt(0.75)), 1.0 / 20.0);
    EXPECT_EQ(j["alpha_hat"].get<double>(), 1.0);
    const auto table = lines_of(slurp(dir / "mmle_table.csv"));
    EXPECT_EQ(table.size(), j["grid_points"].get<std::size_t>() + 1);
}

TEST(Cli, SimulateThenGibbsResume) {
    const auto dir = fresh_dir("cli_resume");
    const auto s = run_cli("--out " + dir.string() + " simulate --n 500 --L 30 --seed 4", dir);
    ASSERT_EQ(s.code, 0) << s.err;
    const std::string obs = (dir / "obs").string();
    ASSERT_TRUE(fs::exists(obs + ".json"));
    ASSERT_TRUE(fs::exists(dir / "obs_truth.csv"));

    const std::string common = " gibbs --obs " + obs + " --p 1 --mode both --iters 3000 --seed 5";
    const auto full = run_cli("--out " + (dir / "full").string() + common, dir);
    ASSERT_EQ(full.code, 0) << full.err;

    const std::string ck = (dir / "chain.jsonl").string();
    const auto part = run_cli("--out " + (dir / "part").string() + common + " --checkpoint " + ck +
                                  " --snapshot-every 400 --stop-after 1300",
                              dir);
    ASSERT_EQ(part.code, 0) << part.err;
    EXPECT_NE(part.out.find("stopped"), std::string::npos);
    EXPECT_FALSE(fs::exists(dir / "part" / "posterior_mean.csv"));
    const auto rest = run_cli("--out " + (dir / "part").string() + common + " --checkpoint " + ck +
                                  " --snapshot-every 400 --resume",
                              dir);
    ASSERT_EQ(rest.code, 0) << rest.err;
    EXPECT_EQ(slurp(dir / "part" / "posterior_mean.csv"), slurp(dir / "full" / "posterior_mean.csv"));
    EXPECT_EQ(slurp(dir / "part" / "gibbs_summary.json"), slurp(dir / "full" / "gibbs_summary.json"));
}

TEST(Cli, ContractAndReport) {
    const auto dir = fresh_dir("cli_contract");
    const json cfg = json::parse(R"({"label": "sweep", "method": "eb", "p": 2, "n": [100, 400, 1600],
        "L": 40, "mode": {"free": "tau", "alpha": 1}, "reps": 3, "mcmc": {"iters": 1200, "burnin": 200}})");
    std::ofstream(dir / "sweep.json") << cfg.dump();
    const auto out = dir / "out";
    const auto r = run_cli("--out " + out.string() + " contract --config " + (dir / "sweep.json").string(), dir);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out.rfind("slope=", 0), 0u);
    ASSERT_TRUE(fs::exists(out / "results.csv"));
    ASSERT_TRUE(fs::exists(out / "curves.csv"));

    const auto rep = run_cli("report --dir " + out.string() + " --prefix again", dir);
    ASSERT_EQ(rep.code, 0) << rep.err;
    const auto paths = lines_of(rep.out);
    EXPECT_EQ(paths.size(), 9u);
    for (const auto& p : paths) {
        const auto name = fs::path(p).filename().string();
        EXPECT_NE(slurp(p).find("<svg"), std::string::npos);
        EXPECT_TRUE(fs::exists(out / ("sweep" + name.substr(5))));
    }
}
