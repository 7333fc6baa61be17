#include <gtest/gtest.h>

#include <rgl/bench.hpp>
#include <rgl/errors.hpp>
#include <rgl/oracle.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace rgl;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("rgl_bench_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int count_lines(const std::string& text) { return static_cast<int>(std::count(text.begin(), text.end(), '\n')); }

ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.p = 20;
    cfg.group_sizes = std::vector<int>(4, 5);
    cfg.true_support = {6, 5, 6};
    cfg.n_samples = 60;
    cfg.change_at = 30;
    cfg.trials = 2;
    cfg.steady_window = 10;
    return cfg;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string("\"") + RGL_BENCH_EXE + "\" " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<double> moving_average(const std::vector<double>& v, std::size_t width) {
    std::vector<double> out(v.size(), 0.0);
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        acc += v[i];
        if (i >= width) acc -= v[i - width];
        out[i] = acc / static_cast<double>(std::min(width, i + 1));
    }
    return out;
}

/// First iteration at or after `from` where the smoothed curve falls below
/// `level`.
std::size_t crossing(const std::vector<double>& smooth, std::size_t from, double level) {
    for (std::size_t i = from; i < smooth.size(); ++i)
        if (smooth[i] <= level) return i;
    return smooth.size();
}

} // namespace

TEST(ExperimentConfigTest, DefaultsAreTheReferenceSetup) {
    const ExperimentConfig cfg;
    EXPECT_NO_THROW(validate(cfg));
    EXPECT_EQ(cfg.p, 100);
    EXPECT_EQ(cfg.partition().num_groups(), 20);
    EXPECT_EQ(cfg.gamma, 0.9);
    EXPECT_EQ(cfg.lambda_group, 0.1);
    EXPECT_EQ(cfg.lambda_l1, 0.05);
    EXPECT_EQ(cfg.noise_var, 0.01);
    EXPECT_EQ(cfg.change_at, 200);
    EXPECT_EQ(cfg.n_samples, 400);
}

TEST(ExperimentConfigTest, InvalidConfigsRejected) {
    auto bad = [](auto mutate) {
        ExperimentConfig cfg;
        mutate(cfg);
        EXPECT_THROW(validate(cfg), BadConfig);
    };
    bad([](ExperimentConfig& c) { c.change_at = c.n_samples; });
    bad([](ExperimentConfig& c) { c.gamma = 0.0; });
    bad([](ExperimentConfig& c) { c.lambda_group = 0.0; });
    bad([](ExperimentConfig& c) { c.noise_var = -1.0; });
    bad([](ExperimentConfig& c) { c.trials = 0; });
    bad([](ExperimentConfig& c) { c.true_support.start = 90; });
    bad([](ExperimentConfig& c) { c.true_support.shift = 60; });
    bad([](ExperimentConfig& c) { c.group_sizes = {50, 49}; });
}

TEST(ExperimentConfigTest, JsonParsing) {
    const auto cfg = config_from_json(nlohmann::json::parse(R"({
        "p": 20, "group_sizes": [5, 5, 5, 5], "n_samples": 50, "change_at": 25,
        "true_support": {"start": 3, "length": 4, "shift": 5}, "seed": 7, "icap_every": 5
    })"));
    EXPECT_EQ(cfg.p, 20);
    EXPECT_EQ(cfg.true_support.start, 3);
    EXPECT_EQ(cfg.true_support.shift, 5);
    EXPECT_EQ(cfg.seed, 7U);
    EXPECT_EQ(cfg.icap_every, 5);
    EXPECT_EQ(cfg.gamma, 0.9);
    EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"p": 20, "bogus": 1})")), BadConfig);
    EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"p": "twenty"})")), BadConfig);
    EXPECT_THROW(config_from_json(nlohmann::json::parse(R"([1, 2])")), BadConfig);
    EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"p": 20})")), BadConfig); // groups no longer fit
    EXPECT_THROW(load_config("/nonexistent/config.json"), BadConfig);
}

TEST(SplitMix64Test, ReferenceSequence) {
    SplitMix64 rng(0);
    EXPECT_EQ(rng.next(), 0xE220A8397B1DCDAFULL);
    EXPECT_EQ(rng.next(), 0x6E789E6AA1B965F4ULL);
    EXPECT_EQ(rng.next(), 0x06C45D188009454FULL);
}

TEST(SplitMix64Test, NormalMoments) {
    SplitMix64 rng(99);
    const int n = 200000;
    double sum = 0.0;
    double sq = 0.0;
    for (int k = 0; k < n; ++k) {
        const double z = rng.normal();
        ASSERT_TRUE(std::isfinite(z));
        sum += z;
        sq += z * z;
    }
    EXPECT_NEAR(sum / n, 0.0, 0.01);
    EXPECT_NEAR(sq / n, 1.0, 0.02);
}

TEST(GenerateSystem, ReferenceSupportAndShift) {
    const ExperimentConfig cfg;
    const Vector before = generate_system(cfg, Phase::Before, 5);
    const Vector after = generate_system(cfg, Phase::After, 5);
    for (int i = 0; i < cfg.p; ++i) {
        const bool in_before = i >= 28 && i <= 41; // 1-based 29..42
        const bool in_after = i >= 45 && i <= 58;
        EXPECT_EQ(before[i] != 0.0, in_before) << i;
        EXPECT_EQ(after[i] != 0.0, in_after) << i;
    }
    for (int k = 0; k < 14; ++k) EXPECT_EQ(after[45 + k], before[28 + k]);
    EXPECT_EQ(generate_system(cfg, Phase::Before, 5), before);
    EXPECT_NE(generate_system(cfg, Phase::Before, 6), before);
}

TEST(GenerateSystem, EmptySupportIsZero) {
    ExperimentConfig cfg;
    cfg.true_support.length = 0;
    EXPECT_EQ(generate_system(cfg, Phase::Before, 1), Vector::Zero(cfg.p));
    EXPECT_EQ(generate_system(cfg, Phase::After, 1), Vector::Zero(cfg.p));
}

TEST(RunTrial, LengthsAndZeroSystem) {
    auto cfg = small_config();
    cfg.noise_var = 0.0;
    cfg.true_support.length = 0;
    const auto r = run_trial(cfg, 3);
    ASSERT_EQ(r.sq_err_rls.size(), 60U);
    ASSERT_EQ(r.sq_err_l1.size(), 60U);
    ASSERT_EQ(r.sq_err_group.size(), 60U);
    ASSERT_EQ(r.k_recursive.size(), 60U);
    ASSERT_EQ(r.k_icap.size(), 60U);
    for (std::size_t i = 0; i < 60; ++i) {
        EXPECT_EQ(r.sq_err_rls[i], 0.0);
        EXPECT_EQ(r.sq_err_l1[i], 0.0);
        EXPECT_EQ(r.sq_err_group[i], 0.0);
    }
}

TEST(RunTrial, RecursiveAgreesWithIcapAtReferenceConfig) {
    ExperimentConfig cfg;
    cfg.trials = 1;
    const auto r = run_trial(cfg, cfg.seed);
    EXPECT_LE(r.max_icap_deviation, 1e-6);
    for (double k : r.k_icap) EXPECT_FALSE(std::isnan(k));
    EXPECT_EQ(r.group_counters.resyncs, 0);
    EXPECT_EQ(r.l1_counters.resyncs, 0);
}

TEST(RunTrial, SubsampledIcapLeavesGaps) {
    auto cfg = small_config();
    cfg.icap_every = 4;
    const auto r = run_trial(cfg, 1);
    for (std::size_t i = 0; i < r.k_icap.size(); ++i) EXPECT_EQ(std::isnan(r.k_icap[i]), (i + 1) % 4 != 0) << i;
}

TEST(AggregateAndEmit, OneTrialTenSamples) {
    auto cfg = small_config();
    cfg.n_samples = 10;
    cfg.change_at = 5;
    cfg.icap_every = 2;
    const auto dir = scratch_dir("ten");
    aggregate_and_emit({run_trial(cfg, 1)}, dir.string(), cfg.change_at, cfg.steady_window);
    const std::string mse = slurp(dir / "mse.csv");
    EXPECT_EQ(mse.substr(0, mse.find('\n')), "iteration,mse_rls,mse_l1,mse_group");
    EXPECT_EQ(count_lines(mse), 11);
    const std::string cp = slurp(dir / "critical_points.csv");
    EXPECT_EQ(cp.substr(0, cp.find('\n')), "iteration,k_recursive_mean,k_icap_mean");
    EXPECT_EQ(count_lines(cp), 11);
    std::stringstream rows(cp);
    std::string row;
    std::getline(rows, row);
    for (int it = 1; std::getline(rows, row); ++it) EXPECT_EQ(row.back() == ',', it % 2 == 1) << row;
    const auto j = nlohmann::json::parse(slurp(dir / "summary.json"));
    EXPECT_TRUE(j.contains("steady_state_mse"));
    EXPECT_TRUE(j["critical_points"].contains("savings"));
}

TEST(AggregateAndEmit, Errors) {
    EXPECT_THROW(aggregate_and_emit({}, scratch_dir("empty").string(), 1), std::invalid_argument);
    const auto dir = scratch_dir("blocked");
    std::ofstream(dir / "file") << "x";
    auto cfg = small_config();
    cfg.n_samples = 4;
    cfg.change_at = 2;
    EXPECT_THROW(aggregate_and_emit({run_trial(cfg, 1)}, (dir / "file" / "sub").string(), 2), IoError);
}

TEST(AggregateAndEmit, DeterministicOutputs) {
    const auto cfg = small_config();
    const auto a = scratch_dir("det_a");
    const auto b = scratch_dir("det_b");
    aggregate_and_emit(run_experiment(cfg), a.string(), cfg.change_at, cfg.steady_window);
    aggregate_and_emit(run_experiment(cfg), b.string(), cfg.change_at, cfg.steady_window);
    for (const char* f : {"mse.csv", "critical_points.csv", "summary.json"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(Summarize, SavingsUseMatchedIterations) {
    TrialResult r;
    r.sq_err_rls = r.sq_err_l1 = r.sq_err_group = std::vector<double>(4, 1.0);
    r.k_recursive = {1, 2, 3, 4};
    r.k_icap = {std::numeric_limits<double>::quiet_NaN(), 8.0, std::numeric_limits<double>::quiet_NaN(), 16.0};
    const auto s = summarize({r}, 2, 2);
    EXPECT_DOUBLE_EQ(s.k_steady, 3.0);
    EXPECT_DOUBLE_EQ(s.k_icap_steady, 12.0);
    EXPECT_DOUBLE_EQ(s.savings, 0.75);
}

TEST(ReferenceExperiment, TrackingAndCriticalPointSavings) {
    // 20 trials at the reference setup: after the change both sparse
    // variants re-converge before standard RLS, and the recursive solver
    // needs fewer critical points than iCap at steady state.
    ExperimentConfig cfg;
    cfg.trials = 20;
    cfg.icap_every = 5;
    const auto s = summarize(run_experiment(cfg), cfg.change_at, cfg.steady_window);
    const double level = 0.5;
    const auto from = static_cast<std::size_t>(cfg.change_at);
    const auto t_rls = crossing(moving_average(s.mse_rls, 10), from, level);
    const auto t_l1 = crossing(moving_average(s.mse_l1, 10), from, level);
    const auto t_group = crossing(moving_average(s.mse_group, 10), from, level);
    EXPECT_LT(t_l1, t_rls);
    EXPECT_LT(t_group, t_rls);
    EXPECT_LT(s.k_steady, s.k_icap_steady);
    EXPECT_LE(s.max_icap_deviation, 1e-6);
}

TEST(Cli, ExitCodes) {
    const auto dir = scratch_dir("cli");
    EXPECT_EQ(run_cli("--help"), 0);
    EXPECT_EQ(run_cli(""), 2);
    EXPECT_EQ(run_cli("run"), 2);
    EXPECT_EQ(run_cli("run --config /nonexistent.json"), 2);
    std::ofstream(dir / "bad.json") << R"({"p": 10, "unknown": 3})";
    EXPECT_EQ(run_cli("run --config " + (dir / "bad.json").string()), 2);

    std::ofstream(dir / "ok.json") << R"({"p": 20, "group_sizes": [5, 5, 5, 5], "n_samples": 30, "change_at": 15,
        "true_support": {"start": 6, "length": 5, "shift": 6}, "trials": 3, "steady_window": 5})";
    EXPECT_EQ(run_cli("run --config " + (dir / "ok.json").string() + " --trials 1 --seed 4 --out "
                      + (dir / "run").string()),
              0);
    EXPECT_TRUE(fs::exists(dir / "run" / "mse.csv"));
    EXPECT_TRUE(fs::exists(dir / "run" / "critical_points.csv"));
    EXPECT_TRUE(fs::exists(dir / "run" / "summary.json"));

    {
        SplitMix64 rng(5);
        std::ofstream csv(dir / "samples.csv");
        csv << "x1,x2,x3,x4,y\n";
        for (int n = 0; n < 30; ++n) {
            double x[4];
            for (double& v : x) v = rng.normal();
            csv << x[0] << ',' << x[1] << ',' << x[2] << ',' << x[3] << ',' << 2.0 * x[0] - x[1] + 0.01 * rng.normal()
                << '\n';
        }
    }
    const std::string stream = " --input " + (dir / "samples.csv").string() + " --lambda 0.1 --gamma 0.95";
    EXPECT_EQ(run_cli("identify" + stream + " --groups 2,2 --out " + (dir / "id").string()), 0);
    const std::string coef = slurp(dir / "id" / "coefficients.csv");
    EXPECT_EQ(count_lines(coef), 5);
    EXPECT_EQ(count_lines(slurp(dir / "id" / "predictions.csv")), 31);
    EXPECT_EQ(run_cli("trace" + stream + " --groups [[1,3],[2,4]] --out " + (dir / "tr").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "tr" / "lambda_trace.csv"));
    EXPECT_TRUE(fs::exists(dir / "tr" / "beta_trace.csv"));
    EXPECT_EQ(run_cli("identify" + stream + " --groups 2,1"), 2);
    EXPECT_EQ(run_cli("identify --input /nonexistent.csv --groups 2,2 --lambda 0.1 --gamma 0.9"), 2);
    EXPECT_EQ(run_cli("identify" + stream + " --groups 2,2 --lambda 0"), 2);
}

TEST(Cli, TraceRowsMatchCounters) {
    const auto dir = scratch_dir("trace_rows");
    {
        SplitMix64 rng(8);
        std::ofstream csv(dir / "samples.csv");
        for (int n = 0; n < 40; ++n) {
            double x[6];
            for (double& v : x) v = rng.normal();
            csv << x[0] << ',' << x[1] << ',' << x[2] << ',' << x[3] << ',' << x[4] << ',' << x[5] << ','
                << x[0] - x[1] + 0.5 * x[2] + 0.1 * rng.normal() << '\n';
        }
    }
    ASSERT_EQ(run_cli("trace --input " + (dir / "samples.csv").string()
                      + " --groups 3,3 --lambda 0.2 --gamma 0.9 --out " + (dir / "out").string()),
              0);
    const int lam_rows = count_lines(slurp(dir / "out" / "lambda_trace.csv")) - 1;
    const int beta_rows = count_lines(slurp(dir / "out" / "beta_trace.csv")) - 1;
    std::ifstream idx(dir / "out" / "trace_index.csv");
    std::string line;
    std::getline(idx, line);
    int k1 = 0;
    int k2 = 0;
    while (std::getline(idx, line)) {
        int sample = 0;
        int a = 0;
        int b = 0;
        char c1 = 0;
        char c2 = 0;
        std::stringstream(line) >> sample >> c1 >> a >> c2 >> b;
        k1 += a;
        k2 += b;
    }
    EXPECT_EQ(lam_rows, k1);
    EXPECT_EQ(beta_rows, k2);
    EXPECT_GT(k1 + k2, 0);
}
