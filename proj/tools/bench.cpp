// Command-line front end: Monte Carlo runs, streaming identification from a
// CSV file, and path-event traces.

#include <CLI11.hpp>

#include <rgl/bench.hpp>
#include <rgl/rgl.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Samples {
    std::vector<rgl::Vector> x;
    std::vector<double> y;
};

/// Rows of x_1,...,x_p,y; an optional header line is skipped.
Samples read_samples(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw rgl::BadConfig("cannot open " + path);
    Samples s;
    std::string line;
    int width = -1;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> vals;
        std::stringstream ss(line);
        std::string cell;
        bool numeric = true;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                vals.push_back(std::stod(cell, &used));
            } catch (const std::exception&) {
                numeric = false;
                break;
            }
        }
        if (!numeric) {
            if (s.y.empty() && width < 0) continue; // header
            throw rgl::BadConfig(path + ":" + std::to_string(line_no) + ": non-numeric cell");
        }
        if (vals.size() < 2) throw rgl::BadConfig(path + ":" + std::to_string(line_no) + ": need x and y columns");
        if (width < 0) width = static_cast<int>(vals.size());
        if (static_cast<int>(vals.size()) != width)
            throw rgl::BadConfig(path + ":" + std::to_string(line_no) + ": inconsistent column count");
        rgl::Vector x(width - 1);
        for (int i = 0; i + 1 < width; ++i) x[i] = vals[static_cast<std::size_t>(i)];
        s.x.push_back(std::move(x));
        s.y.push_back(vals.back());
    }
    if (s.y.empty()) throw rgl::BadConfig(path + ": no samples");
    return s;
}

/// "2,2,1" or "[2,2,1]" gives group sizes; "[[1,2],[3,4,5]]" gives explicit
/// 1-based index lists.
rgl::GroupPartition parse_groups(const std::string& spec, int p) {
    std::string text = spec;
    if (text.find('[') == std::string::npos) text = "[" + text + "]";
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw rgl::BadConfig("--groups: " + std::string(e.what()));
    }
    if (!j.is_array() || j.empty()) throw rgl::BadConfig("--groups: expected a non-empty list");
    try {
        if (j.front().is_array()) {
            std::vector<std::vector<int>> lists;
            for (const auto& g : j) {
                std::vector<int> idx;
                for (const auto& i : g) idx.push_back(i.get<int>() - 1);
                lists.push_back(std::move(idx));
            }
            return rgl::make_partition_from_lists(p, std::move(lists));
        }
        const auto sizes = j.get<std::vector<int>>();
        return rgl::make_partition(p, std::span<const int>(sizes));
    } catch (const nlohmann::json::exception& e) {
        throw rgl::BadConfig("--groups: " + std::string(e.what()));
    } catch (const rgl::BadPartition& e) {
        throw rgl::BadConfig(std::string("--groups: ") + e.what());
    }
}

std::ofstream open_or_throw(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw rgl::IoError("cannot write " + path.string());
    out.precision(17);
    return out;
}

int cmd_run(const std::string& config_path, std::optional<int> trials, std::optional<std::uint64_t> seed,
            std::optional<std::string> out_dir) {
    rgl::ExperimentConfig cfg = rgl::load_config(config_path);
    if (trials) cfg.trials = *trials;
    if (seed) cfg.seed = *seed;
    if (out_dir) cfg.output_dir = *out_dir;
    rgl::validate(cfg);
    const auto results = rgl::run_experiment(cfg);
    const auto s = rgl::aggregate_and_emit(results, cfg.output_dir, cfg.change_at, cfg.steady_window);
    std::cout << "trials " << s.trials << ", samples " << s.n_samples << "\n"
              << "steady-state MSE before change: rls " << s.steady_before.rls << ", l1 " << s.steady_before.l1
              << ", group " << s.steady_before.group << "\n"
              << "steady-state MSE after change:  rls " << s.steady_after.rls << ", l1 " << s.steady_after.l1
              << ", group " << s.steady_after.group << "\n"
              << "critical points k " << s.k_steady << " vs k' " << s.k_icap_steady << ", savings " << s.savings
              << "\n"
              << "outputs in " << cfg.output_dir << "\n";
    return 0;
}

int cmd_identify(const std::string& input, const std::string& groups, double lambda, double gamma, double delta,
                 const std::string& out_dir) {
    const Samples data = read_samples(input);
    const int p = static_cast<int>(data.x.front().size());
    auto state = rgl::rgl_init(parse_groups(groups, p), gamma, lambda, delta);
    std::filesystem::create_directories(out_dir);
    auto pred = open_or_throw(std::filesystem::path(out_dir) / "predictions.csv");
    pred << "sample,y,prediction,k1,k2\n";
    for (std::size_t n = 0; n < data.y.size(); ++n) {
        const double yhat = rgl::predict(state, data.x[n]);
        const auto rep = rgl::rgl_update(state, data.x[n], data.y[n]);
        pred << n + 1 << ',' << data.y[n] << ',' << yhat << ',' << rep.k1 << ',' << rep.k2 << '\n';
    }
    auto coef = open_or_throw(std::filesystem::path(out_dir) / "coefficients.csv");
    coef << "index,group,w\n";
    const rgl::Vector w = state.w();
    for (int i = 0; i < p; ++i) coef << i + 1 << ',' << state.part.group_of(i) + 1 << ',' << w[i] << '\n';
    std::cout << "samples " << data.y.size() << ", critical points " << state.counters.events() << " (k1 "
              << state.counters.k1_total << ", k2 " << state.counters.k2_total << "), active groups "
              << state.sol.sets.P.size() << "\n";
    return 0;
}

int cmd_trace(const std::string& input, const std::string& groups, double lambda, double gamma, double delta,
              const std::string& out_dir) {
    const Samples data = read_samples(input);
    const int p = static_cast<int>(data.x.front().size());
    rgl::EngineOptions opts;
    opts.path.check_events = true;
    auto state = rgl::rgl_init(parse_groups(groups, p), gamma, lambda, delta, opts);
    std::vector<std::pair<int, rgl::PathEvent>> lam_rows;
    std::vector<std::pair<int, rgl::PathEvent>> beta_rows;
    std::filesystem::create_directories(out_dir);
    auto index = open_or_throw(std::filesystem::path(out_dir) / "trace_index.csv");
    index << "sample,k1,k2\n";
    for (std::size_t n = 0; n < data.y.size(); ++n) {
        const auto rep = rgl::rgl_update(state, data.x[n], data.y[n]);
        const int sample = static_cast<int>(n + 1);
        for (const auto& ev : rep.lambda_events) lam_rows.emplace_back(sample, ev);
        for (const auto& ev : rep.beta_events) beta_rows.emplace_back(sample, ev);
        index << sample << ',' << rep.k1 << ',' << rep.k2 << '\n';
    }
    rgl::write_trace_csv(std::filesystem::path(out_dir) / "lambda_trace.csv", "lambda", lam_rows);
    rgl::write_trace_csv(std::filesystem::path(out_dir) / "beta_trace.csv", "beta", beta_rows);
    std::cout << "lambda events " << lam_rows.size() << ", beta events " << beta_rows.size()
              << ", worst event KKT deviation " << state.counters.max_event_violation << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Recursive group lasso: simulation harness and stream tools"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Monte Carlo MSE and critical-point experiment");
    std::string config_path;
    std::optional<int> trials;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> run_out;
    run->add_option("--config", config_path, "JSON experiment config")->required();
    run->add_option("--trials", trials, "Override the number of trials");
    run->add_option("--seed", seed, "Override the base seed");
    run->add_option("--out", run_out, "Override the output directory");

    std::string input;
    std::string groups;
    double lambda = 0.1;
    double gamma = 1.0;
    double delta = rgl::kDefaultDelta;
    std::string out_dir = ".";
    auto add_stream_options = [&](CLI::App* sub) {
        sub->add_option("--input", input, "CSV rows x_1,...,x_p,y")->required();
        sub->add_option("--groups", groups, "Group sizes (2,3,...) or 1-based index lists [[1,2],[3]]")->required();
        sub->add_option("--lambda", lambda, "Regularization weight")->required();
        sub->add_option("--gamma", gamma, "Forgetting factor in (0, 1]")->required();
        sub->add_option("--delta", delta, "Initial diagonal loading");
        sub->add_option("--out", out_dir, "Output directory");
    };
    auto* identify = app.add_subcommand("identify", "Stream samples and emit coefficients and predictions");
    add_stream_options(identify);
    auto* trace = app.add_subcommand("trace", "Stream samples and dump every path event");
    add_stream_options(trace);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*run) return cmd_run(config_path, trials, seed, run_out);
        if (*identify) return cmd_identify(input, groups, lambda, gamma, delta, out_dir);
        if (*trace) return cmd_trace(input, groups, lambda, gamma, delta, out_dir);
    } catch (const rgl::BadConfig& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const rgl::PathStall& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const rgl::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
