#pragma once

// Monte Carlo harness for online identification of a group-sparse system
// whose support jumps once mid-stream. Four tracks see the same data:
// standard RLS, l1 sparse RLS (singleton groups), the recursive group lasso,
// and a from-scratch lambda path (iCap) used only to count critical points.
//
// Random streams use SplitMix64 with Box-Muller (cosine branch, two uniforms
// per normal). Trial t uses seed + t; per trial the draw order is the nonzero
// values of w*, then for each sample the p entries of x followed by one noise
// value.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rgl/engine.hpp"
#include "rgl/errors.hpp"
#include "rgl/groups.hpp"
#include "rgl/lambda_path.hpp"

namespace rgl {

struct SupportWindow {
    int start = 29; // 1-based first index
    int length = 14;
    int shift = 17;
};

struct ExperimentConfig {
    int p = 100;
    int n_samples = 400;
    int change_at = 200;
    int trials = 100;
    double gamma = 0.9;
    double lambda_group = 0.1;
    double lambda_l1 = 0.05;
    double noise_var = 0.01;
    double delta = kDefaultDelta;
    std::vector<int> group_sizes = std::vector<int>(20, 5);
    SupportWindow true_support;
    std::uint64_t seed = 1;
    int audit_every = 25;
    /// iCap is run on iterations divisible by this; 0 disables it.
    int icap_every = 1;
    /// Length of the steady-state window at the end of each phase.
    int steady_window = 50;
    std::string output_dir = "out";

    GroupPartition partition() const { return make_partition(p, std::span<const int>(group_sizes)); }
};

/// Throws BadConfig on any inconsistency.
inline void validate(const ExperimentConfig& cfg) {
    auto fail = [](const std::string& why) { throw BadConfig("config: " + why); };
    if (cfg.p <= 0) fail("p must be positive");
    if (cfg.n_samples <= 0) fail("n_samples must be positive");
    if (cfg.change_at < 0 || cfg.change_at >= cfg.n_samples) fail("change_at must lie in [0, n_samples)");
    if (cfg.trials <= 0) fail("trials must be positive");
    if (!(cfg.gamma > 0.0 && cfg.gamma <= 1.0)) fail("gamma must lie in (0, 1]");
    if (!(cfg.lambda_group > 0.0)) fail("lambda_group must be positive");
    if (!(cfg.lambda_l1 > 0.0)) fail("lambda_l1 must be positive");
    if (!(cfg.noise_var >= 0.0)) fail("noise_var must be nonnegative");
    if (!(cfg.delta > 0.0)) fail("delta must be positive");
    if (cfg.audit_every < 0) fail("audit_every must be nonnegative");
    if (cfg.icap_every < 0) fail("icap_every must be nonnegative");
    if (cfg.steady_window <= 0) fail("steady_window must be positive");
    const auto& s = cfg.true_support;
    if (s.length < 0 || s.shift < 0) fail("true_support length and shift must be nonnegative");
    if (s.length > 0) {
        if (s.start < 1 || s.start + s.length - 1 > cfg.p) fail("true_support does not fit in 1..p");
        if (s.start + s.shift + s.length - 1 > cfg.p) fail("shifted true_support does not fit in 1..p");
    }
    try {
        (void)cfg.partition();
    } catch (const BadPartition& e) {
        fail(std::string("group_sizes: ") + e.what());
    }
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    if (!j.is_object()) throw BadConfig("config: expected a JSON object");
    try {
        for (const auto& [key, val] : j.items()) {
            if (key == "p") cfg.p = val.get<int>();
            else if (key == "n_samples") cfg.n_samples = val.get<int>();
            else if (key == "change_at") cfg.change_at = val.get<int>();
            else if (key == "trials") cfg.trials = val.get<int>();
            else if (key == "gamma") cfg.gamma = val.get<double>();
            else if (key == "lambda_group") cfg.lambda_group = val.get<double>();
            else if (key == "lambda_l1") cfg.lambda_l1 = val.get<double>();
            else if (key == "noise_var") cfg.noise_var = val.get<double>();
            else if (key == "delta") cfg.delta = val.get<double>();
            else if (key == "group_sizes") cfg.group_sizes = val.get<std::vector<int>>();
            else if (key == "seed") cfg.seed = val.get<std::uint64_t>();
            else if (key == "audit_every") cfg.audit_every = val.get<int>();
            else if (key == "icap_every") cfg.icap_every = val.get<int>();
            else if (key == "steady_window") cfg.steady_window = val.get<int>();
            else if (key == "output_dir") cfg.output_dir = val.get<std::string>();
            else if (key == "true_support") {
                if (!val.is_object()) throw BadConfig("config: true_support must be an object");
                for (const auto& [k2, v2] : val.items()) {
                    if (k2 == "start") cfg.true_support.start = v2.get<int>();
                    else if (k2 == "length") cfg.true_support.length = v2.get<int>();
                    else if (k2 == "shift") cfg.true_support.shift = v2.get<int>();
                    else throw BadConfig("config: unknown true_support field '" + k2 + "'");
                }
            } else {
                throw BadConfig("config: unknown field '" + key + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw BadConfig(std::string("config: ") + e.what());
    }
    validate(cfg);
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw BadConfig("config: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw BadConfig("config: " + path + ": " + e.what());
    }
    return config_from_json(j);
}

class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform on (0, 1].
    double uniform() { return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53; }

    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t state_;
};

enum class Phase { Before, After };

/// Nonzero values of w*, drawn once per trial.
inline std::vector<double> draw_support_values(const ExperimentConfig& cfg, SplitMix64& rng) {
    std::vector<double> vals(static_cast<std::size_t>(cfg.true_support.length));
    for (auto& v : vals) v = rng.normal();
    return vals;
}

inline Vector generate_system(const ExperimentConfig& cfg, Phase phase, const std::vector<double>& values) {
    Vector w = Vector::Zero(cfg.p);
    const auto& s = cfg.true_support;
    const int first = s.start - 1 + (phase == Phase::After ? s.shift : 0);
    for (int k = 0; k < s.length; ++k) w[first + k] = values[static_cast<std::size_t>(k)];
    return w;
}

/// Same as above, drawing the values from the trial's stream.
inline Vector generate_system(const ExperimentConfig& cfg, Phase phase, std::uint64_t seed) {
    SplitMix64 rng(seed);
    return generate_system(cfg, phase, draw_support_values(cfg, rng));
}

struct TrialResult {
    std::vector<double> sq_err_rls;
    std::vector<double> sq_err_l1;
    std::vector<double> sq_err_group;
    /// Critical points per iteration of the recursive group solver (k1 + k2).
    std::vector<int> k_recursive;
    /// iCap critical points per iteration; NaN where iCap was not run.
    std::vector<double> k_icap;
    Vector w_rls;
    Vector w_l1;
    Vector w_group;
    /// Largest |w_recursive - w_icap| over iterations where iCap ran.
    double max_icap_deviation = 0.0;
    EngineCounters group_counters;
    EngineCounters l1_counters;
};

inline TrialResult run_trial(const ExperimentConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    SplitMix64 rng(seed);
    const auto values = draw_support_values(cfg, rng);
    const Vector w_before = generate_system(cfg, Phase::Before, values);
    const Vector w_after = generate_system(cfg, Phase::After, values);
    const double noise_sd = std::sqrt(cfg.noise_var);

    EngineOptions opts;
    opts.audit_every = cfg.audit_every;
    RlsState rls = rls_init(cfg.p, cfg.gamma, cfg.delta);
    RglState l1 = rgl_init(singleton_partition(cfg.p), cfg.gamma, cfg.lambda_l1, cfg.delta, opts);
    RglState grp = rgl_init(cfg.partition(), cfg.gamma, cfg.lambda_group, cfg.delta, opts);

    const auto n = static_cast<std::size_t>(cfg.n_samples);
    TrialResult res;
    res.sq_err_rls.reserve(n);
    res.sq_err_l1.reserve(n);
    res.sq_err_group.reserve(n);
    res.k_recursive.reserve(n);
    res.k_icap.reserve(n);

    Vector x(cfg.p);
    for (int it = 0; it < cfg.n_samples; ++it) {
        for (int i = 0; i < cfg.p; ++i) x[i] = rng.normal();
        const Vector& w_star = it < cfg.change_at ? w_before : w_after;
        const double y = w_star.dot(x) + noise_sd * rng.normal();

        auto sq = [](double e) { return e * e; };
        res.sq_err_rls.push_back(sq(y - predict(rls, x)));
        res.sq_err_l1.push_back(sq(y - predict(l1, x)));
        res.sq_err_group.push_back(sq(y - predict(grp, x)));

        try {
            rls_update(rls, x, y);
            rgl_update(l1, x, y);
            const auto rep = rgl_update(grp, x, y);
            res.k_recursive.push_back(rep.k1 + rep.k2);
            if (cfg.icap_every > 0 && (it + 1) % cfg.icap_every == 0) {
                const auto icap = icap_full_path(grp.data, grp.part, grp.data.lambda, grp.options.path);
                res.k_icap.push_back(static_cast<double>(icap.k_prime));
                res.max_icap_deviation =
                    std::max(res.max_icap_deviation, (icap.w - grp.w()).cwiseAbs().maxCoeff());
            } else {
                res.k_icap.push_back(std::numeric_limits<double>::quiet_NaN());
            }
        } catch (const PathStall& e) {
            throw PathStall(std::string(e.what()) + " [trial seed " + std::to_string(seed) + ", iteration "
                            + std::to_string(it + 1) + "]");
        }
    }
    res.w_rls = rls.w_hat;
    res.w_l1 = l1.w();
    res.w_group = grp.w();
    res.group_counters = grp.counters;
    res.l1_counters = l1.counters;
    return res;
}

/// Runs cfg.trials trials with seeds cfg.seed + t, in trial order.
inline std::vector<TrialResult> run_experiment(const ExperimentConfig& cfg) {
    validate(cfg);
    std::vector<TrialResult> out;
    out.reserve(static_cast<std::size_t>(cfg.trials));
    for (int t = 0; t < cfg.trials; ++t) out.push_back(run_trial(cfg, cfg.seed + static_cast<std::uint64_t>(t)));
    return out;
}

struct PhaseMse {
    double rls = 0.0;
    double l1 = 0.0;
    double group = 0.0;
};

struct ExperimentSummary {
    int trials = 0;
    int n_samples = 0;
    std::vector<double> mse_rls;
    std::vector<double> mse_l1;
    std::vector<double> mse_group;
    std::vector<double> k_recursive_mean;
    /// NaN where no trial ran iCap.
    std::vector<double> k_icap_mean;
    PhaseMse steady_before;
    PhaseMse steady_after;
    /// Steady-state means over iterations where iCap ran.
    double k_steady = 0.0;
    double k_icap_steady = 0.0;
    double savings = std::numeric_limits<double>::quiet_NaN();
    double max_icap_deviation = 0.0;
    double max_inverse_error = 0.0;
    double max_event_violation = 0.0;
    long events = 0;
    long rebuilds = 0;
    long audits = 0;
    long resyncs = 0;

    double rebuild_rate() const { return events > 0 ? static_cast<double>(rebuilds) / static_cast<double>(events) : 0.0; }
};

inline ExperimentSummary summarize(const std::vector<TrialResult>& results, int change_at, int steady_window) {
    if (results.empty()) throw std::invalid_argument("summarize: no trial results");
    ExperimentSummary s;
    const std::size_t n = results.front().sq_err_rls.size();
    s.trials = static_cast<int>(results.size());
    s.n_samples = static_cast<int>(n);
    s.mse_rls.assign(n, 0.0);
    s.mse_l1.assign(n, 0.0);
    s.mse_group.assign(n, 0.0);
    s.k_recursive_mean.assign(n, 0.0);
    s.k_icap_mean.assign(n, 0.0);
    std::vector<int> icap_count(n, 0);
    for (const auto& r : results) {
        if (r.sq_err_rls.size() != n) throw std::invalid_argument("summarize: trials differ in length");
        for (std::size_t i = 0; i < n; ++i) {
            s.mse_rls[i] += r.sq_err_rls[i];
            s.mse_l1[i] += r.sq_err_l1[i];
            s.mse_group[i] += r.sq_err_group[i];
            s.k_recursive_mean[i] += r.k_recursive[i];
            if (!std::isnan(r.k_icap[i])) {
                s.k_icap_mean[i] += r.k_icap[i];
                ++icap_count[i];
            }
        }
        s.max_icap_deviation = std::max(s.max_icap_deviation, r.max_icap_deviation);
        for (const auto* c : {&r.group_counters, &r.l1_counters}) {
            s.max_inverse_error = std::max(s.max_inverse_error, c->max_inverse_error);
            s.max_event_violation = std::max(s.max_event_violation, c->max_event_violation);
            s.events += c->events();
            s.rebuilds += c->rebuilds;
            s.audits += c->audits;
            s.resyncs += c->resyncs;
        }
    }
    const double trials = static_cast<double>(results.size());
    for (std::size_t i = 0; i < n; ++i) {
        s.mse_rls[i] /= trials;
        s.mse_l1[i] /= trials;
        s.mse_group[i] /= trials;
        s.k_recursive_mean[i] /= trials;
        s.k_icap_mean[i] = icap_count[i] > 0 ? s.k_icap_mean[i] / icap_count[i] : std::numeric_limits<double>::quiet_NaN();
    }

    double k_sum = 0.0;
    double kp_sum = 0.0;
    long pairs = 0;
    auto window = [&](std::size_t end, PhaseMse& out) {
        const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(steady_window), end);
        for (std::size_t i = end - len; i < end; ++i) {
            out.rls += s.mse_rls[i] / static_cast<double>(len);
            out.l1 += s.mse_l1[i] / static_cast<double>(len);
            out.group += s.mse_group[i] / static_cast<double>(len);
            // k is averaged over the same (trial, iteration) pairs as k'.
            for (const auto& r : results)
                if (!std::isnan(r.k_icap[i])) {
                    k_sum += r.k_recursive[i];
                    kp_sum += r.k_icap[i];
                    ++pairs;
                }
        }
    };
    const std::size_t before_end = std::min(static_cast<std::size_t>(std::max(change_at, 1)), n);
    window(before_end, s.steady_before);
    window(n, s.steady_after);
    if (pairs > 0) {
        s.k_steady = k_sum / static_cast<double>(pairs);
        s.k_icap_steady = kp_sum / static_cast<double>(pairs);
        if (kp_sum > 0.0) s.savings = 1.0 - k_sum / kp_sum;
    }
    return s;
}

namespace bench_detail {

inline std::string fmt(double v) {
    if (std::isnan(v)) return "";
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

inline std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

inline void finish(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw IoError("failed writing " + path.string());
}

inline nlohmann::json json_number(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }

} // namespace bench_detail

/// Writes mse.csv, critical_points.csv and summary.json into `output_dir`.
inline ExperimentSummary aggregate_and_emit(const std::vector<TrialResult>& results, const std::string& output_dir,
                                            int change_at, int steady_window = 50) {
    using bench_detail::fmt;
    if (results.empty()) throw std::invalid_argument("aggregate_and_emit: no trial results");
    const ExperimentSummary s = summarize(results, change_at, steady_window);
    const std::filesystem::path dir(output_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

    {
        const auto path = dir / "mse.csv";
        auto out = bench_detail::open_out(path);
        out << "iteration,mse_rls,mse_l1,mse_group\n";
        for (std::size_t i = 0; i < s.mse_rls.size(); ++i)
            out << i + 1 << ',' << fmt(s.mse_rls[i]) << ',' << fmt(s.mse_l1[i]) << ',' << fmt(s.mse_group[i]) << '\n';
        bench_detail::finish(out, path);
    }
    {
        const auto path = dir / "critical_points.csv";
        auto out = bench_detail::open_out(path);
        out << "iteration,k_recursive_mean,k_icap_mean\n";
        for (std::size_t i = 0; i < s.k_recursive_mean.size(); ++i)
            out << i + 1 << ',' << fmt(s.k_recursive_mean[i]) << ',' << fmt(s.k_icap_mean[i]) << '\n';
        bench_detail::finish(out, path);
    }
    {
        using bench_detail::json_number;
        nlohmann::json j;
        j["trials"] = s.trials;
        j["n_samples"] = s.n_samples;
        j["change_at"] = change_at;
        j["steady_window"] = steady_window;
        auto phase = [&](const PhaseMse& m) {
            return nlohmann::json{{"rls", json_number(m.rls)}, {"l1", json_number(m.l1)}, {"group", json_number(m.group)}};
        };
        j["steady_state_mse"] = {{"before_change", phase(s.steady_before)}, {"after_change", phase(s.steady_after)}};
        j["critical_points"] = {{"k_recursive_mean", json_number(s.k_steady)},
                                {"k_icap_mean", json_number(s.k_icap_steady)},
                                {"savings", json_number(s.savings)}};
        j["diagnostics"] = {{"max_icap_deviation", s.max_icap_deviation},
                            {"max_inverse_error", s.max_inverse_error},
                            {"events", s.events},
                            {"rebuilds", s.rebuilds},
                            {"rebuild_rate", s.rebuild_rate()},
                            {"audits", s.audits},
                            {"resyncs", s.resyncs}};
        const auto path = dir / "summary.json";
        auto out = bench_detail::open_out(path);
        out << j.dump(2) << '\n';
        bench_detail::finish(out, path);
    }
    return s;
}

/// Writes one CSV of path events: param_name,condition,target,rho,active_groups,nnz
/// (targets 1-based), each row tagged with the sample it belongs to.
inline void write_trace_csv(const std::filesystem::path& path, const std::string& param_name,
                            const std::vector<std::pair<int, PathEvent>>& rows) {
    auto out = bench_detail::open_out(path);
    out << "sample," << param_name << ",condition,target,rho,active_groups,nnz\n";
    for (const auto& [sample, ev] : rows)
        out << sample << ',' << bench_detail::fmt(ev.param) << ',' << ev.condition << ',' << ev.target + 1 << ','
            << bench_detail::fmt(ev.rho) << ',' << ev.active_groups << ',' << ev.nnz << '\n';
    bench_detail::finish(out, path);
}

} // namespace rgl
