#pragma once

// Online solvers: exponentially weighted RLS and the recursive l1,inf group
// lasso. The group solver moves the optimum from one sample to the next in
// two homotopies:
//   1. scale the old data by gamma; the old optimum is then optimal at
//      gamma*lambda, so follow the lambda path from gamma*lambda to lambda;
//   2. inject (x, y) with weight beta running from 0 to 1.
// The plain l1 (sparse RLS) variant is the same engine with singleton groups.

#include <cmath>
#include <string>
#include <vector>

#include "rgl/beta_path.hpp"
#include "rgl/errors.hpp"
#include "rgl/groups.hpp"
#include "rgl/kkt.hpp"
#include "rgl/lambda_path.hpp"
#include "rgl/linalg.hpp"
#include "rgl/path.hpp"

namespace rgl {

inline constexpr double kDefaultDelta = 1e-2;

struct RlsState {
    Vector w_hat;
    InverseCache Rinv;
    double gamma = 1.0;
    long samples = 0;

    int p() const { return static_cast<int>(w_hat.size()); }
};

inline RlsState rls_init(int p, double gamma, double delta = kDefaultDelta) {
    if (p <= 0) throw BadConfig("rls_init: p must be positive");
    if (!(delta > 0.0)) throw BadConfig("rls_init: delta must be positive");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw BadConfig("rls_init: gamma must lie in (0, 1]");
    RlsState s;
    s.w_hat = Vector::Zero(p);
    s.Rinv = InverseCache::scaled_identity(p, delta);
    s.gamma = gamma;
    return s;
}

inline double predict(const RlsState& s, const Vector& x) { return s.w_hat.dot(x); }

/// One exponentially weighted RLS step, in place.
inline RlsState& rls_update(RlsState& s, const Vector& x, double y) {
    if (x.size() != s.w_hat.size()) throw std::invalid_argument("rls_update: x has wrong length");
    const Vector g = s.Rinv.inverse() * x;
    const double alpha = 1.0 / (s.gamma + x.dot(g));
    const double e = y - s.w_hat.dot(x);
    s.w_hat.noalias() += (alpha * e) * g;
    Matrix next = s.Rinv.inverse();
    next.noalias() -= alpha * g * g.transpose();
    // The antisymmetric part of the rounding error grows by 1/gamma per step.
    s.Rinv = InverseCache((next + next.transpose()) / (2.0 * s.gamma));
    ++s.samples;
    return s;
}

struct EngineOptions {
    PathOptions path;
    /// Full optimality and inverse audit every this many samples; 0 disables.
    int audit_every = 25;
    double audit_tol = 1e-6;
    /// Maintained inverse is rebuilt when its audit error exceeds this.
    double inverse_tol = 1e-6;
};

struct EngineCounters {
    long k1_total = 0;
    long k2_total = 0;
    long samples = 0;
    /// Direct re-inversions of H triggered by failed incremental updates or
    /// audits (the initial factorization is not counted).
    long rebuilds = 0;
    long audits = 0;
    /// Audits that found the solution off the optimum and re-solved it.
    long resyncs = 0;
    double max_inverse_error = 0.0;
    double max_event_violation = 0.0;

    long events() const { return k1_total + k2_total; }
};

struct RglState {
    QuadraticData data;
    GroupPartition part;
    CompactSolution sol;
    SystemInverse hinv;
    EngineCounters counters;
    EngineOptions options;

    int p() const { return part.p(); }
    Vector w() const { return reconstruct_w(sol, part.p()); }
};

inline double predict(const RglState& s, const Vector& x) { return s.w().dot(x); }

inline RglState rgl_init(const GroupPartition& part, double gamma, double lambda, double delta = kDefaultDelta,
                         const EngineOptions& options = {}) {
    if (!(lambda > 0.0)) throw BadConfig("rgl_init: lambda must be positive (lambda = 0 is plain RLS)");
    if (!(delta > 0.0)) throw BadConfig("rgl_init: delta must be positive");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw BadConfig("rgl_init: gamma must lie in (0, 1]");
    RglState s;
    s.part = part;
    s.data.R = delta * SymMatrix::Identity(part.p(), part.p());
    s.data.r = Vector::Zero(part.p());
    s.data.lambda = lambda;
    s.data.gamma = gamma;
    s.sol = CompactSolution::zero(part, s.data.r);
    s.options = options;
    return s;
}

struct UpdateReport {
    int k1 = 0;
    int k2 = 0;
    std::vector<PathEvent> lambda_events;
    std::vector<PathEvent> beta_events;
    bool audited = false;
    bool resynced = false;
    double inverse_error = 0.0;
};

/// Checks the current solution and the maintained inverse against the raw
/// data; repairs either one if needed.
inline void rgl_audit(RglState& s, UpdateReport* report = nullptr) {
    auto& c = s.counters;
    ++c.audits;
    const double err = s.hinv.validation_error(s.data.R, s.sol.sets, s.sol.sign);
    c.max_inverse_error = std::max(c.max_inverse_error, err);
    if (report != nullptr) {
        report->audited = true;
        report->inverse_error = err;
    }
    if (!(err <= s.options.inverse_tol)) {
        s.hinv.rebuild(s.data.R, s.sol.sets, s.sol.sign);
        ++c.rebuilds;
    }
    const auto rep = check_optimality(s.w(), s.data, s.part, s.options.audit_tol);
    if (!rep.pass) {
        auto icap = icap_full_path(s.data, s.part, s.data.lambda, s.options.path);
        s.sol = std::move(icap.sol);
        s.hinv.rebuild(s.data.R, s.sol.sets, s.sol.sign);
        ++c.rebuilds;
        ++c.resyncs;
        if (report != nullptr) report->resynced = true;
    }
}

/// Absorbs one sample, in place.
inline UpdateReport rgl_update(RglState& s, const Vector& x, double y) {
    if (x.size() != s.p()) throw std::invalid_argument("rgl_update: x has wrong length");
    auto& c = s.counters;
    const double gamma = s.data.gamma;
    const double lambda = s.data.lambda;
    const std::size_t rebuilds_before = s.hinv.rebuilds;
    UpdateReport report;

    try {
        if (gamma != 1.0) {
            s.data.R *= gamma;
            s.data.r *= gamma;
            s.hinv.scale(1.0 / gamma);
            s.sol.lz *= gamma;
            auto lt = run_lambda_homotopy(std::move(s.sol), s.data.R, s.data.r, s.part, gamma * lambda, lambda,
                                          s.hinv, s.options.path);
            s.sol = std::move(lt.final);
            report.lambda_events = std::move(lt.events);
        }
        auto bt = run_beta_homotopy(std::move(s.sol), s.data, s.part, x, y, s.hinv, s.options.path);
        s.sol = std::move(bt.final);
        report.beta_events = std::move(bt.events);
    } catch (const PathStall& e) {
        throw PathStall(std::string(e.what()) + " [sample " + std::to_string(c.samples + 1) + ", p = "
                        + std::to_string(s.p()) + ", lambda = " + std::to_string(lambda) + ", active groups "
                        + std::to_string(s.sol.sets.P.size()) + "]");
    }

    const Vector d = detail::compress(s.sol, x);
    const bool incremental = s.hinv.try_rank1(d, 1.0);
    s.data.R.noalias() += x * x.transpose();
    s.data.r.noalias() += y * x;
    if (!incremental) s.hinv.rebuild(s.data.R, s.sol.sets, s.sol.sign);

    report.k1 = static_cast<int>(report.lambda_events.size());
    report.k2 = static_cast<int>(report.beta_events.size());
    c.k1_total += report.k1;
    c.k2_total += report.k2;
    ++c.samples;
    c.rebuilds += static_cast<long>(s.hinv.rebuilds - rebuilds_before);
    for (const auto* evs : {&report.lambda_events, &report.beta_events})
        for (const auto& ev : *evs)
            if (!std::isnan(ev.kkt_violation)) c.max_event_violation = std::max(c.max_event_violation, ev.kkt_violation);

    if (s.options.audit_every > 0 && c.samples % s.options.audit_every == 0) rgl_audit(s, &report);
    return report;
}

} // namespace rgl
