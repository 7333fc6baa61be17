#pragma once

// Homotopy in the sample weight beta: propagates the solution of
//     min 1/2 w'R(beta)w - w'r(beta) + lambda ||w||_{1,inf}
//     R(beta) = R0 + beta x x',  r(beta) = r0 + beta x y
// from beta = 0 to beta = 1. Within a segment [beta0, beta1] with fixed sets
//     v'      = v + rho (y - yhat) g
//     lz_A,C' = lz_A,C + rho t_A,C
//     rho     = (beta1 - beta0) / (1 + sigma^2 beta1)
// with d = T'x, g = H0^{-1} d, yhat = d'v, sigma^2 = d'g and H0 built on R0.

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "rgl/errors.hpp"
#include "rgl/groups.hpp"
#include "rgl/kkt.hpp"
#include "rgl/path.hpp"

namespace rgl {

struct SegmentEnv {
    Vector d;
    Vector g;
    double y_hat = 0.0;
    double sigma_H2 = 0.0;
    /// (y - yhat)(x - R0 T g) on A and C, zero on B (p-vector).
    Vector t;

    Vector t_A(const CompactSolution& sol) const {
        const auto idx = sol.sets.A_union();
        Vector out(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) out[static_cast<Eigen::Index>(k)] = t[idx[k]];
        return out;
    }
    Vector t_C(const CompactSolution& sol, const GroupPartition& part) const {
        const auto idx = sol.sets.C_union(part);
        Vector out(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) out[static_cast<Eigen::Index>(k)] = t[idx[k]];
        return out;
    }
};

struct PathTrace {
    std::vector<PathEvent> events;
    CompactSolution final;

    int k2() const { return static_cast<int>(events.size()); }
};

/// h0inv must invert H0 = T'R0T for the sets and signs of `sol`.
inline SegmentEnv compute_env(const CompactSolution& sol, const SymMatrix& R0, const Matrix& h0inv, const Vector& x,
                              double y) {
    SegmentEnv env;
    env.d = detail::compress(sol, x);
    env.g = h0inv * env.d;
    env.y_hat = env.d.dot(sol.v);
    env.sigma_H2 = env.d.dot(env.g);
    const int p = static_cast<int>(x.size());
    const Vector g_full = detail::expand(sol, env.g, p);
    env.t = (y - env.y_hat) * (x - detail::sparse_product(R0, sol, g_full));
    for (int m : sol.sets.P)
        for (int i : sol.sets.B_of(m)) env.t[i] = 0.0;
    return env;
}

inline SegmentEnv compute_env(const CompactSolution& sol, const QuadraticData& data0, const InverseCache& h0inv,
                              const Vector& x, double y) {
    return compute_env(sol, data0.R, h0inv.inverse(), x, y);
}

/// rho = (beta1 - beta0) / (1 + sigma^2 beta1), for beta1 >= beta0.
inline double rho_from_beta(double beta1, double beta0, double sigma2) {
    if (!(beta1 >= beta0) || sigma2 < 0.0) throw OutOfRange("rho_from_beta: need beta1 >= beta0, sigma^2 >= 0");
    return (beta1 - beta0) / (1.0 + sigma2 * beta1);
}

/// beta1 = (rho + beta0) / (1 - sigma^2 rho), for rho in [0, 1/sigma^2).
inline double beta_from_rho(double rho, double beta0, double sigma2) {
    if (!(rho >= 0.0) || sigma2 < 0.0 || !(sigma2 * rho < 1.0))
        throw OutOfRange("beta_from_rho: rho must lie in [0, 1/sigma^2)");
    return (rho + beta0) / (1.0 - sigma2 * rho);
}

inline SegmentDirection beta_direction(const SegmentEnv& env, double y, double lambda) {
    SegmentDirection dir;
    dir.dv = (y - env.y_hat) * env.g;
    dir.dlz = env.t;
    dir.cond4_offset = 0.0;
    dir.lam_base = lambda;
    return dir;
}

/// Closed-form move from beta0 to beta1 on unchanged sets.
inline CompactSolution theorem1_step(CompactSolution sol, const SegmentEnv& env, double beta0, double beta1, double y) {
    const double rho = rho_from_beta(beta1, beta0, env.sigma_H2);
    advance(sol, beta_direction(env, y, 0.0), rho);
    return sol;
}

/// Per-condition smallest critical rho in [0, 1/sigma^2); absent conditions
/// carry step = +inf.
inline std::array<Candidate, 4> critical_rho(const CompactSolution& sol, const SegmentEnv& env,
                                             const GroupPartition& part, double y, double lambda,
                                             const LastTransition& last = {}, double exclusion_step = 0.0) {
    auto cands = find_candidates(sol, beta_direction(env, y, lambda), part, last, exclusion_step);
    for (auto& c : cands)
        if (env.sigma_H2 > 0.0 && !(c.step * env.sigma_H2 < 1.0)) c.step = std::numeric_limits<double>::infinity();
    return cands;
}

/// Algorithm: starting from the optimum at beta = 0 for (R0, r0, lambda),
/// alternate closed-form segment moves and set transitions until beta = 1.
/// `h0inv` must invert H(R0) for the sets of `sol` and is kept in sync with
/// the sets; on return it inverts H(R0) for the final sets.
inline PathTrace run_beta_homotopy(CompactSolution sol, const QuadraticData& data0, const GroupPartition& part,
                                   const Vector& x, double y, SystemInverse& h0inv, const PathOptions& opt = {}) {
    const SymMatrix& R0 = data0.R;
    const Vector& r0 = data0.r;
    const double lambda = data0.lambda;
    const int budget = event_budget(opt, part.p());
    PathTrace trace;
    double beta0 = 0.0;
    LastTransition last;

    while (true) {
        const SegmentEnv env = compute_env(sol, R0, h0inv.matrix(), x, y);
        const double innovation = y - env.y_hat;
        if (innovation == 0.0) break;
        const double rho_end = (1.0 - beta0) / (1.0 + env.sigma_H2);
        const auto dir = beta_direction(env, y, lambda);
        const auto cands = find_candidates(sol, dir, part, last, opt.exclusion * rho_end);
        const double s2 = env.sigma_H2;
        const auto best = select_event(
            cands,
            [&](double rho) {
                return s2 * rho < 1.0 ? (rho + beta0) / (1.0 - s2 * rho) : std::numeric_limits<double>::infinity();
            },
            opt.tie_tol);
        if (!best) break;
        const double beta1 = (best->step + beta0) / (1.0 - s2 * best->step);
        if (beta1 > 1.0) break;

        advance(sol, dir, best->step);
        std::optional<CompactSolution> at_event;
        if (opt.on_event) at_event = sol;
        const ActiveSets old_sets = sol.sets;
        const Vector old_sign = sol.sign;
        apply_transition(sol, part, *best, lambda, opt.entering_tol);
        h0inv.sync(R0, old_sets, old_sign, sol.sets, sol.sign);
        beta0 = std::max(beta0, beta1);
        refresh_closed_form(sol, R0, r0, &x, y, beta0, lambda, h0inv);
        last = {best->condition, best->target};

        PathEvent ev;
        ev.param = beta0;
        ev.condition = best->condition;
        ev.target = best->target;
        ev.rho = best->step;
        ev.active_groups = static_cast<int>(sol.sets.P.size());
        ev.nnz = detail::nnz(sol.sets);
        if (opt.check_events) ev.kkt_violation = event_violation(sol, R0, r0, &x, y, beta0, lambda, part).max();
        trace.events.push_back(ev);
        if (opt.on_event) opt.on_event(ev, *at_event, sol);
        if (static_cast<int>(trace.events.size()) > budget)
            throw PathStall("beta homotopy exceeded " + std::to_string(budget) + " events at beta = "
                            + std::to_string(beta0) + " (last condition " + std::to_string(best->condition)
                            + ", target " + std::to_string(best->target + 1) + ")");
    }

    if (beta0 < 1.0) {
        const SegmentEnv env = compute_env(sol, R0, h0inv.matrix(), x, y);
        advance(sol, beta_direction(env, y, lambda), (1.0 - beta0) / (1.0 + env.sigma_H2));
    }
    refresh_closed_form(sol, R0, r0, &x, y, 1.0, lambda, h0inv);
    trace.final = std::move(sol);
    return trace;
}

/// Convenience overload that factors H0 directly.
inline PathTrace run_beta_homotopy(const CompactSolution& sol, const QuadraticData& data0, const GroupPartition& part,
                                   const Vector& x, double y, const PathOptions& opt = {}) {
    SystemInverse h0inv;
    h0inv.rebuild(data0.R, sol.sets, sol.sign);
    return run_beta_homotopy(sol, data0, part, x, y, h0inv, opt);
}

} // namespace rgl
