#pragma once

// Regularization path in lambda for fixed (R, r). With the sets fixed,
// H v = b - lambda e gives
//     dv/dlambda      = -H^{-1} e
//     d(lz)/dlambda   = -R T dv/dlambda      (on A and C)
// so the solution is piecewise linear in lambda. An inactive group m enters
// when sum_{i in C_m} |lz_i(lambda)| reaches lambda itself, which is a
// weighted-absolute-value equation with slope offset -sign(dlambda).

#include <algorithm>
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

struct LambdaTrace {
    std::vector<PathEvent> events;
    CompactSolution final;

    int k1() const { return static_cast<int>(events.size()); }
};

/// Smallest lambda at which w = 0 is optimal: max_m ||r_Gm||_1.
inline double lambda_max(const Vector& r, const GroupPartition& part) {
    double best = 0.0;
    for (const auto& g : part.groups()) {
        double l1 = 0.0;
        for (int i : g) l1 += std::abs(r[i]);
        best = std::max(best, l1);
    }
    return best;
}

/// Follows the optimum from lambda_from to lambda_to on (R, r). `hinv` must
/// invert H(R) for the sets of `sol`; it tracks the sets along the path.
inline LambdaTrace run_lambda_homotopy(CompactSolution sol, const SymMatrix& R, const Vector& r,
                                       const GroupPartition& part, double lambda_from, double lambda_to,
                                       SystemInverse& hinv, const PathOptions& opt = {}) {
    if (!(lambda_from > 0.0) || !(lambda_to > 0.0))
        throw std::invalid_argument("run_lambda_homotopy: lambdas must be positive");
    const int budget = event_budget(opt, part.p());
    const double direction = lambda_to >= lambda_from ? 1.0 : -1.0;
    const double total = std::abs(lambda_to - lambda_from);
    LambdaTrace trace;
    double travelled = 0.0;
    double lam = lambda_from;
    LastTransition last;

    while (travelled < total) {
        const double remaining = total - travelled;
        const auto np = static_cast<Eigen::Index>(sol.sets.P.size());
        SegmentDirection dir;
        dir.dv = np > 0 ? Vector(-direction * hinv.matrix().leftCols(np).rowwise().sum())
                        : Vector::Zero(hinv.order());
        const Vector wdir = detail::expand(sol, dir.dv, part.p());
        dir.dlz = -detail::sparse_product(R, sol, wdir);
        for (int m : sol.sets.P)
            for (int i : sol.sets.B_of(m)) dir.dlz[i] = 0.0;
        dir.cond4_offset = -direction;
        dir.lam_base = lam;

        const auto cands = find_candidates(sol, dir, part, last, opt.exclusion * remaining);
        const auto best = select_event(cands, [](double step) { return step; }, opt.tie_tol);
        if (!best || best->step > remaining) break;

        advance(sol, dir, best->step);
        travelled += best->step;
        lam = lambda_from + direction * travelled;
        std::optional<CompactSolution> at_event;
        if (opt.on_event) at_event = sol;
        const ActiveSets old_sets = sol.sets;
        const Vector old_sign = sol.sign;
        apply_transition(sol, part, *best, lam, opt.entering_tol);
        hinv.sync(R, old_sets, old_sign, sol.sets, sol.sign);
        refresh_closed_form(sol, R, r, nullptr, 0.0, 0.0, lam, hinv);
        last = {best->condition, best->target};

        PathEvent ev;
        ev.param = lam;
        ev.condition = best->condition;
        ev.target = best->target;
        ev.rho = best->step;
        ev.active_groups = static_cast<int>(sol.sets.P.size());
        ev.nnz = detail::nnz(sol.sets);
        if (opt.check_events) ev.kkt_violation = event_violation(sol, R, r, nullptr, 0.0, 0.0, lam, part).max();
        trace.events.push_back(ev);
        if (opt.on_event) opt.on_event(ev, *at_event, sol);
        if (static_cast<int>(trace.events.size()) > budget)
            throw PathStall("lambda homotopy exceeded " + std::to_string(budget) + " events at lambda = "
                            + std::to_string(lam) + " (last condition " + std::to_string(best->condition)
                            + ", target " + std::to_string(best->target + 1) + ")");
    }

    refresh_closed_form(sol, R, r, nullptr, 0.0, 0.0, lambda_to, hinv);
    trace.final = std::move(sol);
    return trace;
}

inline LambdaTrace run_lambda_homotopy(const CompactSolution& sol, const QuadraticData& data,
                                       const GroupPartition& part, double lambda_from, double lambda_to,
                                       const PathOptions& opt = {}) {
    SystemInverse hinv;
    hinv.rebuild(data.R, sol.sets, sol.sign);
    return run_lambda_homotopy(sol, data.R, data.r, part, lambda_from, lambda_to, hinv, opt);
}

struct IcapResult {
    Vector w;
    int k_prime = 0;
    CompactSolution sol;
    std::vector<PathEvent> events;
};

/// Non-recursive solve: trace lambda from lambda_max (w = 0) down to
/// lambda_target.
inline IcapResult icap_full_path(const QuadraticData& data, const GroupPartition& part, double lambda_target,
                                 const PathOptions& opt = {}) {
    if (!(lambda_target > 0.0)) throw std::invalid_argument("icap_full_path: lambda must be positive");
    IcapResult out;
    out.sol = CompactSolution::zero(part, data.r);
    const double lmax = lambda_max(data.r, part);
    if (lambda_target >= lmax) {
        out.w = Vector::Zero(part.p());
        return out;
    }
    SystemInverse hinv;
    auto trace = run_lambda_homotopy(out.sol, data.R, data.r, part, lmax, lambda_target, hinv, opt);
    out.k_prime = trace.k1();
    out.events = std::move(trace.events);
    out.sol = std::move(trace.final);
    out.w = reconstruct_w(out.sol, part.p());
    return out;
}

} // namespace rgl
