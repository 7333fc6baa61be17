#pragma once

// Machinery shared by the beta (new-sample) and lambda (regularization)
// homotopies: the maintained inverse of the compact system matrix H, the
// search for the next critical point, and the set transitions applied there.
//
// Along a segment with fixed sets, both paths move the state linearly in a
// step parameter s >= 0:
//     v(s)  = v + s * dv
//     lz(s) = lz + s * dlz              (on A and C; lz_B = 0)
// and a critical point is the smallest s at which
//     1: lambda z_i hits 0 for some i in A_m, |A_m| >= 2
//     2: |w_i| reaches alpha_m for some i in B_m
//     3: alpha_m hits 0 for some m in P
//     4: sum_{i in C_m} |lz_i(s)| = lam_base - cond4_offset * s  for some m in Q
// Condition 4 is solved with the weighted-absolute-value root finder.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "rgl/errors.hpp"
#include "rgl/groups.hpp"
#include "rgl/kkt.hpp"
#include "rgl/linalg.hpp"
#include "rgl/wabs.hpp"

namespace rgl {

/// One critical point on a path. `param` is beta on the beta path and lambda
/// on the lambda path; `rho` is the step parameter of the segment that ended
/// here (rho for beta, |delta lambda| for lambda). Targets are 0-based
/// coefficient indices for conditions 1-2 and group ids for conditions 3-4.
struct PathEvent {
    double param = 0.0;
    int condition = 0;
    int target = -1;
    double rho = 0.0;
    int active_groups = 0;
    int nnz = 0;
    /// Worst subgradient-condition deviation right after the event; NaN when
    /// event checking is off.
    double kkt_violation = std::numeric_limits<double>::quiet_NaN();
};

struct PathOptions {
    /// Event budget; 0 means 50 * p.
    int max_events = 0;
    /// Evaluate the subgradient conditions from raw data at every event.
    bool check_events = false;
    /// Two candidates closer than this (in the path parameter) are a tie,
    /// resolved in favour of the lower condition number.
    double tie_tol = 1e-10;
    /// A candidate that would immediately undo the previous transition is
    /// ignored when its step is below exclusion * (segment step limit).
    double exclusion = 1e-9;
    /// Entering entries with |lambda z_i| <= entering_tol * lambda go to B_m.
    double entering_tol = 1e-9;
    /// Called at every event with the state moved to the critical point
    /// (sets not yet changed) and the state after the transition.
    std::function<void(const PathEvent&, const CompactSolution& at_event, const CompactSolution& after)> on_event;
};

inline int event_budget(const PathOptions& opt, int p) { return opt.max_events > 0 ? opt.max_events : 50 * p; }

namespace detail {

inline Eigen::Index alpha_position(const ActiveSets& sets, int m) {
    return static_cast<Eigen::Index>(std::lower_bound(sets.P.begin(), sets.P.end(), m) - sets.P.begin());
}

/// T * u: compact coordinates to a p-vector.
inline Vector expand(const CompactSolution& sol, const Vector& u, int p) {
    Vector w = Vector::Zero(p);
    const auto np = static_cast<Eigen::Index>(sol.sets.P.size());
    Eigen::Index pos = np;
    for (Eigen::Index c = 0; c < np; ++c)
        for (int i : sol.sets.A_of(sol.sets.P[static_cast<std::size_t>(c)])) w[i] = sol.sign[i] * u[c];
    for (int m : sol.sets.P)
        for (int i : sol.sets.B_of(m)) w[i] = u[pos++];
    return w;
}

/// T' * x: a p-vector to compact coordinates.
inline Vector compress(const CompactSolution& sol, const Vector& x) {
    Vector d(static_cast<Eigen::Index>(sol.sets.system_order()));
    const auto np = static_cast<Eigen::Index>(sol.sets.P.size());
    Eigen::Index pos = np;
    for (Eigen::Index c = 0; c < np; ++c) {
        double acc = 0.0;
        for (int i : sol.sets.A_of(sol.sets.P[static_cast<std::size_t>(c)])) acc += sol.sign[i] * x[i];
        d[c] = acc;
    }
    for (int m : sol.sets.P)
        for (int i : sol.sets.B_of(m)) d[pos++] = x[i];
    return d;
}

/// R * w for w supported on A union B.
inline Vector sparse_product(const SymMatrix& R, const CompactSolution& sol, const Vector& w) {
    Vector out = Vector::Zero(R.rows());
    for (int m : sol.sets.P) {
        for (int i : sol.sets.A_of(m))
            if (w[i] != 0.0) out.noalias() += R.col(i) * w[i];
        for (int i : sol.sets.B_of(m))
            if (w[i] != 0.0) out.noalias() += R.col(i) * w[i];
    }
    return out;
}

inline int nnz(const ActiveSets& sets) {
    int n = 0;
    for (int m : sets.P) n += static_cast<int>(sets.A_of(m).size() + sets.B_of(m).size());
    return n;
}

} // namespace detail

/// Explicit inverse of H = T'RT for the current sets and signs, kept in the
/// canonical layout of v and updated by bordering/deflation as the sets
/// change. Falls back to direct inversion when an incremental step hits a
/// tiny pivot.
class SystemInverse {
public:
    std::size_t rebuilds = 0;
    std::size_t incremental_ops = 0;
    std::size_t jitter_rebuilds = 0;

    const InverseCache& cache() const { return cache_; }
    Eigen::Index order() const { return cache_.order(); }
    const Matrix& matrix() const { return cache_.inverse(); }

    static SymMatrix assemble(const SymMatrix& R, const ActiveSets& sets, const Vector& sign) {
        const Matrix T = expansion_matrix(sets, sign, static_cast<int>(R.rows()));
        SymMatrix H = T.transpose() * R * T;
        return 0.5 * (H + H.transpose());
    }

    void rebuild(const SymMatrix& R, const ActiveSets& sets, const Vector& sign) {
        ++rebuilds;
        const SymMatrix H = assemble(R, sets, sign);
        try {
            cache_ = InverseCache::from_matrix(H);
        } catch (const SingularSystem&) {
            ++jitter_rebuilds;
            SymMatrix loaded = H;
            loaded.diagonal().array() += 1e-10 * std::abs(H.trace()) / static_cast<double>(std::max<Eigen::Index>(1, H.rows()));
            cache_ = InverseCache::from_matrix(loaded);
        }
    }

    double validation_error(const SymMatrix& R, const ActiveSets& sets, const Vector& sign) const {
        return cache_.validation_error(assemble(R, sets, sign));
    }

    void scale(double factor) { cache_.scale(factor); }

    /// Tries H <- H + c d d'; returns false (cache untouched) on a tiny pivot.
    bool try_rank1(const Vector& d, double c) {
        try {
            cache_.rank1_update(d, c);
            return true;
        } catch (const SingularUpdate&) {
            return false;
        }
    }

    /// Moves the cache from (old_sets, old_sign) to (sets, sign) by removing
    /// the coordinates whose definition changed and bordering in the new ones.
    void sync(const SymMatrix& R, const ActiveSets& old_sets, const Vector& old_sign, const ActiveSets& sets,
              const Vector& sign) {
        const auto old_coords = layout(old_sets);
        const auto new_coords = layout(sets);
        auto alpha_changed = [&](int m) {
            if (!old_sets.is_active(m) || !sets.is_active(m)) return true;
            const auto& a_old = old_sets.A_of(m);
            const auto& a_new = sets.A_of(m);
            if (a_old != a_new) return true;
            for (int i : a_new)
                if (old_sign[i] != sign[i]) return true;
            return false;
        };
        auto kept_in = [&](const Coord& c, const std::vector<Coord>& other) {
            if (c.kind == Coord::Kind::Alpha && alpha_changed(c.id)) return false;
            return std::find(other.begin(), other.end(), c) != other.end();
        };
        try {
            for (std::size_t k = old_coords.size(); k-- > 0;)
                if (!kept_in(old_coords[k], new_coords)) {
                    cache_.remove(static_cast<Eigen::Index>(k));
                    ++incremental_ops;
                }
            std::vector<bool> present(new_coords.size());
            for (std::size_t k = 0; k < new_coords.size(); ++k) present[k] = kept_in(new_coords[k], old_coords);
            for (std::size_t j = 0; j < new_coords.size(); ++j) {
                if (present[j]) continue;
                present[j] = true;
                // Every coordinate before j is present by now, so j is also
                // the insertion position.
                cache_.insert(static_cast<Eigen::Index>(j), column(R, sets, sign, new_coords, present, j));
                ++incremental_ops;
            }
        } catch (const SingularUpdate&) {
            rebuild(R, sets, sign);
        }
        if (cache_.order() != static_cast<Eigen::Index>(new_coords.size())) rebuild(R, sets, sign);
    }

private:
    /// Column of H for coordinate j restricted to the present coordinates.
    static Vector column(const SymMatrix& R, const ActiveSets& sets, const Vector& sign,
                         const std::vector<Coord>& coords, const std::vector<bool>& present, std::size_t j) {
        Vector Ru = Vector::Zero(R.rows());
        const Coord& cj = coords[j];
        if (cj.kind == Coord::Kind::Alpha) {
            for (int i : sets.A_of(cj.id)) Ru.noalias() += sign[i] * R.col(i);
        } else {
            Ru = R.col(cj.id);
        }
        const auto count = std::count(present.begin(), present.end(), true);
        Vector col(count);
        Eigen::Index pos = 0;
        for (std::size_t k = 0; k < coords.size(); ++k) {
            if (!present[k]) continue;
            const Coord& ck = coords[k];
            double entry = 0.0;
            if (ck.kind == Coord::Kind::Alpha) {
                for (int i : sets.A_of(ck.id)) entry += sign[i] * Ru[i];
            } else {
                entry = Ru[ck.id];
            }
            col[pos++] = entry;
        }
        return col;
    }

    InverseCache cache_;
};

/// Linear motion of the state along one segment.
struct SegmentDirection {
    Vector dv;   // per unit step, compact layout
    Vector dlz;  // per unit step, p-vector (zero on B)
    double cond4_offset = 0.0;
    double lam_base = 0.0;
};

struct Candidate {
    double step = std::numeric_limits<double>::infinity();
    int condition = 0;
    int target = -1;
    /// Sign taken by an entry joining A (condition 2).
    double sign = 0.0;
};

/// The (condition, target) of the previous transition; its immediate reversal
/// is suppressed.
struct LastTransition {
    int condition = 0;
    int target = -1;
};

inline bool reverses(const LastTransition& last, int condition, int target) {
    if (last.target != target) return false;
    switch (condition) {
    case 1: return last.condition == 2;
    case 2: return last.condition == 1;
    case 3: return last.condition == 4;
    case 4: return last.condition == 3;
    default: return false;
    }
}

/// Smallest nonnegative step per condition (index condition-1); absent
/// entries have step = +inf.
inline std::array<Candidate, 4> find_candidates(const CompactSolution& sol, const SegmentDirection& dir,
                                                const GroupPartition& part, const LastTransition& last,
                                                double exclusion_step) {
    std::array<Candidate, 4> best;
    for (int k = 0; k < 4; ++k) best[static_cast<std::size_t>(k)].condition = k + 1;
    auto offer = [&](int condition, int target, double step, double sign = 0.0) {
        if (!(step >= 0.0) || !std::isfinite(step)) return;
        if (step <= exclusion_step && reverses(last, condition, target)) return;
        auto& b = best[static_cast<std::size_t>(condition - 1)];
        if (step < b.step || (step == b.step && target < b.target)) b = Candidate{step, condition, target, sign};
    };
    // Linear gap g0 + s*slope reaching zero while decreasing.
    auto crossing = [](double gap, double slope) {
        if (!(slope < 0.0)) return std::numeric_limits<double>::infinity();
        return std::max(gap, 0.0) / -slope;
    };

    const auto& sets = sol.sets;
    const auto np = static_cast<Eigen::Index>(sets.P.size());
    Eigen::Index pos = np;
    for (Eigen::Index c = 0; c < np; ++c) {
        const int m = sets.P[static_cast<std::size_t>(c)];
        const double alpha = sol.v[c];
        const double dalpha = dir.dv[c];
        if (sets.A_of(m).size() >= 2)
            for (int i : sets.A_of(m)) offer(1, i, crossing(sol.sign[i] * sol.lz[i], sol.sign[i] * dir.dlz[i]));
        offer(3, m, crossing(alpha, dalpha));
    }
    for (int m : sets.P) {
        const double alpha = sol.v[detail::alpha_position(sets, m)];
        const double dalpha = dir.dv[detail::alpha_position(sets, m)];
        for (int i : sets.B_of(m)) {
            const double wi = sol.v[pos];
            const double dwi = dir.dv[pos];
            ++pos;
            offer(2, i, crossing(alpha - wi, dalpha - dwi), 1.0);
            offer(2, i, crossing(alpha + wi, dalpha + dwi), -1.0);
        }
    }

    WabsProblem prob;
    for (int m : sets.Q) {
        prob.a.clear();
        prob.xs.clear();
        double constant = 0.0;
        double scale = 0.0;
        for (int i : part.group(m)) scale += std::abs(dir.dlz[i]);
        for (int i : part.group(m)) {
            const double t = dir.dlz[i];
            if (t == 0.0 || std::abs(t) <= 1e-15 * scale) {
                constant += std::abs(sol.lz[i]);
                continue;
            }
            prob.a.push_back(std::abs(t));
            prob.xs.push_back(-sol.lz[i] / t);
        }
        prob.y = dir.lam_base - constant;
        prob.slope_offset = dir.cond4_offset;
        double upward = std::numeric_limits<double>::infinity();
        if (prob.a.empty()) {
            // Constant norm; only a shrinking budget lam_base - offset*s can meet it.
            if (dir.cond4_offset > 0.0) upward = prob.y / dir.cond4_offset;
        } else {
            const auto roots = solve_wabs(prob);
            if (roots && std::isfinite(roots->x_max)) upward = roots->x_max;
        }
        if (std::isfinite(upward)) offer(4, m, std::max(upward, 0.0));
    }
    return best;
}

/// Moves the state by `step` along `dir`.
inline void advance(CompactSolution& sol, const SegmentDirection& dir, double step) {
    if (step == 0.0) return;
    sol.v.noalias() += step * dir.dv;
    sol.lz.noalias() += step * dir.dlz;
}

/// Applies the set transition of `cand` to the solution. v is re-laid out for
/// the new sets from the current coefficients; lz_B is zeroed. The caller
/// refreshes v and lz from the closed form afterwards.
inline void apply_transition(CompactSolution& sol, const GroupPartition& part, const Candidate& cand,
                             double lambda, double entering_tol) {
    const int p = part.p();
    const Vector w = reconstruct_w(sol, p);
    ActiveSets sets = apply_action(sol.sets, part, cand.condition, cand.target);
    std::vector<double> alpha(static_cast<std::size_t>(part.num_groups()), 0.0);
    for (int m : sol.sets.P) alpha[static_cast<std::size_t>(m)] = sol.v[detail::alpha_position(sol.sets, m)];

    switch (cand.condition) {
    case 1: sol.sign[cand.target] = 0.0; break;
    case 2: sol.sign[cand.target] = cand.sign; break;
    case 3:
        for (int i : part.group(cand.target)) sol.sign[i] = 0.0;
        alpha[static_cast<std::size_t>(cand.target)] = 0.0;
        break;
    case 4: {
        const int m = cand.target;
        auto& am = sets.A[static_cast<std::size_t>(m)];
        auto& bm = sets.B[static_cast<std::size_t>(m)];
        am.clear();
        bm.clear();
        double lzmax = 0.0;
        for (int i : part.group(m)) lzmax = std::max(lzmax, std::abs(sol.lz[i]));
        const double cut = std::min(entering_tol * lambda, 0.5 * lzmax);
        for (int i : part.group(m)) {
            if (std::abs(sol.lz[i]) > cut) {
                am.push_back(i);
                sol.sign[i] = sol.lz[i] > 0.0 ? 1.0 : -1.0;
            } else {
                bm.push_back(i);
                sol.sign[i] = 0.0;
            }
        }
        alpha[static_cast<std::size_t>(m)] = 0.0;
        break;
    }
    default: break;
    }

    sol.sets = std::move(sets);
    const auto coords = layout(sol.sets);
    Vector v(static_cast<Eigen::Index>(coords.size()));
    for (std::size_t k = 0; k < coords.size(); ++k) {
        const auto& c = coords[k];
        v[static_cast<Eigen::Index>(k)] = c.kind == Coord::Kind::Alpha ? alpha[static_cast<std::size_t>(c.id)] : w[c.id];
    }
    sol.v = std::move(v);
    for (int m : sol.sets.P)
        for (int i : sol.sets.B_of(m)) sol.lz[i] = 0.0;
}

/// Recomputes v and lz from the closed form for the effective data
///     R_eff = R + beta x x',  r_eff = r + beta x y
/// using the maintained inverse of H(R) for the current sets.
inline void refresh_closed_form(CompactSolution& sol, const SymMatrix& R, const Vector& r, const Vector* x, double y,
                                double beta, double lambda, const SystemInverse& hinv) {
    const int p = static_cast<int>(r.size());
    const auto np = static_cast<Eigen::Index>(sol.sets.P.size());
    Vector rhs = detail::compress(sol, r);
    rhs.head(np).array() -= lambda;
    Vector v;
    Vector d;
    if (x != nullptr && beta != 0.0) {
        d = detail::compress(sol, *x);
        rhs.noalias() += (beta * y) * d;
        const Vector g = hinv.matrix() * d;
        const double sigma2 = d.dot(g);
        v = hinv.matrix() * rhs;
        v.noalias() -= (beta * g.dot(rhs) / (1.0 + beta * sigma2)) * g;
    } else {
        v = hinv.matrix() * rhs;
    }
    if (v.allFinite()) sol.v = std::move(v);
    const Vector w = reconstruct_w(sol, p);
    Vector lz = r - detail::sparse_product(R, sol, w);
    if (x != nullptr && beta != 0.0) lz.noalias() += (beta * (y - x->dot(w))) * *x;
    for (int m : sol.sets.P)
        for (int i : sol.sets.B_of(m)) lz[i] = 0.0;
    sol.lz = std::move(lz);
}

inline SubgradientViolation event_violation(const CompactSolution& sol, const SymMatrix& R, const Vector& r,
                                            const Vector* x, double y, double beta, double lambda,
                                            const GroupPartition& part) {
    const Vector w = reconstruct_w(sol, part.p());
    Vector g = r - R * w;
    if (x != nullptr && beta != 0.0) g.noalias() += (beta * (y - x->dot(w))) * *x;
    return subgradient_violation_from_residual(sol, g, lambda, part);
}

/// Selects the next event among per-condition candidates, given a map from
/// step to path parameter. Ties within `tie_tol` in parameter space go to the
/// lower condition number.
template <class ParamOf>
std::optional<Candidate> select_event(const std::array<Candidate, 4>& cands, ParamOf param_of, double tie_tol) {
    double min_param = std::numeric_limits<double>::infinity();
    for (const auto& c : cands)
        if (std::isfinite(c.step)) min_param = std::min(min_param, param_of(c.step));
    if (!std::isfinite(min_param)) return std::nullopt;
    for (const auto& c : cands) // ordered by condition
        if (std::isfinite(c.step) && param_of(c.step) <= min_param + tie_tol) return c;
    return std::nullopt;
}

} // namespace rgl
