#pragma once

// The l1,inf group lasso objective
//     F(w) = 1/2 w'Rw - w'r + lambda * sum_m ||w_Gm||_inf
// its optimality conditions, and the closed-form solution on a fixed active
// set: with w_A = S a and v = (a; w_B),
//     H v = b - lambda e,   H = T'RT,  b = T'r,  e = (1; 0)
// where T maps v to the nonzero part of w.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rgl/groups.hpp"
#include "rgl/linalg.hpp"

namespace rgl {

struct QuadraticData {
    SymMatrix R;
    Vector r;
    double lambda = 0.0;
    double gamma = 1.0;

    int p() const { return static_cast<int>(r.size()); }
};

/// One coordinate of the compact vector v: either the amplitude alpha_m of
/// active group m, or a free coefficient w_i with i in some B_m.
struct Coord {
    enum class Kind { Alpha, Free };
    Kind kind;
    int id; // group id for Alpha, coefficient index for Free

    friend bool operator==(const Coord&, const Coord&) = default;
};

/// Canonical layout of v: (alpha_m for m in P; w_{B_m} for m in P).
inline std::vector<Coord> layout(const ActiveSets& sets) {
    std::vector<Coord> out;
    out.reserve(sets.system_order());
    for (int m : sets.P) out.push_back({Coord::Kind::Alpha, m});
    for (int m : sets.P)
        for (int i : sets.B_of(m)) out.push_back({Coord::Kind::Free, i});
    return out;
}

/// Solution in active-set coordinates. `sign` and `lz` are full p-vectors:
/// sign holds s_i on A (0 elsewhere); lz holds lambda*z_i on A and C and 0 on
/// B.
struct CompactSolution {
    ActiveSets sets;
    Vector sign;
    Vector v;
    Vector lz;

    static CompactSolution zero(const GroupPartition& part, const Vector& r) {
        CompactSolution s;
        s.sets = ActiveSets::all_inactive(part);
        s.sign = Vector::Zero(part.p());
        s.v = Vector();
        s.lz = r;
        return s;
    }

    SignMatrix S() const {
        SignMatrix out;
        out.num_cols = static_cast<int>(sets.P.size());
        for (std::size_t c = 0; c < sets.P.size(); ++c)
            for (int i : sets.A_of(sets.P[c])) {
                out.rows.push_back(i);
                out.cols.push_back(static_cast<int>(c));
                out.signs.push_back(sign[i]);
            }
        return out;
    }

    Vector lz_A() const {
        const auto idx = sets.A_union();
        Vector out(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) out[static_cast<Eigen::Index>(k)] = lz[idx[k]];
        return out;
    }
    Vector lz_C(const GroupPartition& part) const {
        const auto idx = sets.C_union(part);
        Vector out(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) out[static_cast<Eigen::Index>(k)] = lz[idx[k]];
        return out;
    }
};

/// Dense p x N matrix T with w = T v.
inline Matrix expansion_matrix(const ActiveSets& sets, const Vector& sign, int p) {
    const auto coords = layout(sets);
    Matrix T = Matrix::Zero(p, static_cast<Eigen::Index>(coords.size()));
    for (std::size_t k = 0; k < coords.size(); ++k) {
        const auto col = static_cast<Eigen::Index>(k);
        if (coords[k].kind == Coord::Kind::Alpha) {
            for (int i : sets.A_of(coords[k].id)) T(i, col) = sign[i];
        } else {
            T(coords[k].id, col) = 1.0;
        }
    }
    return T;
}

inline Vector sign_vector(const SignMatrix& S, int p) {
    Vector sign = Vector::Zero(p);
    for (std::size_t k = 0; k < S.rows.size(); ++k) sign[S.rows[k]] = S.signs[k];
    return sign;
}

inline double mixed_norm(const Vector& w, const GroupPartition& part) {
    double total = 0.0;
    for (const auto& g : part.groups()) {
        double amax = 0.0;
        for (int i : g) amax = std::max(amax, std::abs(w[i]));
        total += amax;
    }
    return total;
}

inline double objective(const Vector& w, const QuadraticData& data, const GroupPartition& part) {
    return 0.5 * w.dot(data.R * w) - w.dot(data.r) + data.lambda * mixed_norm(w, part);
}

struct ActiveSystem {
    SymMatrix H;
    Vector b;
    Vector e;
};

inline ActiveSystem assemble_system(const QuadraticData& data, const ActiveSets& sets, const SignMatrix& S) {
    const Vector sign = sign_vector(S, data.p());
    const Matrix T = expansion_matrix(sets, sign, data.p());
    ActiveSystem sys;
    sys.H = T.transpose() * data.R * T;
    sys.H = 0.5 * (sys.H + sys.H.transpose()).eval();
    sys.b = T.transpose() * data.r;
    sys.e = Vector::Zero(T.cols());
    sys.e.head(static_cast<Eigen::Index>(sets.P.size())).setOnes();
    return sys;
}

/// v = H^{-1}(b - lambda e). A numerically singular H is retried once with
/// diagonal jitter 1e-10 * trace(H) / order; `jittered` reports whether that
/// happened.
inline Vector solve_active(const SymMatrix& H, const Vector& b, const Vector& e, double lambda,
                           bool* jittered = nullptr) {
    if (jittered != nullptr) *jittered = false;
    const Vector rhs = b - lambda * e;
    try {
        return sym_solve(H, rhs);
    } catch (const SingularSystem&) {
        if (H.rows() == 0) throw;
        const double jitter = 1e-10 * std::abs(H.trace()) / static_cast<double>(H.rows());
        SymMatrix loaded = H;
        loaded.diagonal().array() += jitter;
        if (jittered != nullptr) *jittered = true;
        return sym_solve(loaded, rhs);
    }
}

/// w from compact coordinates: w_A = S a, w_B from the tail of v, w_C = 0.
inline Vector reconstruct_w(const ActiveSets& sets, const SignMatrix& S, const Vector& v, int p) {
    Vector w = Vector::Zero(p);
    for (std::size_t k = 0; k < S.rows.size(); ++k) w[S.rows[k]] = S.signs[k] * v[S.cols[k]];
    Eigen::Index pos = static_cast<Eigen::Index>(sets.P.size());
    for (int m : sets.P)
        for (int i : sets.B_of(m)) w[i] = v[pos++];
    return w;
}

inline Vector reconstruct_w(const CompactSolution& sol, int p) {
    Vector w = Vector::Zero(p);
    const auto np = static_cast<Eigen::Index>(sol.sets.P.size());
    Eigen::Index pos = np;
    for (Eigen::Index c = 0; c < np; ++c) {
        const int m = sol.sets.P[static_cast<std::size_t>(c)];
        for (int i : sol.sets.A_of(m)) w[i] = sol.sign[i] * sol.v[c];
    }
    for (int m : sol.sets.P)
        for (int i : sol.sets.B_of(m)) w[i] = sol.v[pos++];
    return w;
}

/// (lambda z_A, lambda z_C) from r - R w, in A_union / C_union order.
inline std::pair<Vector, Vector> compute_subgradients(const QuadraticData& data, const GroupPartition& part,
                                                      const ActiveSets& sets, const SignMatrix& S,
                                                      const Vector& v) {
    const Vector w = reconstruct_w(sets, S, v, data.p());
    const Vector g = data.r - data.R * w;
    const auto a_idx = sets.A_union();
    const auto c_idx = sets.C_union(part);
    Vector lz_a(static_cast<Eigen::Index>(a_idx.size()));
    Vector lz_c(static_cast<Eigen::Index>(c_idx.size()));
    for (std::size_t k = 0; k < a_idx.size(); ++k) lz_a[static_cast<Eigen::Index>(k)] = g[a_idx[k]];
    for (std::size_t k = 0; k < c_idx.size(); ++k) lz_c[static_cast<Eigen::Index>(k)] = g[c_idx[k]];
    return {lz_a, lz_c};
}

/// Builds the compact representation of an arbitrary w (used for
/// initialization and tests). lz is computed from the data.
inline CompactSolution compact(const Vector& w, const QuadraticData& data, const GroupPartition& part,
                               double tol = 0.0, const Vector* sign_hint = nullptr) {
    CompactSolution sol;
    sol.sets = compute_sets(w, part, tol);
    const SignMatrix S = build_sign_matrix(w, sol.sets, sign_hint);
    sol.sign = sign_vector(S, part.p());
    const auto coords = layout(sol.sets);
    sol.v.resize(static_cast<Eigen::Index>(coords.size()));
    for (std::size_t k = 0; k < coords.size(); ++k) {
        if (coords[k].kind == Coord::Kind::Alpha) {
            double amax = 0.0;
            for (int i : part.group(coords[k].id)) amax = std::max(amax, std::abs(w[i]));
            sol.v[static_cast<Eigen::Index>(k)] = amax;
        } else {
            sol.v[static_cast<Eigen::Index>(k)] = w[coords[k].id];
        }
    }
    sol.lz = data.r - data.R * w;
    for (int i : sol.sets.B_union()) sol.lz[i] = 0.0;
    return sol;
}

struct GroupDiagnostic {
    int group = 0;
    bool active = false;
    double violation = 0.0;
    std::string what;
};

struct OptimalityReport {
    bool pass = true;
    double max_violation = 0.0;
    std::vector<GroupDiagnostic> groups;

    std::string summary() const {
        std::ostringstream os;
        os << (pass ? "optimal" : "NOT optimal") << " (max violation " << max_violation << ")";
        for (const auto& g : groups)
            if (!g.what.empty()) os << "; group " << g.group + 1 << ": " << g.what;
        return os.str();
    }
};

/// Independent optimality referee working from w and (R, r, lambda) only.
/// With g = r - R w it requires, per group:
///   inactive: ||g_G||_1 <= lambda (1 + tol)
///   active:   ||g_A||_1 = lambda +- tol', sgn(g_A) = sgn(w_A), |g_B| <= tol'
/// where tol' = tol * max(1, lambda) and A holds the entries within tol' of
/// the group maximum.
inline OptimalityReport check_optimality(const Vector& w, const QuadraticData& data, const GroupPartition& part,
                                         double tol) {
    OptimalityReport rep;
    const Vector g = data.r - data.R * w;
    const double lam = data.lambda;
    const double abs_tol = tol * std::max(1.0, lam);
    for (int m = 0; m < part.num_groups(); ++m) {
        const auto& grp = part.group(m);
        GroupDiagnostic d;
        d.group = m;
        double amax = 0.0;
        for (int i : grp) amax = std::max(amax, std::abs(w[i]));
        d.active = amax > tol;
        std::ostringstream what;
        if (!d.active) {
            double l1 = 0.0;
            for (int i : grp) l1 += std::abs(g[i]);
            d.violation = std::max(0.0, l1 - lam * (1.0 + tol));
            if (d.violation > 0.0) what << "inactive but ||g_G||_1 = " << l1 << " > lambda = " << lam;
        } else {
            const double tie = tol * std::max(1.0, amax);
            double l1_a = 0.0;
            double sign_viol = 0.0;
            double b_viol = 0.0;
            for (int i : grp) {
                if (std::abs(w[i]) >= amax - tie) {
                    l1_a += std::abs(g[i]);
                    if (std::abs(g[i]) > abs_tol && g[i] * w[i] < 0.0) sign_viol = std::max(sign_viol, std::abs(g[i]));
                } else {
                    b_viol = std::max(b_viol, std::abs(g[i]));
                }
            }
            const double a_viol = std::abs(l1_a - lam);
            if (a_viol > abs_tol) what << "||g_A||_1 = " << l1_a << " != lambda = " << lam << " ";
            if (sign_viol > 0.0) what << "sign mismatch on A ";
            if (b_viol > abs_tol) what << "|g_B| = " << b_viol << " ";
            d.violation = std::max({a_viol > abs_tol ? a_viol : 0.0, sign_viol, b_viol > abs_tol ? b_viol : 0.0});
        }
        d.what = what.str();
        if (d.violation > 0.0) rep.pass = false;
        rep.max_violation = std::max(rep.max_violation, d.violation);
        rep.groups.push_back(std::move(d));
    }
    return rep;
}

/// Worst deviation of z = (r - R w) / lambda from the subdifferential
/// conditions, evaluated on the sets carried by the solution:
///   | ||z_Am||_1 - 1 |,  sign disagreement on A,  |z_B|,  ||z_Cm||_1 - 1.
struct SubgradientViolation {
    double a_norm = 0.0;
    double a_sign = 0.0;
    double b_zero = 0.0;
    double c_norm = 0.0;

    double max() const { return std::max({a_norm, a_sign, b_zero, c_norm}); }
};

/// Same, from a precomputed residual g = r - R w.
inline SubgradientViolation subgradient_violation_from_residual(const CompactSolution& sol, const Vector& g,
                                                                double lambda, const GroupPartition& part,
                                                                double sign_tol = 1e-7) {
    SubgradientViolation out;
    const Vector z = g / lambda;
    for (int m : sol.sets.P) {
        double l1 = 0.0;
        for (int i : sol.sets.A_of(m)) {
            l1 += std::abs(z[i]);
            if (std::abs(z[i]) > sign_tol && z[i] * sol.sign[i] < 0.0)
                out.a_sign = std::max(out.a_sign, std::abs(z[i]));
        }
        out.a_norm = std::max(out.a_norm, std::abs(l1 - 1.0));
        for (int i : sol.sets.B_of(m)) out.b_zero = std::max(out.b_zero, std::abs(z[i]));
    }
    for (int m : sol.sets.Q) {
        double l1 = 0.0;
        for (int i : part.group(m)) l1 += std::abs(z[i]);
        out.c_norm = std::max(out.c_norm, l1 - 1.0);
    }
    return out;
}

inline SubgradientViolation subgradient_violation(const CompactSolution& sol, const SymMatrix& R, const Vector& r,
                                                  double lambda, const GroupPartition& part,
                                                  double sign_tol = 1e-7) {
    const Vector w = reconstruct_w(sol, part.p());
    return subgradient_violation_from_residual(sol, r - R * w, lambda, part, sign_tol);
}

} // namespace rgl
