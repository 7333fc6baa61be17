#pragma once

// Reference solvers for verification only. Nothing here touches the path
// machinery: the group problem is solved by accelerated proximal gradient
// (exact l1,inf prox through l1-ball projection) followed by an exact
// solve on the identified support, or by brute-force enumeration of all
// sign/support configurations; the plain lasso by coordinate descent.

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "rgl/errors.hpp"
#include "rgl/groups.hpp"
#include "rgl/kkt.hpp"

namespace rgl {

enum class OracleMethod { ProximalGradient, Enumeration };

struct OracleConfig {
    int max_iters = 400000;
    double tol = 1e-9;
    OracleMethod method = OracleMethod::ProximalGradient;
};

namespace oracle_detail {

/// Euclidean projection onto {u : ||u||_1 <= radius} by sorting.
inline Vector project_l1_ball(const Vector& u, double radius) {
    if (radius <= 0.0) return Vector::Zero(u.size());
    if (u.cwiseAbs().sum() <= radius) return u;
    std::vector<double> mags(static_cast<std::size_t>(u.size()));
    for (Eigen::Index i = 0; i < u.size(); ++i) mags[static_cast<std::size_t>(i)] = std::abs(u[i]);
    std::sort(mags.begin(), mags.end(), std::greater<>());
    double cumsum = 0.0;
    double theta = 0.0;
    for (std::size_t k = 0; k < mags.size(); ++k) {
        cumsum += mags[k];
        const double t = (cumsum - radius) / static_cast<double>(k + 1);
        if (mags[k] - t > 0.0) theta = t;
    }
    Vector out(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        const double m = std::max(std::abs(u[i]) - theta, 0.0);
        out[i] = u[i] >= 0.0 ? m : -m;
    }
    return out;
}

/// prox of tau * ||.||_inf via the Moreau decomposition.
inline Vector prox_linf(const Vector& u, double tau) { return u - project_l1_ball(u, tau); }

inline double group_objective(const SymMatrix& R, const Vector& r, double lambda, const GroupPartition& part,
                              const Vector& w) {
    double pen = 0.0;
    for (const auto& g : part.groups()) {
        double m = 0.0;
        for (int i : g) m = std::max(m, std::abs(w[i]));
        pen += m;
    }
    return 0.5 * w.dot(R * w) - r.dot(w) + lambda * pen;
}

/// Largest deviation from the group-lasso optimality conditions.
inline double group_kkt_residual(const SymMatrix& R, const Vector& r, double lambda, const GroupPartition& part,
                                 const Vector& w) {
    const Vector g = r - R * w;
    double worst = 0.0;
    for (const auto& grp : part.groups()) {
        double amax = 0.0;
        for (int i : grp) amax = std::max(amax, std::abs(w[i]));
        if (amax == 0.0) {
            double l1 = 0.0;
            for (int i : grp) l1 += std::abs(g[i]);
            worst = std::max(worst, l1 - lambda);
            continue;
        }
        double l1_top = 0.0;
        for (int i : grp) {
            if (std::abs(w[i]) >= amax * (1.0 - 1e-12)) {
                l1_top += std::abs(g[i]);
                if (g[i] * w[i] < 0.0) worst = std::max(worst, std::abs(g[i]));
            } else {
                worst = std::max(worst, std::abs(g[i]));
            }
        }
        worst = std::max(worst, std::abs(l1_top - lambda));
    }
    return worst;
}

/// Exact minimizer on the support pattern suggested by `w_approx`: groups
/// with max |w| > thr stay active, entries within thr of the maximum are
/// tied at the group amplitude with their current signs.
inline std::optional<Vector> polish_group(const SymMatrix& R, const Vector& r, double lambda,
                                          const GroupPartition& part, const Vector& w_approx, double thr) {
    const auto p = static_cast<Eigen::Index>(r.size());
    std::vector<Vector> cols;
    std::vector<bool> is_amp;
    for (const auto& grp : part.groups()) {
        double amax = 0.0;
        for (int i : grp) amax = std::max(amax, std::abs(w_approx[i]));
        if (!(amax > thr)) continue;
        Vector amp = Vector::Zero(p);
        for (int i : grp) {
            if (std::abs(w_approx[i]) >= amax - thr) {
                amp[i] = w_approx[i] >= 0.0 ? 1.0 : -1.0;
            } else {
                Vector e = Vector::Zero(p);
                e[i] = 1.0;
                cols.push_back(e);
                is_amp.push_back(false);
            }
        }
        cols.push_back(amp);
        is_amp.push_back(true);
    }
    if (cols.empty()) return Vector::Zero(p);
    Matrix T(p, static_cast<Eigen::Index>(cols.size()));
    Vector e(static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) {
        T.col(static_cast<Eigen::Index>(k)) = cols[k];
        e[static_cast<Eigen::Index>(k)] = is_amp[k] ? 1.0 : 0.0;
    }
    const Matrix H = T.transpose() * R * T;
    Eigen::LDLT<Matrix> ldlt(H);
    if (ldlt_is_singular(ldlt)) return std::nullopt;
    const Vector v = ldlt.solve(T.transpose() * r - lambda * e);
    for (std::size_t k = 0; k < cols.size(); ++k)
        if (is_amp[k] && !(v[static_cast<Eigen::Index>(k)] > 0.0)) return std::nullopt;
    return Vector(T * v);
}

inline double max_eigenvalue(const SymMatrix& R) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(R, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

inline Vector solve_proximal(const QuadraticData& data, const GroupPartition& part, const OracleConfig& cfg) {
    const SymMatrix& R = data.R;
    const Vector& r = data.r;
    const double lambda = data.lambda;
    const auto p = r.size();
    const double scale = std::max({1.0, r.cwiseAbs().maxCoeff(), lambda});
    const double L = std::max(max_eigenvalue(R), 1e-300);
    const double step = 1.0 / L;

    auto prox = [&](const Vector& u) {
        Vector out(p);
        for (const auto& grp : part.groups()) {
            Vector ug(static_cast<Eigen::Index>(grp.size()));
            for (std::size_t k = 0; k < grp.size(); ++k) ug[static_cast<Eigen::Index>(k)] = u[grp[k]];
            const Vector pg = prox_linf(ug, lambda * step);
            for (std::size_t k = 0; k < grp.size(); ++k) out[grp[k]] = pg[static_cast<Eigen::Index>(k)];
        }
        return out;
    };

    Vector x = Vector::Zero(p);
    Vector y = x;
    double t = 1.0;
    std::optional<Vector> best_polished;
    for (int it = 1; it <= cfg.max_iters; ++it) {
        const Vector x_next = prox(y - step * (R * y - r));
        // Gradient-based adaptive restart.
        if ((y - x_next).dot(x_next - x) > 0.0) {
            t = 1.0;
            y = x_next;
        } else {
            const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            y = x_next + ((t - 1.0) / t_next) * (x_next - x);
            t = t_next;
        }
        const double change = (x_next - x).cwiseAbs().maxCoeff();
        x = x_next;
        if (it % 200 == 0 || change <= 1e-15 * scale) {
            for (double thr : {1e-10 * scale, 1e-8 * scale, 1e-6 * scale, 1e-4 * scale}) {
                auto pol = polish_group(R, r, lambda, part, x, thr);
                if (pol && group_kkt_residual(R, r, lambda, part, *pol) <= cfg.tol * scale) return *pol;
            }
            if (group_kkt_residual(R, r, lambda, part, x) <= cfg.tol * scale) return x;
        }
    }
    throw NoConvergence("proximal-gradient oracle did not meet tolerance in " + std::to_string(cfg.max_iters)
                        + " iterations");
}

inline Vector solve_enumeration(const QuadraticData& data, const GroupPartition& part) {
    const auto p = static_cast<Eigen::Index>(data.r.size());
    if (p > 12 || part.num_groups() > 4)
        throw std::invalid_argument("enumeration oracle is limited to p <= 12 and at most 4 groups");
    // Per group: every assignment of each index to {B, A+, A-} with A nonempty,
    // plus "inactive".
    std::vector<std::vector<std::vector<int>>> options(static_cast<std::size_t>(part.num_groups()));
    for (int m = 0; m < part.num_groups(); ++m) {
        const auto& grp = part.group(m);
        auto& opts = options[static_cast<std::size_t>(m)];
        opts.push_back({}); // inactive
        std::size_t total = 1;
        for (std::size_t k = 0; k < grp.size(); ++k) total *= 3;
        for (std::size_t code = 0; code < total; ++code) {
            std::vector<int> labels(grp.size());
            std::size_t c = code;
            bool any_a = false;
            for (auto& l : labels) {
                l = static_cast<int>(c % 3); // 0: B, 1: A+, 2: A-
                c /= 3;
                any_a = any_a || l != 0;
            }
            if (any_a) opts.push_back(labels);
        }
    }

    Vector best = Vector::Zero(p);
    double best_obj = group_objective(data.R, data.r, data.lambda, part, best);
    std::vector<std::size_t> choice(options.size(), 0);
    while (true) {
        std::vector<Vector> cols;
        std::vector<double> e;
        for (std::size_t m = 0; m < options.size(); ++m) {
            const auto& labels = options[m][choice[m]];
            if (labels.empty()) continue;
            const auto& grp = part.group(static_cast<int>(m));
            Vector amp = Vector::Zero(p);
            for (std::size_t k = 0; k < grp.size(); ++k) {
                if (labels[k] == 0) {
                    Vector col = Vector::Zero(p);
                    col[grp[k]] = 1.0;
                    cols.push_back(col);
                    e.push_back(0.0);
                } else {
                    amp[grp[k]] = labels[k] == 1 ? 1.0 : -1.0;
                }
            }
            cols.push_back(amp);
            e.push_back(1.0);
        }
        if (!cols.empty()) {
            Matrix T(p, static_cast<Eigen::Index>(cols.size()));
            Vector ev(static_cast<Eigen::Index>(cols.size()));
            for (std::size_t k = 0; k < cols.size(); ++k) {
                T.col(static_cast<Eigen::Index>(k)) = cols[k];
                ev[static_cast<Eigen::Index>(k)] = e[k];
            }
            const Matrix H = T.transpose() * data.R * T;
            Eigen::LDLT<Matrix> ldlt(H);
            if (!ldlt_is_singular(ldlt, 1e-13)) {
                const Vector w = T * ldlt.solve(T.transpose() * data.r - data.lambda * ev);
                const double obj = group_objective(data.R, data.r, data.lambda, part, w);
                if (obj < best_obj) {
                    best_obj = obj;
                    best = w;
                }
            }
        }
        std::size_t m = 0;
        while (m < choice.size() && ++choice[m] == options[m].size()) choice[m++] = 0;
        if (m == choice.size()) break;
    }
    return best;
}

} // namespace oracle_detail

/// Minimizer of 1/2 w'Rw - w'r + lambda ||w||_{1,inf} by an independent
/// method.
inline Vector oracle_solve(const QuadraticData& data, const GroupPartition& part, const OracleConfig& cfg = {}) {
    if (cfg.method == OracleMethod::Enumeration) return oracle_detail::solve_enumeration(data, part);
    return oracle_detail::solve_proximal(data, part, cfg);
}

/// Plain lasso 1/2 w'Rw - w'r + lambda ||w||_1 by cyclic coordinate descent,
/// finished with an exact solve on the detected support and signs.
inline Vector lasso_oracle(const SymMatrix& R, const Vector& r, double lambda, double tol = 1e-10,
                           int max_sweeps = 1000000) {
    const auto p = r.size();
    const double scale = std::max({1.0, r.cwiseAbs().maxCoeff(), lambda});
    auto soft = [](double u, double t) { return u > t ? u - t : (u < -t ? u + t : 0.0); };
    auto kkt = [&](const Vector& w) {
        const Vector g = r - R * w;
        double worst = 0.0;
        for (Eigen::Index i = 0; i < p; ++i) {
            if (w[i] == 0.0)
                worst = std::max(worst, std::abs(g[i]) - lambda);
            else
                worst = std::max(worst, std::abs(g[i] - lambda * (w[i] > 0.0 ? 1.0 : -1.0)));
        }
        return worst;
    };
    auto polish = [&](const Vector& w, double thr) -> std::optional<Vector> {
        std::vector<Eigen::Index> support;
        for (Eigen::Index i = 0; i < p; ++i)
            if (std::abs(w[i]) > thr) support.push_back(i);
        Vector out = Vector::Zero(p);
        if (support.empty()) return out;
        const auto k = static_cast<Eigen::Index>(support.size());
        Matrix Rs(k, k);
        Vector rhs(k);
        for (Eigen::Index a = 0; a < k; ++a) {
            for (Eigen::Index b = 0; b < k; ++b) Rs(a, b) = R(support[a], support[b]);
            rhs[a] = r[support[a]] - lambda * (w[support[a]] > 0.0 ? 1.0 : -1.0);
        }
        Eigen::LDLT<Matrix> ldlt(Rs);
        if (ldlt_is_singular(ldlt)) return std::nullopt;
        const Vector ws = ldlt.solve(rhs);
        for (Eigen::Index a = 0; a < k; ++a) {
            if (ws[a] * w[support[a]] <= 0.0) return std::nullopt;
            out[support[a]] = ws[a];
        }
        return out;
    };

    Vector w = Vector::Zero(p);
    Vector g = r; // r - R w
    for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
        double change = 0.0;
        for (Eigen::Index i = 0; i < p; ++i) {
            const double rii = R(i, i);
            const double wi_new = soft(g[i] + rii * w[i], lambda) / rii;
            const double delta = wi_new - w[i];
            if (delta != 0.0) {
                g.noalias() -= R.col(i) * delta;
                w[i] = wi_new;
                change = std::max(change, std::abs(delta));
            }
        }
        if (sweep % 50 == 0 || change <= 1e-15 * scale) {
            for (double thr : {1e-12 * scale, 1e-9 * scale, 1e-6 * scale}) {
                auto pol = polish(w, thr);
                if (pol && kkt(*pol) <= tol * scale) return *pol;
            }
            if (kkt(w) <= tol * scale) return w;
        }
    }
    throw NoConvergence("lasso oracle did not converge");
}

} // namespace rgl
