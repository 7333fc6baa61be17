#pragma once

// Dense symmetric linear algebra used by the path solvers: direct solves and
// O(n^2) maintenance of explicit inverses (rank-one updates, bordering and
// deflation).

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/LU>

#include <cmath>
#include <cstddef>
#include <string>
#include <variant>

#include "rgl/errors.hpp"

namespace rgl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Symmetric matrices are stored densely; symmetry is a checked invariant,
/// not a storage format.
using SymMatrix = Eigen::MatrixXd;

inline constexpr double kPivotTol = 1e-12;
inline constexpr double kInverseTol = 1e-8;

inline double max_abs(const Eigen::Ref<const Matrix>& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline bool is_symmetric(const SymMatrix& m, double tol = 1e-12) {
    if (m.rows() != m.cols()) return false;
    return max_abs(m - m.transpose()) <= tol;
}

/// True when an LDLT factorization has a pivot that is zero relative to the
/// largest one (Eigen treats such pivots as zero instead of failing).
inline bool ldlt_is_singular(const Eigen::LDLT<Matrix>& ldlt, double rel_tol = 1e-14) {
    if (ldlt.info() != Eigen::Success) return true;
    const Vector d = ldlt.vectorD().cwiseAbs();
    if (d.size() == 0) return false;
    return !(d.minCoeff() > rel_tol * d.maxCoeff()) || !(ldlt.rcond() > 1e-14);
}

/// Solve M x = b for symmetric M through an LDLT factorization.
inline Vector sym_solve(const SymMatrix& m, const Vector& b) {
    if (m.rows() != m.cols() || m.rows() != b.size())
        throw std::invalid_argument("sym_solve: dimension mismatch");
    if (m.rows() == 0) return Vector();
    Eigen::LDLT<Matrix> ldlt(m);
    if (ldlt_is_singular(ldlt, 1e-12) || !(ldlt.rcond() > 1e-12))
        throw SingularSystem("sym_solve: matrix is numerically singular (rcond="
                             + std::to_string(ldlt.rcond()) + ")");
    Vector x = ldlt.solve(b);
    if (!x.allFinite()) throw SingularSystem("sym_solve: non-finite solution");
    return x;
}

/// Explicit inverse of a symmetric matrix, kept up to date in O(n^2) per
/// structural change.
class InverseCache {
public:
    InverseCache() = default;
    explicit InverseCache(Matrix inverse) : inv_(std::move(inverse)) {}

    /// Direct inversion; throws SingularSystem on a numerically singular source.
    static InverseCache from_matrix(const SymMatrix& m) {
        const auto n = m.rows();
        if (n == 0) return InverseCache();
        Eigen::LDLT<Matrix> ldlt(m);
        if (ldlt_is_singular(ldlt))
            throw SingularSystem("InverseCache: source matrix is singular");
        Matrix inv = ldlt.solve(Matrix::Identity(n, n));
        inv = 0.5 * (inv + inv.transpose()).eval();
        return InverseCache(std::move(inv));
    }

    static InverseCache scaled_identity(std::ptrdiff_t n, double diag) {
        return InverseCache(Matrix::Identity(n, n) / diag);
    }

    std::ptrdiff_t order() const { return inv_.rows(); }
    const Matrix& inverse() const { return inv_; }

    Vector apply(const Vector& v) const { return inv_ * v; }

    /// max |M * M^{-1} - I|
    double validation_error(const SymMatrix& source) const {
        if (source.rows() != order()) return INFINITY;
        if (order() == 0) return 0.0;
        return max_abs(source * inv_ - Matrix::Identity(order(), order()));
    }

    void scale(double factor) { inv_ *= factor; }

    /// In place: becomes the inverse of M + c u u^T.
    void rank1_update(const Vector& u, double c, double pivot_tol = kPivotTol) {
        if (c == 0.0 || order() == 0) return;
        Vector g = inv_ * u;
        const double denom = 1.0 + c * u.dot(g);
        if (!(std::abs(denom) > pivot_tol))
            throw SingularUpdate("rank-one update denominator " + std::to_string(denom));
        inv_.noalias() -= (c / denom) * g * g.transpose();
        symmetrize();
    }

    /// In place: a new row/column is bordered into M at `position`. `column`
    /// has length order()+1 and holds the new column of the grown matrix,
    /// including its diagonal entry at `position`.
    void insert(std::ptrdiff_t position, const Vector& column, double pivot_tol = kPivotTol) {
        const auto n = order();
        if (position < 0 || position > n || column.size() != n + 1)
            throw std::invalid_argument("InverseCache::insert: bad descriptor");
        Vector c(n);
        for (std::ptrdiff_t j = 0, k = 0; j <= n; ++j)
            if (j != position) c[k++] = column[j];
        const double h = column[position];
        Vector k = inv_ * c;
        const double schur = h - c.dot(k);
        if (!(std::abs(schur) > pivot_tol))
            throw SingularUpdate("bordering pivot " + std::to_string(schur));

        Matrix grown(n + 1, n + 1);
        auto map = [position](std::ptrdiff_t j) { return j < position ? j : j + 1; };
        for (std::ptrdiff_t j = 0; j < n; ++j) {
            for (std::ptrdiff_t i = 0; i < n; ++i)
                grown(map(i), map(j)) = inv_(i, j) + k[i] * k[j] / schur;
            grown(position, map(j)) = -k[j] / schur;
            grown(map(j), position) = -k[j] / schur;
        }
        grown(position, position) = 1.0 / schur;
        inv_ = std::move(grown);
    }

    /// In place: row/column `position` is deleted from M.
    void remove(std::ptrdiff_t position, double pivot_tol = kPivotTol) {
        const auto n = order();
        if (position < 0 || position >= n)
            throw std::invalid_argument("InverseCache::remove: bad position");
        const double pivot = inv_(position, position);
        if (!(std::abs(pivot) > pivot_tol))
            throw SingularUpdate("deflation pivot " + std::to_string(pivot));
        Matrix shrunk(n - 1, n - 1);
        auto map = [position](std::ptrdiff_t j) { return j < position ? j : j + 1; };
        for (std::ptrdiff_t j = 0; j < n - 1; ++j)
            for (std::ptrdiff_t i = 0; i < n - 1; ++i)
                shrunk(i, j) = inv_(map(i), map(j))
                               - inv_(map(i), position) * inv_(position, map(j)) / pivot;
        inv_ = std::move(shrunk);
        symmetrize();
    }

private:
    // Repeated scaling by 1/gamma amplifies any antisymmetric rounding error.
    void symmetrize() { inv_ = (0.5 * (inv_ + inv_.transpose())).eval(); }

    Matrix inv_;
};

/// Inverse of M + c u u^T from the inverse of M (Sherman-Morrison).
inline InverseCache smw_rank1_update(InverseCache cache, const Vector& u, double c,
                                     double pivot_tol = kPivotTol) {
    cache.rank1_update(u, c, pivot_tol);
    return cache;
}

struct AddCoordinate {
    std::ptrdiff_t position;
    Vector column;
};

struct RemoveCoordinate {
    std::ptrdiff_t position;
};

using InverseChange = std::variant<AddCoordinate, RemoveCoordinate>;

inline InverseCache grow_shrink_inverse(InverseCache cache, const InverseChange& change,
                                        double pivot_tol = kPivotTol) {
    if (const auto* add = std::get_if<AddCoordinate>(&change))
        cache.insert(add->position, add->column, pivot_tol);
    else
        cache.remove(std::get<RemoveCoordinate>(change).position, pivot_tol);
    return cache;
}

} // namespace rgl
