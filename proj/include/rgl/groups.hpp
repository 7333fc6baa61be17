#pragma once

// Group partition and active-set bookkeeping for the l1,inf penalty.
//
// For a coefficient vector w and partition {G_m}:
//   P    active groups (||w_Gm||_inf > 0), Q the rest
//   A_m  indices of G_m attaining the group maximum |w_i|, m in P
//   B_m  G_m \ A_m, m in P
//   C    union of G_m over m in Q
// Indices are 0-based here; 1-based conversion happens at the I/O boundary.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rgl/errors.hpp"
#include "rgl/linalg.hpp"

namespace rgl {

class GroupPartition {
public:
    GroupPartition() = default;

    int p() const { return static_cast<int>(group_of_.size()); }
    int num_groups() const { return static_cast<int>(groups_.size()); }
    const std::vector<int>& group(int m) const { return groups_[static_cast<std::size_t>(m)]; }
    const std::vector<std::vector<int>>& groups() const { return groups_; }
    int group_of(int i) const { return group_of_[static_cast<std::size_t>(i)]; }
    std::size_t max_group_size() const {
        std::size_t s = 0;
        for (const auto& g : groups_) s = std::max(s, g.size());
        return s;
    }

    friend GroupPartition make_partition_from_lists(int p, std::vector<std::vector<int>> groups);

private:
    std::vector<std::vector<int>> groups_;
    std::vector<int> group_of_;
};

/// Builds a partition from explicit 0-based index lists; throws BadPartition
/// on overlaps, gaps, out-of-range indices or empty groups.
inline GroupPartition make_partition_from_lists(int p, std::vector<std::vector<int>> groups) {
    if (p <= 0) throw BadPartition("partition needs p > 0");
    GroupPartition part;
    part.group_of_.assign(static_cast<std::size_t>(p), -1);
    for (std::size_t m = 0; m < groups.size(); ++m) {
        auto& g = groups[m];
        if (g.empty()) throw BadPartition("group " + std::to_string(m + 1) + " is empty");
        std::sort(g.begin(), g.end());
        for (int i : g) {
            if (i < 0 || i >= p)
                throw BadPartition("index " + std::to_string(i + 1) + " outside 1.." + std::to_string(p));
            auto& owner = part.group_of_[static_cast<std::size_t>(i)];
            if (owner != -1)
                throw BadPartition("index " + std::to_string(i + 1) + " appears in two groups");
            owner = static_cast<int>(m);
        }
    }
    for (int i = 0; i < p; ++i)
        if (part.group_of_[static_cast<std::size_t>(i)] == -1)
            throw BadPartition("index " + std::to_string(i + 1) + " is not covered");
    part.groups_ = std::move(groups);
    return part;
}

/// Contiguous groups with the given sizes.
inline GroupPartition make_partition(int p, std::span<const int> sizes) {
    std::vector<std::vector<int>> lists;
    int next = 0;
    for (int s : sizes) {
        if (s <= 0) throw BadPartition("group sizes must be positive");
        std::vector<int> g(static_cast<std::size_t>(s));
        for (auto& i : g) i = next++;
        lists.push_back(std::move(g));
    }
    if (next != p)
        throw BadPartition("group sizes sum to " + std::to_string(next) + ", expected " + std::to_string(p));
    return make_partition_from_lists(p, std::move(lists));
}

inline GroupPartition make_partition(int p, std::initializer_list<int> sizes) {
    return make_partition(p, std::span<const int>(sizes.begin(), sizes.size()));
}

inline GroupPartition uniform_partition(int p, int group_size) {
    if (group_size <= 0 || p % group_size != 0)
        throw BadPartition("p must be a multiple of the group size");
    std::vector<int> sizes(static_cast<std::size_t>(p / group_size), group_size);
    return make_partition(p, sizes);
}

inline GroupPartition singleton_partition(int p) { return uniform_partition(p, 1); }

/// The quintuple (A, B, C, P, Q). A_m / B_m are stored per group id and are
/// empty for inactive groups; P and Q are kept sorted.
struct ActiveSets {
    std::vector<int> P;
    std::vector<int> Q;
    std::vector<std::vector<int>> A;
    std::vector<std::vector<int>> B;

    static ActiveSets all_inactive(const GroupPartition& part) {
        ActiveSets s;
        s.A.resize(static_cast<std::size_t>(part.num_groups()));
        s.B.resize(static_cast<std::size_t>(part.num_groups()));
        for (int m = 0; m < part.num_groups(); ++m) s.Q.push_back(m);
        return s;
    }

    bool is_active(int m) const { return std::binary_search(P.begin(), P.end(), m); }
    const std::vector<int>& A_of(int m) const { return A[static_cast<std::size_t>(m)]; }
    const std::vector<int>& B_of(int m) const { return B[static_cast<std::size_t>(m)]; }

    std::vector<int> A_union() const {
        std::vector<int> out;
        for (int m : P) out.insert(out.end(), A_of(m).begin(), A_of(m).end());
        return out;
    }
    std::vector<int> B_union() const {
        std::vector<int> out;
        for (int m : P) out.insert(out.end(), B_of(m).begin(), B_of(m).end());
        return out;
    }
    std::vector<int> C_union(const GroupPartition& part) const {
        std::vector<int> out;
        for (int m : Q) out.insert(out.end(), part.group(m).begin(), part.group(m).end());
        return out;
    }
    std::size_t num_B() const {
        std::size_t n = 0;
        for (int m : P) n += B_of(m).size();
        return n;
    }
    /// Order of the compact system, |P| + |B|.
    std::size_t system_order() const { return P.size() + num_B(); }

    /// Returns a description of the first violated invariant, or nullopt.
    std::optional<std::string> invariant_violation(const GroupPartition& part) const {
        const auto M = static_cast<std::size_t>(part.num_groups());
        if (A.size() != M || B.size() != M) return "per-group storage size mismatch";
        if (!std::is_sorted(P.begin(), P.end()) || !std::is_sorted(Q.begin(), Q.end()))
            return "P/Q not sorted";
        std::vector<int> seen(M, 0);
        for (int m : P) ++seen[static_cast<std::size_t>(m)];
        for (int m : Q) ++seen[static_cast<std::size_t>(m)];
        for (std::size_t m = 0; m < M; ++m)
            if (seen[m] != 1) return "group " + std::to_string(m + 1) + " not in exactly one of P, Q";
        for (int m : P) {
            const auto& am = A_of(m);
            const auto& bm = B_of(m);
            if (am.empty()) return "A_" + std::to_string(m + 1) + " is empty";
            std::vector<int> merged(am);
            merged.insert(merged.end(), bm.begin(), bm.end());
            std::sort(merged.begin(), merged.end());
            if (merged != part.group(m)) return "A_m, B_m do not partition G_m for m=" + std::to_string(m + 1);
        }
        for (int m : Q)
            if (!A_of(m).empty() || !B_of(m).empty())
                return "inactive group " + std::to_string(m + 1) + " has A/B entries";
        return std::nullopt;
    }

    friend bool operator==(const ActiveSets&, const ActiveSets&) = default;
};

/// m in P iff ||w_Gm||_inf > tol. A_m holds the indices within the tie
/// tolerance max(tol, 1e-9 * ||w_Gm||_inf) of the group maximum.
inline ActiveSets compute_sets(const Vector& w, const GroupPartition& part, double tol = 0.0) {
    if (w.size() != part.p()) throw std::invalid_argument("compute_sets: |w| != p");
    ActiveSets s = ActiveSets::all_inactive(part);
    s.Q.clear();
    for (int m = 0; m < part.num_groups(); ++m) {
        const auto& g = part.group(m);
        double amax = 0.0;
        for (int i : g) amax = std::max(amax, std::abs(w[i]));
        if (!(amax > tol)) {
            s.Q.push_back(m);
            continue;
        }
        s.P.push_back(m);
        const double tie = std::max(tol, 1e-9 * amax);
        for (int i : g) {
            if (std::abs(w[i]) >= amax - tie)
                s.A[static_cast<std::size_t>(m)].push_back(i);
            else
                s.B[static_cast<std::size_t>(m)].push_back(i);
        }
    }
    return s;
}

/// Block-diagonal |A| x |P| sign matrix: row k corresponds to coefficient
/// rows[k] of group P[cols[k]], with entry signs[k].
struct SignMatrix {
    std::vector<int> rows;
    std::vector<int> cols;
    std::vector<double> signs;
    int num_cols = 0;

    Matrix dense() const {
        Matrix S = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), num_cols);
        for (std::size_t k = 0; k < rows.size(); ++k) S(static_cast<Eigen::Index>(k), cols[k]) = signs[k];
        return S;
    }
};

/// s_{A_m} = sgn(w_{A_m}); where w_i == 0 the optional hint (a p-vector of
/// +-1) supplies the sign.
inline SignMatrix build_sign_matrix(const Vector& w, const ActiveSets& sets,
                                    const Vector* sign_hint = nullptr) {
    SignMatrix S;
    S.num_cols = static_cast<int>(sets.P.size());
    for (std::size_t c = 0; c < sets.P.size(); ++c) {
        for (int i : sets.A_of(sets.P[c])) {
            double s = 0.0;
            if (w[i] > 0.0)
                s = 1.0;
            else if (w[i] < 0.0)
                s = -1.0;
            else if (sign_hint != nullptr && (*sign_hint)[i] != 0.0)
                s = (*sign_hint)[i] > 0.0 ? 1.0 : -1.0;
            else
                throw ZeroSignEntry("coefficient " + std::to_string(i + 1) + " in A has no sign");
            S.rows.push_back(i);
            S.cols.push_back(static_cast<int>(c));
            S.signs.push_back(s);
        }
    }
    return S;
}

/// Set transition for the critical-point conditions:
///   1: index i moves A_m -> B_m (requires |A_m| >= 2)
///   2: index i moves B_m -> A_m
///   3: group m leaves P; all of G_m joins C
///   4: group m joins P with A_m = G_m, B_m empty (callers refine A_m)
inline ActiveSets apply_action(ActiveSets sets, const GroupPartition& part, int condition, int target) {
    auto fail = [&](const std::string& why) {
        throw InvalidTransition("action " + std::to_string(condition) + " on target "
                                + std::to_string(target + 1) + ": " + why);
    };
    auto erase = [](std::vector<int>& v, int x) { v.erase(std::find(v.begin(), v.end(), x)); };
    auto insert_sorted = [](std::vector<int>& v, int x) { v.insert(std::upper_bound(v.begin(), v.end(), x), x); };
    switch (condition) {
    case 1:
    case 2: {
        if (target < 0 || target >= part.p()) fail("index out of range");
        const int m = part.group_of(target);
        if (!sets.is_active(m)) fail("group is inactive");
        auto& am = sets.A[static_cast<std::size_t>(m)];
        auto& bm = sets.B[static_cast<std::size_t>(m)];
        auto& from = condition == 1 ? am : bm;
        auto& to = condition == 1 ? bm : am;
        if (std::find(from.begin(), from.end(), target) == from.end())
            fail(condition == 1 ? "index not in A" : "index not in B");
        if (condition == 1 && am.size() < 2) fail("|A_m| = 1; the group must leave via condition 3");
        erase(from, target);
        insert_sorted(to, target);
        break;
    }
    case 3: {
        if (!sets.is_active(target)) fail("group not in P");
        erase(sets.P, target);
        insert_sorted(sets.Q, target);
        sets.A[static_cast<std::size_t>(target)].clear();
        sets.B[static_cast<std::size_t>(target)].clear();
        break;
    }
    case 4: {
        if (target < 0 || target >= part.num_groups() || sets.is_active(target)) fail("group not in Q");
        erase(sets.Q, target);
        insert_sorted(sets.P, target);
        sets.A[static_cast<std::size_t>(target)] = part.group(target);
        sets.B[static_cast<std::size_t>(target)].clear();
        break;
    }
    default:
        fail("unknown condition");
    }
    return sets;
}

} // namespace rgl
