#include <gtest/gtest.h>

#include <rgl/errors.hpp>
#include <rgl/groups.hpp>

#include "test_support.hpp"

using namespace rgl;

namespace {

Vector vec(std::initializer_list<double> xs) {
    Vector v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index k = 0;
    for (double x : xs) v[k++] = x;
    return v;
}

} // namespace

TEST(MakePartition, TwoPairs) {
    const auto part = make_partition(4, {2, 2});
    ASSERT_EQ(part.num_groups(), 2);
    EXPECT_EQ(part.group(0), (std::vector<int>{0, 1}));
    EXPECT_EQ(part.group(1), (std::vector<int>{2, 3}));
    EXPECT_EQ(part.group_of(3), 1);
}

TEST(MakePartition, TwentyGroupsOfFive) {
    const auto part = uniform_partition(100, 5);
    ASSERT_EQ(part.num_groups(), 20);
    for (int m = 0; m < 20; ++m) EXPECT_EQ(part.group(m).front(), 5 * m); // 1-based starts 1, 6, 11, ...
}

TEST(MakePartition, SizesNotSummingToPRejected) {
    EXPECT_THROW(make_partition(3, {2, 2}), BadPartition);
    EXPECT_THROW(make_partition(5, {2, 2}), BadPartition);
    EXPECT_THROW(make_partition(2, {2, 0}), BadPartition);
}

TEST(MakePartition, ExplicitListsValidated) {
    EXPECT_NO_THROW(make_partition_from_lists(4, {{3, 0}, {1, 2}}));
    EXPECT_THROW(make_partition_from_lists(4, {{0, 1}, {1, 2, 3}}), BadPartition); // overlap
    EXPECT_THROW(make_partition_from_lists(4, {{0, 1}, {2}}), BadPartition);       // gap
    EXPECT_THROW(make_partition_from_lists(4, {{0, 1}, {}, {2, 3}}), BadPartition);
    EXPECT_THROW(make_partition_from_lists(4, {{0, 1}, {2, 4}}), BadPartition);
}

TEST(ComputeSets, AllZero) {
    const auto part = make_partition(4, {2, 2});
    const auto s = compute_sets(Vector::Zero(4), part);
    EXPECT_TRUE(s.P.empty());
    EXPECT_EQ(s.C_union(part), (std::vector<int>{0, 1, 2, 3}));
}

TEST(ComputeSets, DirectFromDefinition) {
    const auto part = make_partition(4, {2, 2});
    const auto s = compute_sets(vec({3, 1, 0, 0}), part);
    EXPECT_EQ(s.P, (std::vector<int>{0}));
    EXPECT_EQ(s.Q, (std::vector<int>{1}));
    EXPECT_EQ(s.A_of(0), (std::vector<int>{0}));
    EXPECT_EQ(s.B_of(0), (std::vector<int>{1}));
    EXPECT_EQ(s.C_union(part), (std::vector<int>{2, 3}));
}

TEST(ComputeSets, TiedMaxima) {
    const auto part = make_partition(4, {2, 2});
    const auto s = compute_sets(vec({2, -2, 0, 0}), part);
    EXPECT_EQ(s.A_of(0), (std::vector<int>{0, 1}));
    EXPECT_TRUE(s.B_of(0).empty());
}

TEST(ComputeSets, MembershipPropertyAndScaleInvariance) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const int p = 3 + trial % 10;
        const auto part = testing_support::random_partition(p, rng);
        Vector w = testing_support::randn(p, rng);
        std::uniform_int_distribution<int> coin(0, 2);
        for (int i = 0; i < p; ++i)
            if (coin(rng) == 0) w[i] = 0.0;
        // Force some exact ties.
        for (const auto& g : part.groups())
            if (g.size() >= 2 && coin(rng) == 0) w[g[1]] = -w[g[0]];
        const auto s = compute_sets(w, part, 0.0);
        ASSERT_FALSE(s.invariant_violation(part).has_value()) << *s.invariant_violation(part);
        for (int m = 0; m < part.num_groups(); ++m) {
            double amax = 0.0;
            for (int i : part.group(m)) amax = std::max(amax, std::abs(w[i]));
            if (s.is_active(m)) {
                for (int i : s.A_of(m)) EXPECT_NEAR(std::abs(w[i]), amax, 1e-9 * amax);
                for (int i : s.B_of(m)) EXPECT_LT(std::abs(w[i]), amax);
            } else {
                for (int i : part.group(m)) EXPECT_EQ(w[i], 0.0);
            }
        }
        const double c = 0.37 + trial;
        EXPECT_EQ(compute_sets(c * w, part, 0.0), s);
        EXPECT_EQ(compute_sets(c * w, part, c * 1e-3), compute_sets(w, part, 1e-3));
    }
}

TEST(SignMatrixTest, TwoGroups) {
    const auto part = make_partition(3, {2, 1});
    const Vector w = vec({2, -2, 5});
    const auto s = compute_sets(w, part);
    const Matrix S = build_sign_matrix(w, s).dense();
    Matrix expected(3, 2);
    expected << 1, 0, -1, 0, 0, 1;
    EXPECT_EQ(S, expected);
}

TEST(SignMatrixTest, NegativeSingleton) {
    const auto part = make_partition(1, {1});
    const Vector w = vec({-4});
    const Matrix S = build_sign_matrix(w, compute_sets(w, part)).dense();
    ASSERT_EQ(S.rows(), 1);
    EXPECT_EQ(S(0, 0), -1.0);
}

TEST(SignMatrixTest, ReconstructsActiveEntries) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        const int p = 2 + trial % 12;
        const auto part = testing_support::random_partition(p, rng);
        const Vector w = testing_support::randn(p, rng);
        const auto s = compute_sets(w, part);
        const auto S = build_sign_matrix(w, s);
        Vector a(static_cast<Eigen::Index>(s.P.size()));
        for (std::size_t c = 0; c < s.P.size(); ++c) {
            double amax = 0.0;
            for (int i : part.group(s.P[c])) amax = std::max(amax, std::abs(w[i]));
            a[static_cast<Eigen::Index>(c)] = amax;
        }
        const Vector wa = S.dense() * a;
        const auto A = s.A_union();
        for (std::size_t k = 0; k < A.size(); ++k) EXPECT_EQ(wa[static_cast<Eigen::Index>(k)], w[A[k]]);
        // One nonzero block per column, entries in {-1, +1}.
        const Matrix D = S.dense();
        for (Eigen::Index c = 0; c < D.cols(); ++c) {
            for (Eigen::Index k = 0; k < D.rows(); ++k) {
                const double e = D(k, c);
                EXPECT_TRUE(e == 0.0 || e == 1.0 || e == -1.0);
                if (e != 0.0) {
                    EXPECT_EQ(part.group_of(A[static_cast<std::size_t>(k)]), s.P[static_cast<std::size_t>(c)]);
                }
            }
        }
    }
}

TEST(SignMatrixTest, ZeroEntryNeedsHint) {
    const auto part = make_partition(2, {2});
    ActiveSets s = ActiveSets::all_inactive(part);
    s = apply_action(s, part, 4, 0);
    const Vector w = Vector::Zero(2);
    EXPECT_THROW(build_sign_matrix(w, s), ZeroSignEntry);
    const Vector hint = vec({-1, 1});
    const Matrix S = build_sign_matrix(w, s, &hint).dense();
    EXPECT_EQ(S(0, 0), -1.0);
    EXPECT_EQ(S(1, 0), 1.0);
}

TEST(ApplyAction, Action1MovesAToB) {
    const auto part = make_partition(4, {2, 2});
    const auto s = compute_sets(vec({2, -2, 0, 0}), part);
    const auto t = apply_action(s, part, 1, 1);
    EXPECT_EQ(t.A_of(0), (std::vector<int>{0}));
    EXPECT_EQ(t.B_of(0), (std::vector<int>{1}));
    EXPECT_EQ(t.P, s.P);
}

TEST(ApplyAction, Action1OnLoneMaximumRejected) {
    const auto part = make_partition(4, {2, 2});
    const auto s = compute_sets(vec({3, 1, 0, 0}), part);
    EXPECT_THROW(apply_action(s, part, 1, 0), InvalidTransition);
    EXPECT_THROW(apply_action(s, part, 1, 1), InvalidTransition); // not in A
    EXPECT_THROW(apply_action(s, part, 2, 0), InvalidTransition); // not in B
    EXPECT_THROW(apply_action(s, part, 3, 1), InvalidTransition); // not in P
    EXPECT_THROW(apply_action(s, part, 4, 0), InvalidTransition); // not in Q
    EXPECT_THROW(apply_action(s, part, 5, 0), InvalidTransition);
}

TEST(ApplyAction, Action2MovesBToA) {
    const auto part = make_partition(4, {2, 2});
    const auto s = compute_sets(vec({3, 1, 0, 0}), part);
    const auto t = apply_action(s, part, 2, 1);
    EXPECT_EQ(t.A_of(0), (std::vector<int>{0, 1}));
    EXPECT_TRUE(t.B_of(0).empty());
}

TEST(ApplyAction, Action3DeactivatesGroup) {
    const auto part = make_partition(4, {2, 2});
    const auto s = compute_sets(vec({3, 1, 0, 0}), part);
    const auto t = apply_action(s, part, 3, 0);
    EXPECT_TRUE(t.P.empty());
    EXPECT_EQ(t.Q, (std::vector<int>{0, 1}));
    EXPECT_TRUE(t.A_union().empty());
    EXPECT_EQ(t.C_union(part).size(), 4U);
}

TEST(ApplyAction, Action4ThenAction3RoundTrip) {
    const auto part = make_partition(5, {2, 3});
    const auto s = compute_sets(vec({3, 1, 0, 0, 0}), part);
    const auto t = apply_action(s, part, 4, 1);
    EXPECT_EQ(t.P, (std::vector<int>{0, 1}));
    EXPECT_EQ(t.A_of(1), part.group(1));
    EXPECT_EQ(apply_action(t, part, 3, 1), s);
}

TEST(ApplyAction, RandomLegalSequencesPreserveInvariants) {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        const int p = 4 + trial % 9;
        const auto part = testing_support::random_partition(p, rng);
        ActiveSets s = ActiveSets::all_inactive(part);
        for (int step = 0; step < 200; ++step) {
            std::vector<std::pair<int, int>> legal;
            for (int m : s.P) {
                if (s.A_of(m).size() >= 2)
                    for (int i : s.A_of(m)) legal.emplace_back(1, i);
                for (int i : s.B_of(m)) legal.emplace_back(2, i);
                legal.emplace_back(3, m);
            }
            for (int m : s.Q) legal.emplace_back(4, m);
            ASSERT_FALSE(legal.empty());
            std::uniform_int_distribution<std::size_t> pick(0, legal.size() - 1);
            const auto [cond, target] = legal[pick(rng)];
            s = apply_action(s, part, cond, target);
            const auto bad = s.invariant_violation(part);
            ASSERT_FALSE(bad.has_value()) << *bad << " after action " << cond;
        }
    }
}
