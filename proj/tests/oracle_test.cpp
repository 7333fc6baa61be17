#include <gtest/gtest.h>

#include <rgl/errors.hpp>
#include <rgl/lambda_path.hpp>
#include <rgl/oracle.hpp>

#include "path_support.hpp"

using namespace rgl;
using namespace testing_support;

namespace {

OracleConfig enumeration() {
    OracleConfig cfg;
    cfg.method = OracleMethod::Enumeration;
    return cfg;
}

} // namespace

TEST(OracleSolve, ZeroTargetGivesZero) {
    const auto part = make_partition(4, {2, 2});
    QuadraticData d{SymMatrix::Identity(4, 4), Vector::Zero(4), 0.5};
    EXPECT_EQ(oracle_solve(d, part), Vector::Zero(4));
    EXPECT_EQ(oracle_solve(d, part, enumeration()), Vector::Zero(4));
}

TEST(OracleSolve, ScalarSoftThreshold) {
    const auto part = make_partition(1, {1});
    QuadraticData d{SymMatrix::Ones(1, 1), Vector::Constant(1, 2.0), 0.5};
    EXPECT_NEAR(oracle_solve(d, part)[0], 1.5, 1e-12);
    EXPECT_NEAR(oracle_solve(d, part, enumeration())[0], 1.5, 1e-12);
    EXPECT_NEAR(lasso_oracle(d.R, d.r, d.lambda)[0], 1.5, 1e-12);
}

TEST(OracleSolve, MethodsAgreeAndMatchPaths) {
    std::mt19937_64 rng(81);
    for (int trial = 0; trial < 150; ++trial) {
        std::uniform_int_distribution<int> p_dist(2, 12);
        const int p = p_dist(rng);
        const int groups = std::min(p, 1 + trial % 4);
        std::vector<int> sizes(static_cast<std::size_t>(groups), p / groups);
        sizes.back() += p % groups;
        const auto part = make_partition(p, sizes);
        const Stream st = random_stream(p, p + 3, rng);
        auto d = batch_data(st, static_cast<std::size_t>(p + 3), 0.9, 1.0, 1e-2);
        d.lambda = (0.05 + 0.9 * std::uniform_real_distribution<double>()(rng)) * lambda_max(d.r, part);
        const Vector a = oracle_solve(d, part);
        const Vector b = oracle_solve(d, part, enumeration());
        ASSERT_LE(max_abs_diff(a, b), 1e-7) << "trial " << trial;
        EXPECT_LE(max_abs_diff(icap_full_path(d, part, d.lambda).w, a), 1e-6);
        EXPECT_TRUE(check_optimality(a, d, part, 1e-9).pass);
    }
}

TEST(OracleSolve, MutualObjectiveOptimality) {
    std::mt19937_64 rng(82);
    for (int trial = 0; trial < 100; ++trial) {
        const auto inst = random_path_instance(rng, 4, 20);
        const Vector w_oracle = oracle_solve(inst.data, inst.part);
        const Vector w_path = icap_full_path(inst.data, inst.part, inst.data.lambda).w;
        const double f_oracle = objective(w_oracle, inst.data, inst.part);
        const double f_path = objective(w_path, inst.data, inst.part);
        EXPECT_LE(f_oracle, f_path + 1e-9);
        EXPECT_LE(f_path, f_oracle + 1e-9);
    }
}

TEST(OracleSolve, EnumerationLimits) {
    const auto part = uniform_partition(13, 13);
    QuadraticData d{SymMatrix::Identity(13, 13), Vector::Ones(13), 1.0};
    EXPECT_THROW(oracle_solve(d, part, enumeration()), std::invalid_argument);
    const auto many = singleton_partition(5);
    QuadraticData d5{SymMatrix::Identity(5, 5), Vector::Ones(5), 0.5};
    EXPECT_THROW(oracle_solve(d5, many, enumeration()), std::invalid_argument);
}

TEST(OracleSolve, IterationCapRaisesNoConvergence) {
    std::mt19937_64 rng(83);
    const auto inst = random_path_instance(rng, 10, 10);
    OracleConfig cfg;
    cfg.max_iters = 3;
    cfg.tol = 1e-14;
    EXPECT_THROW(oracle_solve(inst.data, inst.part, cfg), NoConvergence);
}

TEST(ProjectL1Ball, Properties) {
    std::mt19937_64 rng(84);
    std::uniform_real_distribution<double> ud(0.0, 3.0);
    for (int trial = 0; trial < 500; ++trial) {
        const int n = 1 + trial % 9;
        const Vector u = randn(n, rng);
        const double radius = ud(rng);
        const Vector q = oracle_detail::project_l1_ball(u, radius);
        EXPECT_LE(q.cwiseAbs().sum(), radius * (1.0 + 1e-12) + 1e-15);
        if (u.cwiseAbs().sum() <= radius) {
            EXPECT_EQ(q, u);
            continue;
        }
        EXPECT_NEAR(q.cwiseAbs().sum(), radius, 1e-12 * (1.0 + radius));
        // Optimality of the projection: <u - q, z - q> <= 0 for every vertex z
        // of the ball.
        for (int i = 0; i < n; ++i)
            for (double sgn : {-1.0, 1.0}) {
                Vector z = Vector::Zero(n);
                z[i] = sgn * radius;
                EXPECT_LE((u - q).dot(z - q), 1e-10);
            }
        for (int i = 0; i < n; ++i) EXPECT_GE(q[i] * u[i], 0.0);
    }
}

TEST(ProxLinf, MoreauIdentity) {
    std::mt19937_64 rng(85);
    for (int trial = 0; trial < 200; ++trial) {
        const Vector u = randn(1 + trial % 7, rng);
        const double tau = 0.1 + 0.01 * trial;
        const Vector x = oracle_detail::prox_linf(u, tau);
        // x minimizes 1/2||x - u||^2 + tau ||x||_inf: compare with random
        // perturbations.
        auto f = [&](const Vector& z) { return 0.5 * (z - u).squaredNorm() + tau * z.cwiseAbs().maxCoeff(); };
        for (int k = 0; k < 20; ++k) EXPECT_LE(f(x), f(x + 1e-3 * randn(static_cast<int>(u.size()), rng)) + 1e-15);
    }
}

TEST(LassoOracle, MatchesSingletonGroupOracle) {
    std::mt19937_64 rng(86);
    for (int trial = 0; trial < 50; ++trial) {
        const int p = 3 + trial % 10;
        const auto part = singleton_partition(p);
        const Stream st = random_stream(p, p + 4, rng);
        auto d = batch_data(st, static_cast<std::size_t>(p + 4), 0.9, 1.0, 1e-2);
        d.lambda = 0.2 * lambda_max(d.r, part);
        EXPECT_LE(max_abs_diff(lasso_oracle(d.R, d.r, d.lambda), oracle_solve(d, part)), 1e-7);
    }
}
