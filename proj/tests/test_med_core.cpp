#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <functional>
#include <limits>

#include "test_util.hpp"

using namespace uqchi;

namespace {

DualProblem scalar_problem(double a, double c) { return DualProblem(Matrix::Constant(1, 1, a), c); }

std::string error_code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return "";
}

}  // namespace

TEST(PotentialVector, Examples) {
    Matrix a(2, 2);
    a << 1, 0, 0, 2;
    EXPECT_TRUE(potential_vector(Vector::Zero(2), a).isZero(0.0));
    EXPECT_TRUE(potential_vector(Vector{{1.0, 1.0}}, a).isApprox(Vector{{1.0, 2.0}}));
    Matrix b(2, 2);
    b << 2, -1, 1, 1;
    EXPECT_TRUE(potential_vector(Vector{{0.5, 2.0}}, b).isApprox(Vector{{3.0, 1.5}}));
}

TEST(LogPartition, Examples) {
    const DualProblem p(Matrix::Random(3, 2), 2.0);
    EXPECT_DOUBLE_EQ(log_partition(Vector::Zero(3), p), 0.0);
    // 0.5 * 0.25 - 0.5 - log(0.75), evaluated independently
    EXPECT_NEAR(log_partition(Vector::Constant(1, 0.5), scalar_problem(1.0, 2.0)), -0.0873179275482191, 1e-15);
}

TEST(DualObjective, Examples) {
    const DualProblem p(Matrix::Random(3, 2), 2.0);
    EXPECT_DOUBLE_EQ(dual_objective(Vector::Zero(3), p), 0.0);
    EXPECT_NEAR(dual_objective(Vector::Constant(1, 0.5), scalar_problem(1.0, 2.0)), 0.0873179275482191, 1e-15);
}

TEST(DualObjective, DivergesAtBoxEdge) {
    const DualProblem p = scalar_problem(0.3, 2.0);
    double prev = dual_objective(Vector::Constant(1, 1.9), p);
    for (double gap : {1e-2, 1e-4, 1e-6, 1e-9, 1e-12}) {
        const double j = dual_objective(Vector::Constant(1, 2.0 - gap), p);
        EXPECT_LT(j, prev);
        prev = j;
    }
    EXPECT_LT(prev, -20.0);
    EXPECT_EQ(error_code_of([&] { dual_objective(Vector::Constant(1, 2.0), p); }), "DomainError");
    EXPECT_EQ(error_code_of([&] { dual_objective(Vector::Constant(1, -0.1), p); }), "DomainError");
}

TEST(DualGradient, Examples) {
    const DualProblem p(Matrix::Random(4, 3), 3.0);
    const Vector g0 = dual_gradient(Vector::Zero(4), p);
    for (Eigen::Index n = 0; n < 4; ++n) EXPECT_NEAR(g0[n], 1.0 - 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(dual_gradient(Vector::Constant(1, 0.5), scalar_problem(1.0, 2.0))[0], -0.16666666666666663, 1e-15);
}

TEST(DualGradient, FiniteDifferences) {
    std::mt19937_64 rng(2024);
    const double h = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
        const DualProblem p(test::random_matrix(rng, 5, 3), trial % 2 ? 1.5 : 5.0);
        const Vector lambda = test::random_lambda(rng, 5, p.c(), 0.05);
        const Vector g = dual_gradient(lambda, p);
        for (Eigen::Index n = 0; n < 5; ++n) {
            Vector lp = lambda, lm = lambda;
            lp[n] += h;
            lm[n] -= h;
            const double fd = (dual_objective(lp, p) - dual_objective(lm, p)) / (2 * h);
            EXPECT_LE(std::abs(fd - g[n]) / std::max(1.0, std::abs(g[n])), 1e-6);
        }
    }
}

TEST(DualObjective, EqualsNegativeLogPartition) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        const DualProblem p(test::random_matrix(rng, 6, 4), 1.5 + trial % 7);
        const Vector lambda = test::random_lambda(rng, 6, p.c());
        EXPECT_NEAR(dual_objective(lambda, p), -log_partition(lambda, p), 1e-12);
    }
}

TEST(DualObjective, ConcaveAlongChords) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const DualProblem p(test::random_matrix(rng, 4, 3), 1.5 + 3.0 * u(rng));
        const Vector l1 = test::random_lambda(rng, 4, p.c()), l2 = test::random_lambda(rng, 4, p.c());
        const double th = u(rng);
        const double lhs = dual_objective(th * l1 + (1 - th) * l2, p);
        EXPECT_GE(lhs, th * dual_objective(l1, p) + (1 - th) * dual_objective(l2, p) - 1e-9);
    }
}

TEST(SolveDual, ZeroAggregatesGiveBarrierStationaryPoint) {
    for (double c : {1.5, 3.0, 10.0}) {
        const DualProblem p(Matrix::Zero(4, 3), c);
        const DualSolution s = solve_dual(p);
        EXPECT_TRUE(s.converged);
        for (Eigen::Index n = 0; n < 4; ++n) EXPECT_NEAR(s.lambda[n], c - 1.0, 1e-8);
    }
}

TEST(SolveDual, ScalarClosedForm) {
    // 1 - 1/(2 - l) - l = 0  =>  l^2 - 3l + 1 = 0
    const DualSolution s = solve_dual(scalar_problem(1.0, 2.0));
    EXPECT_NEAR(s.lambda[0], 0.3819660112501051, 1e-8);
}

TEST(SolveDual, ObjectiveMonotoneAndKkt) {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 60; ++trial) {
        const Eigen::Index n = 1 + trial % 12, d = 1 + trial % 5;
        const double c = std::array{1.5, 3.0, 5.0, 20.0, 100.0}[static_cast<std::size_t>(trial % 5)];
        const DualProblem p(test::random_matrix(rng, n, d, trial % 3 == 0 ? 3.0 : 0.5), c);
        const DualSolution s = solve_dual(p);
        ASSERT_TRUE(s.converged);
        EXPECT_LE(s.grad_norm, 1e-8);
        for (std::size_t k = 1; k < s.objective_trace.size(); ++k)
            EXPECT_GE(s.objective_trace[k], s.objective_trace[k - 1]);
        EXPECT_NEAR(s.objective, dual_objective(s.lambda, p), 1e-12 * std::max(1.0, std::abs(s.objective)));
        EXPECT_TRUE(kkt_certificate(s.lambda, p, 1e-8));
        EXPECT_TRUE((s.lambda.array() >= 0.0).all());
        EXPECT_TRUE((s.lambda.array() <= p.upper_bound()).all());
    }
}

TEST(SolveDual, SmallCWarnsAndDegenerateThrows) {
    const DualSolution s = solve_dual(DualProblem(Matrix::Ones(2, 2), 0.8));
    EXPECT_FALSE(s.warnings.empty());
    EXPECT_TRUE(s.converged);
    EXPECT_EQ(error_code_of([] { solve_dual(DualProblem(Matrix::Zero(2, 2), 0.8)); }), "DegenerateProblem");
}

TEST(SolveDual, NonConvergenceCarriesDiagnostics) {
    std::mt19937_64 rng(4);
    const DualProblem p(test::random_matrix(rng, 8, 3), 5.0);
    SolverOptions opts;
    opts.max_iter = 1;
    try {
        solve_dual(p, opts);
        FAIL() << "expected NonConvergence";
    } catch (const NonConvergence& e) {
        EXPECT_EQ(e.code(), "NonConvergence");
        EXPECT_EQ(e.diagnostics().iterations, 1);
        EXPECT_FALSE(e.diagnostics().converged);
        EXPECT_GT(e.diagnostics().grad_norm, 1e-8);
    }
}

TEST(DualProblem, Validation) {
    EXPECT_EQ(error_code_of([] { DualProblem(Matrix::Ones(1, 1), 0.0); }), "BadMarginRate");
    EXPECT_EQ(error_code_of([] { DualProblem(Matrix(0, 2), 2.0); }), "EmptyProblem");
    EXPECT_EQ(error_code_of([] { DualProblem(Matrix::Constant(1, 1, std::nan("")), 2.0); }), "NonFiniteAggregate");
    const DualProblem p(Matrix::Ones(2, 2), 2.0);
    EXPECT_EQ(error_code_of([&] { dual_gradient(Vector::Zero(3), p); }), "DimensionMismatch");
}

TEST(Posterior, Examples) {
    const DualProblem p(Matrix::Random(3, 2), 2.0);
    DualSolution zero;
    zero.lambda = Vector::Zero(3);
    zero.converged = true;
    EXPECT_TRUE(posterior(zero, p).mean.isZero(0.0));

    DualSolution one;
    one.lambda = Vector::Constant(1, 0.4);
    one.converged = true;
    Matrix a(1, 2);
    a << 1, 0;
    EXPECT_TRUE(posterior(one, DualProblem(a, 2.0)).mean.isApprox(Vector{{0.4, 0.0}}));

    one.converged = false;
    EXPECT_EQ(error_code_of([&] { posterior(one, DualProblem(a, 2.0)); }), "UnconvergedSolution");
    EXPECT_NO_THROW(posterior(one, DualProblem(a, 2.0), true));
}

TEST(Posterior, MeanMatchesRecomputedSum) {
    std::mt19937_64 rng(8);
    const Matrix a = test::random_matrix(rng, 7, 4);
    const DualProblem p(a, 3.0);
    const DualSolution s = solve_dual(p);
    Vector v = Vector::Zero(4);
    for (Eigen::Index n = 0; n < 7; ++n) v += s.lambda[n] * a.row(n).transpose();
    EXPECT_LE((posterior(s, p).mean - v).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SolveDual, AggregatesFromPanel) {
    const LongitudinalPanel panel({test::series("a", {{1.0}}, Label::Positive)});
    const DualProblem p(aggregates(panel, make_label_prior(panel)), 2.0);
    EXPECT_NEAR(solve_dual(p).lambda[0], 0.3819660112501051, 1e-8);
}
