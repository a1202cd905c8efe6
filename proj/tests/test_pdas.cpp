#include "vmpt/pdas.hpp"
#include "vmpt/qp.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace vmpt;
using oracles::DenseQP;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

QPProblem sparse_problem(const DenseQP& dense) {
    QPProblem qp;
    qp.a_sparse = oracles::to_sparse(dense.a);
    qp.b = dense.b;
    qp.region = dense.region;
    return qp;
}

double a_norm(const Matrix& a, const Vector& d) { return std::sqrt(d.dot(a * d)); }

Vector integration_weights_1d(Index n) {
    Vector w = Vector::Constant(n, 1.0 / static_cast<double>(n - 1));
    w[0] *= 0.5;
    w[n - 1] *= 0.5;
    return w;
}

DenseQP random_instance(std::mt19937_64& rng, Index n, bool two_sided, bool with_mass) {
    DenseQP qp;
    qp.a = oracles::random_spd(rng, n);
    qp.b = 3.0 * oracles::random_vector(rng, n);
    qp.region.lower = oracles::random_vector(rng, n, -2.0, -0.5);
    qp.region.upper = two_sided ? (oracles::random_vector(rng, n, 0.5, 2.0))
                                : Vector::Constant(n, kInf);
    if (with_mass) {
        qp.region.mass_weights = integration_weights_1d(n);
        Vector interior(n);
        for (Index i = 0; i < n; ++i) {
            const double hi = two_sided ? qp.region.upper[i] : qp.region.lower[i] + 2.0;
            interior[i] = std::uniform_real_distribution<double>(qp.region.lower[i], hi)(rng);
        }
        qp.region.mass_target = qp.region.mass_weights.dot(interior);
    }
    return qp;
}

Vector feasible_start(const DenseQP& qp, std::mt19937_64& rng) {
    const Index n = qp.b.size();
    Vector x(n);
    for (Index i = 0; i < n; ++i) {
        const double hi = std::isfinite(qp.region.upper[i]) ? qp.region.upper[i]
                                                            : qp.region.lower[i] + 2.0;
        x[i] = std::uniform_real_distribution<double>(qp.region.lower[i], hi)(rng);
    }
    return project_to_region(x, qp.region);
}

} // namespace

TEST(Pdas, ZeroGradientIsFixedPoint) {
    // b = -A phi corresponds to a vanishing gradient: the start is returned.
    const Index n = 7;
    DenseQP dense;
    dense.a = Matrix::Identity(n, n) * 0.8;
    dense.region.lower = Vector::Constant(n, -1.0);
    dense.region.upper = Vector::Constant(n, 1.0);
    dense.region.mass_weights = integration_weights_1d(n);
    Vector phi = Vector::LinSpaced(n, -0.3, 0.3);
    phi = project_to_region(phi, dense.region);
    dense.region.mass_target = dense.region.mass_weights.dot(phi);
    dense.b = -(dense.a * phi);

    const auto [y, state] = solve_projection(sparse_problem(dense), phi);
    EXPECT_LE((y - phi).lpNorm<Eigen::Infinity>(), 1e-12);
    EXPECT_LE(state.kkt_residual, 1e-10 * (1.0 + dense.b.lpNorm<Eigen::Infinity>()));
}

TEST(Pdas, SixNodeInstanceMatchesEnumerationOracle) {
    std::mt19937_64 rng(42);
    const Index n = 6;
    DenseQP dense;
    dense.a = oracles::path_stiffness(n);
    for (Index i = 0; i < n; ++i) dense.a(i, i) += 0.5;
    dense.b = oracles::random_vector(rng, n, -3.0, 3.0);
    dense.region.lower = Vector::Constant(n, -1.0);
    dense.region.upper = Vector::Constant(n, kInf);
    dense.region.mass_weights = integration_weights_1d(n);
    dense.region.mass_target = 0.0;

    const Vector expected = oracles::enumerate_qp_solution(dense);
    const Vector start = project_to_region(Vector::Zero(n), dense.region);
    const auto [y, state] = solve_projection(sparse_problem(dense), start);
    EXPECT_LE(a_norm(dense.a, y - expected), 1e-8);
}

TEST(Pdas, UnconstrainedReducesToLinearSolve) {
    std::mt19937_64 rng(7);
    const Index n = 9;
    DenseQP dense;
    dense.a = oracles::random_spd(rng, n);
    dense.b = oracles::random_vector(rng, n);
    dense.region.lower = Vector::Constant(n, -kInf);
    dense.region.upper = Vector::Constant(n, kInf);

    const Vector expected = dense.a.ldlt().solve(-dense.b);
    const auto [y, state] = solve_projection(sparse_problem(dense), Vector::Zero(n));
    EXPECT_LE((y - expected).lpNorm<Eigen::Infinity>(), 1e-10);
}

TEST(Pdas, RandomInstancesMatchOracleAndAreOptimal) {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 40; ++trial) {
        const Index n = 5 + static_cast<Index>(trial % 4);
        const bool two_sided = trial % 2 == 0;
        const bool with_mass = trial % 3 != 0;
        DenseQP dense = random_instance(rng, n, two_sided, with_mass);
        const Vector expected = oracles::enumerate_qp_solution(dense);
        const Vector start = feasible_start(dense, rng);
        const auto [y, state] = solve_projection(sparse_problem(dense), start);
        ASSERT_LE(a_norm(dense.a, y - expected), 1e-8)
            << "trial " << trial << " n=" << n << " two_sided=" << two_sided
            << " mass=" << with_mass;

        // objective optimality against random feasible points
        const double obj = dense.objective(y);
        for (int probe = 0; probe < 100; ++probe) {
            const Vector eta = feasible_start(dense, rng);
            ASSERT_GE(dense.objective(eta), obj - 1e-9 * (1.0 + std::abs(obj)));
        }
    }
}

TEST(Pdas, JointScalingLeavesArgminUnchanged) {
    std::mt19937_64 rng(5);
    DenseQP dense = random_instance(rng, 8, true, true);
    const Vector start = feasible_start(dense, rng);
    const auto [y1, s1] = solve_projection(sparse_problem(dense), start);

    DenseQP scaled = dense;
    const double s = 37.5;
    scaled.a *= s;
    scaled.b *= s;
    const auto [y2, s2] = solve_projection(sparse_problem(scaled), start);
    EXPECT_LE((y1 - y2).lpNorm<Eigen::Infinity>(), 1e-9);
}

TEST(Pdas, WarmStartReproducesColdSolution) {
    std::mt19937_64 rng(11);
    DenseQP dense = random_instance(rng, 8, true, true);
    const Vector start = feasible_start(dense, rng);
    const QPProblem qp = sparse_problem(dense);
    const auto [y_cold, st_cold] = solve_projection(qp, start);

    DenseQP nearby = dense;
    nearby.b += 0.01 * oracles::random_vector(rng, 8);
    const auto [y_mid, st_mid] = solve_projection(sparse_problem(nearby), start);
    const auto [y_warm, st_warm] = solve_projection(qp, start, PdasOptions{}, &st_mid);
    EXPECT_LE((y_warm - y_cold).lpNorm<Eigen::Infinity>(), 1e-9);
}

TEST(Pdas, ViResidualNonnegativeAtSolutionAndDetectsPerturbation) {
    std::mt19937_64 rng(3);
    DenseQP dense = random_instance(rng, 6, false, true);
    const QPProblem qp = sparse_problem(dense);
    const Vector start = feasible_start(dense, rng);
    const auto [y, state] = solve_projection(qp, start);

    const double scale = 1.0 + qp.b.norm();
    EXPECT_GE(vi_residual(qp, y, 50), -1e-9 * scale);

    // nudge one inactive node and re-project: clearly negative residual
    Index inactive = -1;
    for (Index i = 0; i < y.size(); ++i)
        if (state.active[static_cast<std::size_t>(i)] == 0) inactive = i;
    ASSERT_GE(inactive, 0);
    Vector perturbed = y;
    perturbed[inactive] += 1e-3;
    perturbed = project_to_region(perturbed, qp.region);
    EXPECT_LT(vi_residual(qp, perturbed, 50), -1e-6);
}

TEST(Pdas, ViResidualNegativeAtNonstationaryStart) {
    std::mt19937_64 rng(9);
    DenseQP dense = random_instance(rng, 6, true, true);
    const QPProblem qp = sparse_problem(dense);
    const Vector phi = feasible_start(dense, rng);
    const auto [y, state] = solve_projection(qp, phi);
    if ((y - phi).lpNorm<Eigen::Infinity>() > 1e-8) // phi is not the solution
        EXPECT_LT(vi_residual(qp, phi, 50), 0.0);
}

TEST(Pdas, IndefiniteOperatorIsReported) {
    const Index n = 5;
    DenseQP dense;
    dense.a = -Matrix::Identity(n, n);
    dense.b = Vector::Ones(n);
    dense.region.lower = Vector::Constant(n, -1.0);
    dense.region.upper = Vector::Constant(n, 1.0);
    EXPECT_THROW(solve_projection(sparse_problem(dense), Vector::Zero(n)), IndefiniteOperator);
}

TEST(Pdas, IterationCapThrows) {
    std::mt19937_64 rng(13);
    DenseQP dense = random_instance(rng, 8, true, true);
    PdasOptions opts;
    opts.max_iterations = 1;
    dense.b *= 50.0; // force several active-set changes
    EXPECT_THROW(solve_projection(sparse_problem(dense), feasible_start(dense, rng), opts),
                 MaxPdasIterations);
}

TEST(ProjectToRegion, MassCorrectionStaysInBoundsAndHitsTarget) {
    std::mt19937_64 rng(17);
    const Index n = 20;
    FeasibleRegion r;
    r.lower = Vector::Constant(n, -0.5);
    r.upper = Vector::Constant(n, 0.5);
    r.mass_weights = integration_weights_1d(n);
    r.mass_target = 0.0;
    for (int trial = 0; trial < 25; ++trial) {
        const Vector x = oracles::random_vector(rng, n, -0.8, 0.8);
        const Vector y = project_to_region(x, r);
        EXPECT_LE(r.bound_violation(y), 0.0 + 1e-15);
        EXPECT_LE(r.mass_violation(y), 1e-12 * r.mass_scale());
    }
}

TEST(ProjectToRegion, UnreachableTargetThrows) {
    const Index n = 4;
    FeasibleRegion r;
    r.lower = Vector::Constant(n, -1.0);
    r.upper = Vector::Constant(n, 0.0); // fractions (1, 0): upper bound collapses to zero
    r.mass_weights = Vector::Constant(n, 0.25);
    r.mass_target = 0.5; // above w^T upper = 0
    EXPECT_THROW(project_to_region(Vector::Constant(n, -2.0), r), InfeasibleVolumeFraction);
}
