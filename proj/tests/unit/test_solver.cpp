#include "ofmpc/controller.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace ofmpc;

namespace {

Vec interior_soc(std::mt19937_64& rng, int n) {
    Vec u = oracle::random_vec(rng, n);
    u(0) = u.tail(n - 1).norm() + 0.1 + std::abs(u(0));
    return u;
}

QcqpProblem random_problem(std::mt19937_64& rng, int n, double budget_fraction) {
    QcqpProblem p;
    const Mat Gc = oracle::random_mat(rng, n, n);
    p.cost.hess = Gc * Gc.transpose() + 0.1 * Mat::Identity(n, n);
    p.cost.lin = oracle::random_vec(rng, n, 3.0);
    p.cost.constant = 2.0;
    const Mat Gk = oracle::random_mat(rng, n / 2 + 1, n);
    p.constraint.hess = Gk.transpose() * Gk;  // rank deficient
    p.constraint.lin = Gk.transpose() * oracle::random_vec(rng, n / 2 + 1);
    p.constraint.constant = 1.0;
    const double unc = p.constraint.value(p.cost.hess.ldlt().solve(-p.cost.lin));
    const double lo = min_form_value(p.constraint);
    p.budget = lo + budget_fraction * (unc - lo);
    return p;
}

}  // namespace

TEST_CASE("Nesterov-Todd scaling maps z to W^-1 s and s to the scaled point") {
    std::mt19937_64 rng(41);
    for (int t = 0; t < 20; ++t) {
        const int n = 2 + t % 5;
        const Vec s = interior_soc(rng, n);
        const Vec z = interior_soc(rng, n);
        const detail::SocScaling W = detail::nt_scaling(s, z);
        const Vec lam = W.apply(z);
        CHECK((lam - W.apply_inverse(s)).norm() < 1e-10 * (1.0 + lam.norm()));
        const Vec v = oracle::random_vec(rng, n);
        CHECK((W.apply(W.apply_inverse(v)) - v).norm() < 1e-10 * (1.0 + v.norm()));
        // lambda'lambda = s'z and lambda is interior.
        CHECK(lam.squaredNorm() == doctest::Approx(s.dot(z)).epsilon(1e-10));
        CHECK(lam(0) > lam.tail(n - 1).norm());
    }
}

TEST_CASE("cone step length is the boundary crossing") {
    Vec u(3), du(3);
    u << 2, 0, 0;
    du << -1, 0, 0;
    CHECK(detail::soc_max_step(u, du) == doctest::Approx(2.0));
    du << 0, 1, 0;
    CHECK(detail::soc_max_step(u, du) == doctest::Approx(2.0));
    du << 1, 0, 0;
    CHECK(std::isinf(detail::soc_max_step(u, du)));
    std::mt19937_64 rng(42);
    for (int t = 0; t < 50; ++t) {
        const Vec a = interior_soc(rng, 4);
        const Vec d = oracle::random_vec(rng, 4, 3.0);
        const double alpha = detail::soc_max_step(a, d);
        if (std::isfinite(alpha)) {
            const Vec b = a + alpha * d;
            CHECK(std::abs(b(0) - b.tail(3).norm()) < 1e-8 * (1.0 + b.norm()));
            const Vec inside = a + 0.99 * alpha * d;
            CHECK(inside(0) >= inside.tail(3).norm() - 1e-12);
        }
    }
}

TEST_CASE("QCQP solutions agree with dual bisection on random instances") {
    std::mt19937_64 rng(43);
    for (int t = 0; t < 25; ++t) {
        const int n = 3 + t % 8;
        const QcqpProblem p = random_problem(rng, n, 0.05 + 0.9 * (t % 5) / 4.0);
        const QcqpSolution sol = solve_qcqp(p);
        REQUIRE(sol.status == SolveStatus::optimal);
        const oracle::DualSolution ref = oracle::qcqp_dual_bisection(
            p.cost.hess, p.cost.lin, p.constraint.hess, p.constraint.lin, p.constraint.constant, p.budget);
        const double ref_cost = p.cost.value(ref.theta);
        CHECK(std::abs(sol.cost_value - ref_cost) <= 1e-6 * (1.0 + std::abs(ref_cost)));
        CHECK(sol.constraint_value <= p.budget + 1e-8 * (1.0 + std::abs(p.budget)));
        const KktReport k = check_kkt(p, sol.theta);
        CHECK(k.scaled_stationarity < 1e-6);
    }
}

TEST_CASE("loose budget returns the unconstrained minimizer") {
    std::mt19937_64 rng(44);
    QcqpProblem p = random_problem(rng, 6, 2.0);
    const QcqpSolution sol = solve_qcqp(p);
    REQUIRE(sol.status == SolveStatus::optimal);
    const Vec unc = p.cost.hess.ldlt().solve(-p.cost.lin);
    CHECK((sol.theta - unc).norm() < 1e-6 * (1.0 + unc.norm()));
    CHECK(sol.multiplier == doctest::Approx(0.0));
    p.budget = std::numeric_limits<double>::infinity();
    CHECK(solve_qcqp(p).status == SolveStatus::optimal);
}

TEST_CASE("budget below the smallest attainable value is infeasible") {
    std::mt19937_64 rng(45);
    QcqpProblem p = random_problem(rng, 5, 0.5);
    const double lo = min_form_value(p.constraint);
    p.budget = lo - 0.5;
    const QcqpSolution sol = solve_qcqp(p);
    CHECK(sol.status == SolveStatus::infeasible);
    CHECK(sol.min_constraint_value == doctest::Approx(lo).epsilon(1e-8));
}

TEST_CASE("budget exactly at the minimum picks the best point of the minimizer set") {
    std::mt19937_64 rng(46);
    QcqpProblem p = random_problem(rng, 6, 0.5);
    p.budget = min_form_value(p.constraint);
    const QcqpSolution sol = solve_qcqp(p);
    REQUIRE(sol.status == SolveStatus::optimal);
    CHECK(sol.constraint_value <= p.budget + 1e-8 * (1.0 + std::abs(p.budget)));
    // Feasible points form the affine set Hk t = -gk; minimize the cost on it
    // with a null-space parameterization.
    const Mat& Hk = p.constraint.hess;
    const Vec tp = Hk.completeOrthogonalDecomposition().solve(-p.constraint.lin);
    const Mat Z = Eigen::FullPivLU<Mat>(Hk).kernel();
    const Vec y = (Z.transpose() * p.cost.hess * Z).ldlt().solve(-Z.transpose() * (p.cost.hess * tp + p.cost.lin));
    const Vec ref = tp + Z * y;
    CHECK(sol.cost_value == doctest::Approx(p.cost.value(ref)).epsilon(1e-6));
}

TEST_CASE("minimum of a convex quadratic") {
    QuadraticForm f;
    f.hess = Mat::Zero(2, 2);
    f.hess(0, 0) = 2.0;
    f.lin = Vec::Zero(2);
    f.lin(0) = -2.0;
    f.constant = 3.0;
    CHECK(min_form_value(f) == doctest::Approx(2.0));
    f.lin(1) = 1.0;  // linear term outside the range of the Hessian
    CHECK(std::isinf(min_form_value(f)));
}

TEST_CASE("pendulum first plan") {
    const oracle::Instance in = oracle::pendulum();
    const auto d = MpcDesign::build(in.model, in.spec);
    const QcqpProblem p = d->problem(in.belief.x_hat0, in.belief.Sigma0, in.spec.epsilon);
    const QcqpSolution sol = solve_qcqp(p);
    REQUIRE(sol.status == SolveStatus::optimal);
    const oracle::DualSolution ref = oracle::qcqp_dual_bisection(
        p.cost.hess, p.cost.lin, p.constraint.hess, p.constraint.lin, p.constraint.constant, p.budget);
    CHECK(sol.cost_value == doctest::Approx(p.cost.value(ref.theta)).epsilon(1e-6));
    CHECK(sol.multiplier == doctest::Approx(ref.multiplier).epsilon(1e-4));
    CHECK(sol.constraint_value == doctest::Approx(in.spec.epsilon).epsilon(1e-8));

    std::ostringstream os;
    dump_instance(os, p, sol);
    CHECK(os.str().size() > 100);
}
