#include "ofmpc/model.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace ofmpc;

namespace {

double rel(const Mat& a, const Mat& b) { return (a - b).norm() / std::max(1e-300, b.norm()); }

}  // namespace

TEST_CASE("LQ gain matches the doubling oracle on the pendulum") {
    const oracle::Instance in = oracle::pendulum();
    const Mat K = synthesize_K(in.model, in.spec);
    const Mat K_ref = oracle::lq_gain_doubling(in.model.A, in.model.B, in.spec.Q, in.spec.R);
    CHECK(rel(K, K_ref) < 1e-8);
}

TEST_CASE("pendulum gains agree with an independent scipy computation") {
    // Values from scipy.linalg.solve_discrete_are and a fixed-point solve of
    // the intermittent Riccati equation, rounded to the printed digits.
    const oracle::Instance in = oracle::pendulum();
    const Gains g = synthesize_gains(in.model, in.spec);
    Mat K_ref(2, 4), M_ref(4, 2);
    K_ref << -295.36, -53.364, -65.430, -15.999, -65.430, -15.999, -164.50, -21.367;
    M_ref << 0.5783, -0.0025, 0.5403, -0.1864, -0.0025, 0.6796, -0.2416, 0.9420;
    CHECK((g.K - K_ref).cwiseAbs().maxCoeff() < 0.01);
    CHECK((g.M - M_ref).cwiseAbs().maxCoeff() < 1e-3);
    CHECK(g.rho_phi == doctest::Approx(0.940).epsilon(2e-3));
    CHECK(g.rho_ms == doctest::Approx(0.987).epsilon(2e-3));
    CHECK(g.rho_lyap == doctest::Approx(0.938).epsilon(2e-3));
    CHECK(g.certified());
}

TEST_CASE("intermittent Riccati solution satisfies its equation") {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 5; ++t) {
        const oracle::Instance in = oracle::random_instance(rng, 3, 1, 2, 2, 0.9);
        const SystemModel& m = in.model;
        const Mat S = solve_intermittent_riccati(m);
        const Mat CS = m.C * S;
        const Mat rhs = m.A * S * m.A.transpose() + m.D * m.Sigma_w * m.D.transpose() -
                        m.lambda * m.A * CS.transpose() * (CS * m.C.transpose() + m.Sigma_v).ldlt().solve(CS) *
                            m.A.transpose();
        CHECK(rel(S, rhs) < 1e-9);
    }
}

TEST_CASE("with lambda = 1 the observer gain is the steady-state Kalman predictor gain") {
    std::mt19937_64 rng(12);
    oracle::Instance in = oracle::random_instance(rng, 3, 1, 2, 2, 0.9);
    in.model.lambda = 1.0;
    const SystemModel& m = in.model;
    // Filtering Riccati equation is the control equation of the dual system.
    const Mat S = oracle::dare_doubling(m.A.transpose(), m.C.transpose(), m.D * m.Sigma_w * m.D.transpose(),
                                        m.Sigma_v);
    const Mat M_ref = S * m.C.transpose() * (m.C * S * m.C.transpose() + m.Sigma_v).inverse();
    CHECK(rel(synthesize_M(m), M_ref) < 1e-8);
}

TEST_CASE("mean-square radius matches power iteration of the covariance map") {
    std::mt19937_64 rng(13);
    for (int t = 0; t < 3; ++t) {
        const oracle::Instance in = oracle::random_instance(rng, 3, 1, 1, 2, 0.9);
        const Mat M = synthesize_M(in.model);
        CHECK(check_ms_stability(in.model, M) == doctest::Approx(oracle::ms_radius_power(in.model, M)).epsilon(1e-6));
    }
}

TEST_CASE("discounted joint radius is beta times the undiscounted one") {
    const oracle::Instance in = oracle::pendulum();
    const Gains g = synthesize_gains(in.model, in.spec);
    const double r1 = check_discounted_lyapunov(in.model, g.K, g.M, 1.0);
    CHECK(check_discounted_lyapunov(in.model, g.K, g.M, 0.5) == doctest::Approx(0.5 * r1));
    // The joint map is block triangular, so its radius is the larger of the two blocks.
    CHECK(r1 == doctest::Approx(std::max(g.rho_ms, g.rho_phi * g.rho_phi)).epsilon(1e-8));
}

TEST_CASE("joint map layout") {
    const oracle::Instance in = oracle::pendulum();
    const Gains g = synthesize_gains(in.model, in.spec);
    const Mat J1 = joint_map(in.model, g.K, g.M, 1);
    CHECK(rel(J1.topLeftCorner(4, 4), error_map(in.model, g.M, 1)) < 1e-15);
    CHECK(J1.topRightCorner(4, 4).isZero());
    CHECK(rel(J1.bottomRightCorner(4, 4), in.model.A + in.model.B * g.K) < 1e-15);
    CHECK(joint_map(in.model, g.K, g.M, 0).bottomLeftCorner(4, 4).isZero());
}

TEST_CASE("validation rejects malformed or unstabilizable models") {
    oracle::Instance in = oracle::pendulum();
    SUBCASE("uncontrollable unstable mode") {
        in.model.A = Mat::Identity(4, 4) * 1.1;
        in.model.B = Mat::Zero(4, 2);
        in.model.B(0, 0) = 1.0;
        CHECK_THROWS_AS(validate_model(in.model, in.spec), NotStabilizable);
    }
    SUBCASE("unobservable unstable mode") {
        in.model.A = Mat::Identity(4, 4) * 0.5;
        in.model.A(3, 3) = 1.1;  // reached by B, invisible to C
        CHECK_THROWS_AS(validate_model(in.model, in.spec), NotDetectable);
    }
    SUBCASE("wrong dimension") {
        in.model.B = Mat::Zero(3, 2);
        CHECK_THROWS_AS(validate_model(in.model, in.spec), DimensionMismatch);
    }
    SUBCASE("indefinite noise") {
        in.model.Sigma_w(0, 0) = -1.0;
        CHECK_THROWS_AS(validate_model(in.model, in.spec), NotPSD);
    }
    SUBCASE("arrival probability out of range") {
        in.model.lambda = 1.5;
        CHECK_THROWS_AS(validate_model(in.model, in.spec), Error);
    }
}

TEST_CASE("PBH tests") {
    Mat A(2, 2);
    A << 2, 0, 0, 0.5;
    Mat B(2, 1);
    B << 0, 1;
    CHECK_FALSE(is_stabilizable(A, B));
    B << 1, 0;
    CHECK(is_stabilizable(A, B));
    CHECK(is_detectable(A, B.transpose()));
    CHECK_FALSE(is_detectable(A, Mat((Mat(1, 2) << 0, 1).finished())));
}
