#include "ofmpc/prediction.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace ofmpc;

namespace {

double rel(const Mat& a, const Mat& b) { return (a - b).norm() / std::max(1e-300, b.norm()); }

struct Setup {
    oracle::Instance in;
    Gains g;
    PredictionOperators ops;
    Setup(const oracle::Instance& i)
        : in(i), g(synthesize_gains(i.model, i.spec)), ops(i.model, g, i.spec) {}
};

Policy random_policy(const PolicyLayout& layout, std::mt19937_64& rng, double scale = 0.5) {
    return Policy::unflatten(layout, oracle::random_vec(rng, layout.size(), scale));
}

}  // namespace

TEST_CASE("policy flattening round trip and lower block triangle") {
    const PolicyLayout layout{3, 2, 2};
    CHECK(layout.size() == 6 + 4 * 6);
    std::mt19937_64 rng(1);
    const Vec t = oracle::random_vec(rng, layout.size());
    const Policy p = Policy::unflatten(layout, t);
    CHECK((p.flatten(layout) - t).norm() == 0.0);
    CHECK(p.block(layout, 0, 1).isZero());
    CHECK(p.block(layout, 1, 2).isZero());
    CHECK_FALSE(p.block(layout, 2, 2).isZero());
    // First L entry in flat order is L(0,0); column-major ordering follows.
    CHECK(p.L(0, 0) == t(6));
    CHECK(p.L(1, 0) == t(7));
    CHECK_THROWS_AS(Policy::unflatten(layout, Vec::Zero(3)), DimensionMismatch);
}

TEST_CASE("loss patterns are ordered by bit and sum to one") {
    const auto pats = enumerate_patterns(4, 0.3);
    CHECK(pats.size() == 16);
    double total = 0.0;
    for (const auto& p : pats) {
        total += p.probability;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(pats.front().gamma == std::vector<std::uint8_t>{0, 0, 0, 0});
    CHECK(pats[1].gamma == std::vector<std::uint8_t>{0, 0, 0, 1});
    CHECK(pats.back().probability == doctest::Approx(std::pow(0.3, 4)));
}

TEST_CASE("Omega by aggregate and by enumeration both match the affine-signal oracle") {
    std::mt19937_64 rng(21);
    for (int t = 0; t < 4; ++t) {
        const int nx = 2 + t % 2;
        const Setup s(oracle::random_instance(rng, nx, 1, 1 + t % 2, 2 + t % 2, 0.9));
        const Mat Sigma = oracle::random_spd(rng, nx);
        const Policy zero = Policy::zero(s.ops.layout());
        const oracle::ExactValue ref =
            oracle::exact_policy_value(s.in.model, s.g.K, s.g.M, s.in.spec, zero, Vec::Zero(nx), Sigma);
        const OmegaPair fast = compute_omega(s.ops, Sigma);
        const OmegaPair slow = compute_omega_enumerated(s.ops, Sigma);
        CHECK(rel(fast.Omega, slow.Omega) < 1e-10);
        CHECK(rel(fast.Omega_N, slow.Omega_N) < 1e-10);
        CHECK(rel(slow.Omega, ref.Omega) < 1e-10);
        CHECK(rel(slow.Omega_N, ref.Omega_N) < 1e-10);
    }
}

TEST_CASE("Omega on the pendulum: aggregate equals enumeration") {
    const Setup s(oracle::pendulum());
    const OmegaPair fast = compute_omega(s.ops, s.in.belief.Sigma0);
    const OmegaPair slow = compute_omega_enumerated(s.ops, s.in.belief.Sigma0);
    CHECK(rel(fast.Omega, slow.Omega) < 1e-10);
    CHECK(rel(fast.Omega_N, slow.Omega_N) < 1e-10);
}

TEST_CASE("predicted second moments match the affine-signal oracle") {
    std::mt19937_64 rng(22);
    for (int t = 0; t < 4; ++t) {
        const Setup s(oracle::random_instance(rng, 3, 2, 2, 3, 0.9));
        const Vec x_hat = oracle::random_vec(rng, 3);
        const Mat Sigma = oracle::random_spd(rng, 3);
        const Policy theta = random_policy(s.ops.layout(), rng);
        const MomentSet ms = compute_moments(s.ops, theta, x_hat, compute_omega(s.ops, Sigma));
        const oracle::ExactValue ref =
            oracle::exact_policy_value(s.in.model, s.g.K, s.g.M, s.in.spec, theta, x_hat, Sigma);
        for (int i = 0; i < 3; ++i) {
            CHECK(ms.Exx.block(3 * i, 3 * i, 3, 3).trace() == doctest::Approx(ref.Exx_diag(i)).epsilon(1e-10));
        }
        const double xN = ms.X_N.topLeftCorner(3, 3).trace() + 2.0 * ms.X_N.topRightCorner(3, 3).trace() +
                          ms.X_N.bottomRightCorner(3, 3).trace();
        CHECK(xN == doctest::Approx(ref.Exx_diag(3)).epsilon(1e-10));
    }
}

TEST_CASE("predicted E||x_i||^2 matches 1e6-sample simulation within 3 standard errors") {
    std::mt19937_64 rng(23);
    const Setup s(oracle::random_instance(rng, 2, 1, 1, 3, 0.9));
    const Vec x_hat = oracle::random_vec(rng, 2);
    const Mat Sigma = oracle::random_spd(rng, 2);
    const Policy theta = random_policy(s.ops.layout(), rng);
    const MomentSet ms = compute_moments(s.ops, theta, x_hat, compute_omega(s.ops, Sigma));
    const oracle::SampledValue mc =
        oracle::sample_policy_value(s.in.model, s.g.K, s.g.M, s.in.spec, theta, x_hat, Sigma, 3, 1'000'000, 99);
    for (int i = 0; i < 3; ++i) {
        const double pred = ms.Exx.block(2 * i, 2 * i, 2, 2).trace();
        CHECK(std::abs(pred - mc.x_sq(i)) <= 3.0 * mc.x_sq_se(i));
    }
}

TEST_CASE("error moment update is the conditional second moment") {
    const oracle::Instance in = oracle::pendulum();
    const Mat M = synthesize_M(in.model);
    const Mat S = in.belief.Sigma0;
    for (int gamma = 0; gamma <= 1; ++gamma) {
        const Mat psi = in.model.A * (Mat::Identity(4, 4) - gamma * M * in.model.C);
        Mat expect = psi * S * psi.transpose() + in.model.Sigma_w;
        if (gamma) {
            expect += in.model.A * M * in.model.Sigma_v * M.transpose() * in.model.A.transpose();
        }
        CHECK(rel(sigma_update(in.model, M, S, gamma), expect) < 1e-14);
    }
}

TEST_CASE("error moment stays bounded along sampled arrivals") {
    const oracle::Instance in = oracle::pendulum();
    const Mat M = synthesize_M(in.model);
    std::mt19937_64 rng(24);
    std::bernoulli_distribution arrive(in.model.lambda);
    Mat S = in.belief.Sigma0;
    std::vector<double> tr;
    for (int k = 0; k < 500; ++k) {
        S = sigma_update(in.model, M, S, arrive(rng) ? 1 : 0);
        tr.push_back(S.trace());
        if (k >= 50) {
            std::vector<double> window(tr.end() - 50, tr.end());
            std::nth_element(window.begin(), window.begin() + 25, window.end());
            CHECK(tr.back() <= 10.0 * window[25]);
        }
    }
}

TEST_CASE("expected stage constraint on the initial belief agrees with sampling") {
    const oracle::Instance in = oracle::pendulum();
    const double v = expected_stage_constraint(in.spec.H, in.belief.x_hat0, in.belief.Sigma0);
    const Mat F = linalg::psd_sqrt(in.belief.Sigma0);
    std::mt19937_64 rng(25);
    std::normal_distribution<double> nd;
    double sum = 0.0, sum2 = 0.0;
    const long n = 1'000'000;
    for (long i = 0; i < n; ++i) {
        Vec xi(4);
        for (int j = 0; j < 4; ++j) {
            xi(j) = nd(rng);
        }
        const double c = (in.spec.H * (in.belief.x_hat0 + F * xi)).squaredNorm();
        sum += c;
        sum2 += c * c;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum2 / n - mean * mean) / (n - 1));
    CHECK(std::abs(v - mean) <= 3.0 * se);
}

TEST_CASE("horizon limit") {
    oracle::Instance in = oracle::pendulum();
    in.spec.N = 20;
    const Gains g = synthesize_gains(in.model, in.spec);
    CHECK_THROWS_AS(PredictionOperators(in.model, g, in.spec), HorizonTooLarge);
}
