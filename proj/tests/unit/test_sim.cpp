#include "ofmpc/config.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <set>
#include <sstream>

using namespace ofmpc;

namespace {

SimConfig small_config(long episodes, long steps) {
    SimConfig cfg = load_config(std::string(OFMPC_CONFIG_DIR) + "/double_pendulum.json");
    cfg.episodes = episodes;
    cfg.steps = steps;
    return cfg;
}

std::string episodes_csv(const CampaignResult& r) {
    std::ostringstream os;
    write_episode_csv(os, r.episodes);
    return os.str();
}

}  // namespace

TEST_CASE("counter streams are reproducible and separated") {
    CounterRng a(1, 2, 3, 1), b(1, 2, 3, 1), c(1, 2, 4, 1), d(1, 2, 3, 2);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 100; ++i) {
        const auto x = a();
        CHECK(x == b());
        seen.insert(x);
        seen.insert(c());
        seen.insert(d());
    }
    CHECK(seen.size() == 300);
}

TEST_CASE("noise draws have the configured moments") {
    const oracle::Instance in = oracle::pendulum();
    const NoiseSampler ns(in.model);
    const long n = 200000;
    Mat Sw = Mat::Zero(4, 4), Sv = Mat::Zero(2, 2);
    double arrivals = 0.0;
    for (long i = 0; i < n; ++i) {
        const NoiseDraw d = ns.draw(7, static_cast<std::uint64_t>(i), 0);
        Sw += d.w * d.w.transpose();
        Sv += d.v * d.v.transpose();
        arrivals += d.gamma;
    }
    Sw /= n;
    Sv /= n;
    CHECK((Sw - in.model.Sigma_w).cwiseAbs().maxCoeff() < 0.02);
    CHECK((Sv - in.model.Sigma_v).cwiseAbs().maxCoeff() < 0.03);
    CHECK(arrivals / n == doctest::Approx(0.6).epsilon(0.01));
}

TEST_CASE("LQG baseline step follows the time-varying Kalman predictor") {
    const oracle::Instance in = oracle::pendulum();
    const SystemModel& m = in.model;
    const Gains g = synthesize_gains(m, in.spec);
    LqgState st{in.belief.x_hat0, in.belief.Sigma0 + 0.1 * Mat::Identity(4, 4)};
    const Vec y = (Vec(2) << 0.3, -0.2).finished();
    const LqgStep s1 = lqg_baseline_step(m, g.K, st, Measurement{1, y});
    const Mat S = st.Sigma;
    const Mat Mk = S * m.C.transpose() * (m.C * S * m.C.transpose() + m.Sigma_v).inverse();
    const Vec u = g.K * st.x_hat;
    CHECK((s1.u - u).norm() < 1e-12);
    CHECK((s1.next.x_hat - (m.A * st.x_hat + m.B * u + m.A * Mk * (y - m.C * st.x_hat))).norm() < 1e-10);
    const Mat Sn = m.A * S * m.A.transpose() + m.Sigma_w -
                   m.A * S * m.C.transpose() * (m.C * S * m.C.transpose() + m.Sigma_v).inverse() * m.C * S *
                       m.A.transpose();
    CHECK((s1.next.Sigma - Sn).norm() < 1e-10);
    const LqgStep s0 = lqg_baseline_step(m, g.K, st, Measurement{0, std::nullopt});
    CHECK((s0.next.Sigma - (m.A * S * m.A.transpose() + m.Sigma_w)).norm() < 1e-10);
    CHECK_THROWS_AS(lqg_baseline_step(m, g.K, st, Measurement{1, std::nullopt}), MissingMeasurement);
}

TEST_CASE("episode outputs do not depend on the worker count") {
    SimConfig cfg = small_config(6, 30);
    const auto d = MpcDesign::build(cfg.model, cfg.spec);
    cfg.workers = 1;
    const CampaignResult r1 = run_campaign(cfg, d);
    cfg.workers = 3;
    const CampaignResult r3 = run_campaign(cfg, d);
    CHECK(episodes_csv(r1) == episodes_csv(r3));
    CHECK(r1.summary.con_mean == r3.summary.con_mean);
    CHECK(r1.summary.cost_mean == r3.summary.cost_mean);
}

TEST_CASE("MPC and LQG share noise streams") {
    SimConfig cfg = small_config(1, 20);
    const auto d = MpcDesign::build(cfg.model, cfg.spec);
    const EpisodeResult a = run_episode(cfg, d, 0, true);
    cfg.controller = ControllerKind::lqg;
    const EpisodeResult b = run_episode(cfg, d, 0, true);
    REQUIRE(a.trajectory.size() == 20);
    for (std::size_t k = 0; k < 20; ++k) {
        CHECK(a.trajectory[k].gamma == b.trajectory[k].gamma);
    }
    CHECK((a.trajectory[0].x - b.trajectory[0].x).norm() == 0.0);
    // Same input at k = 0 would make x_1 identical; different inputs give
    // x_1 differences of exactly B (u_a - u_b).
    const Vec du = a.trajectory[0].u - b.trajectory[0].u;
    CHECK((a.trajectory[1].x - b.trajectory[1].x - cfg.model.B * du).norm() < 1e-12);
}

TEST_CASE("episode sums are the discounted stage sums of the trajectory") {
    const SimConfig cfg = small_config(1, 40);
    const auto d = MpcDesign::build(cfg.model, cfg.spec);
    const EpisodeResult r = run_episode(cfg, d, 2, true);
    double c = 0.0, j = 0.0, disc = 1.0;
    for (const StepLog& s : r.trajectory) {
        CHECK(s.stage_con == doctest::Approx((cfg.spec.H * s.x).squaredNorm()));
        c += disc * s.stage_con;
        j += disc * s.stage_cost;
        disc *= cfg.spec.beta;
        CHECK(s.y.has_value() == (s.gamma == 1));
    }
    CHECK(r.discounted_con == doctest::Approx(c).epsilon(1e-12));
    CHECK(r.discounted_cost == doctest::Approx(j).epsilon(1e-12));
    CHECK(r.J0 == doctest::Approx(r.trajectory.front().J));
    CHECK(r.all_feasible());
}

TEST_CASE("per-step CSV layout") {
    const SimConfig cfg = small_config(1, 8);
    const auto d = MpcDesign::build(cfg.model, cfg.spec);
    const EpisodeResult r = run_episode(cfg, d, 0, true);
    std::ostringstream os;
    write_step_csv(os, r.trajectory);
    std::istringstream is(os.str());
    std::string header;
    std::getline(is, header);
    CHECK(header ==
          "k,gamma,u0,u1,x0,x1,x2,x3,x_hat0,x_hat1,x_hat2,x_hat3,y0,y1,mu,stage_cost,stage_con,J_k,solver_status");
    std::string line;
    int rows = 0;
    while (std::getline(is, line)) {
        const auto fields = std::count(line.begin(), line.end(), ',');
        CHECK(fields == 18);
        if (r.trajectory[rows].gamma == 0) {
            CHECK(line.find(",,") != std::string::npos);
        }
        ++rows;
    }
    CHECK(rows == 8);
}

TEST_CASE("summary JSON carries the campaign statistics") {
    const SimConfig cfg = small_config(3, 10);
    const auto d = MpcDesign::build(cfg.model, cfg.spec);
    const CampaignResult r = run_campaign(cfg, d);
    const auto j = nlohmann::json::parse(summary_json(r.summary));
    CHECK(j["episodes"] == 3);
    CHECK(j["epsilon"] == 111.0);
    CHECK(j["discounted_constraint"]["mean"].get<double>() == doctest::Approx(r.summary.con_mean));
    CHECK(j["discounted_cost"]["se"].get<double>() >= 0.0);
    CHECK(j["J0"].get<double>() == doctest::Approx(r.episodes.front().J0));
    CHECK(j.contains("violation"));
    CHECK(j["wall_clock"]["total_seconds"].get<double>() > 0.0);
}

TEST_CASE("standard error of a campaign mean") {
    CampaignResult r;
    for (int i = 0; i < 4; ++i) {
        EpisodeResult e;
        e.discounted_con = i;
        e.discounted_cost = 2.0 * i;
        r.episodes.push_back(e);
    }
    SimConfig cfg = small_config(4, 1);
    summarize(r, cfg);
    CHECK(r.summary.con_mean == doctest::Approx(1.5));
    // sample sd of {0,1,2,3} is sqrt(5/3)
    CHECK(r.summary.con_se == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
    CHECK(r.summary.cost_se == doctest::Approx(std::sqrt(5.0 / 3.0)));
}

TEST_CASE("brute-force oracle matches the exact value on a small instance") {
    std::mt19937_64 rng(61);
    const oracle::Instance in = oracle::random_instance(rng, 2, 1, 1, 2, 0.5);
    const auto d = MpcDesign::build(in.model, in.spec);
    const Policy theta = Policy::unflatten(d->layout(), oracle::random_vec(rng, d->layout().size(), 0.5));
    const Vec x_hat = oracle::random_vec(rng, 2);
    const Mat Sigma = oracle::random_spd(rng, 2);
    const OracleEstimate est = predicted_cost_oracle(*d, theta, x_hat, Sigma, 200000, 400, 5);
    const oracle::ExactValue ref =
        oracle::exact_policy_value(in.model, d->gains().K, d->gains().M, in.spec, theta, x_hat, Sigma);
    CHECK(std::abs(est.cost - ref.cost) <= 3.0 * est.cost_se);
    CHECK(std::abs(est.con - ref.constraint) <= 3.0 * est.con_se);
    CHECK_THROWS_AS(predicted_cost_oracle(*d, theta, x_hat, Sigma, 100, 5, 5), Error);
}

TEST_CASE("controller kind parsing") {
    CHECK(parse_controller_kind("mpc") == ControllerKind::mpc);
    CHECK(parse_controller_kind("lqg") == ControllerKind::lqg);
    CHECK(parse_controller_kind("lqg_baseline") == ControllerKind::lqg);
    CHECK_THROWS_AS(parse_controller_kind("pid"), Error);
}
