#pragma once

#include "ofmpc/controller.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace ofmpc {

/// Counter-based random bit generator. The stream is a pure function of
/// (seed, episode, step, channel), so any draw can be reproduced without
/// replaying earlier ones and results do not depend on scheduling.
class CounterRng {
public:
    using result_type = std::uint64_t;

    CounterRng(std::uint64_t seed, std::uint64_t episode, std::uint64_t step, std::uint64_t channel);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
    result_type operator()();

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

enum class NoiseChannel : std::uint64_t { process = 1, measurement = 2, loss = 3 };

struct NoiseDraw {
    Vec w;
    Vec v;
    int gamma = 0;
};

/// Gaussian disturbance / measurement noise and Bernoulli arrivals. The
/// covariance square roots are factored once.
class NoiseSampler {
public:
    explicit NoiseSampler(const SystemModel& m);
    NoiseDraw draw(std::uint64_t seed, std::uint64_t episode, std::uint64_t step) const;

private:
    Mat Fw_, Fv_;
    double lambda_;
};

Vec plant_step(const SystemModel& m, const Vec& x, const Vec& u, const Vec& w);
Vec measure(const SystemModel& m, const Vec& x, const Vec& v);

/// Certainty-equivalent LQ feedback with a time-varying Kalman predictor
/// that uses the realized arrivals.
struct LqgState {
    Vec x_hat;
    Mat Sigma;
};
struct LqgStep {
    Vec u;
    LqgState next;
};
/// u = K x_hat; M_k = Sigma C'(C Sigma C' + Sv)^-1;
/// x_hat+ = A x_hat + B u + gamma A M_k (y - C x_hat);
/// Sigma+ = A Sigma A' + D Sw D' - gamma A Sigma C'(C Sigma C' + Sv)^-1 C Sigma A'.
LqgStep lqg_baseline_step(const SystemModel& m, const Mat& K, const LqgState& st, const Measurement& z);

enum class ControllerKind { mpc, lqg };
std::string to_string(ControllerKind k);
ControllerKind parse_controller_kind(const std::string& s);

struct SimConfig {
    SystemModel model;
    ControlSpec spec;
    InitialBelief belief;
    Vec x0;
    long episodes = 1;
    long steps = 500;
    std::uint64_t seed = 0;
    ControllerKind controller = ControllerKind::mpc;
    int workers = 1;
};

struct StepLog {
    long k = 0;
    int gamma = 0;
    Vec u, x, x_hat;
    std::optional<Vec> y;
    double mu = std::numeric_limits<double>::quiet_NaN();
    double stage_cost = 0.0;
    double stage_con = 0.0;
    double J = std::numeric_limits<double>::quiet_NaN();
    std::string status;
};

struct EpisodeResult {
    long episode = 0;
    double discounted_con = 0.0;
    double discounted_cost = 0.0;
    double J0 = std::numeric_limits<double>::quiet_NaN();
    long steps = 0;
    long infeasible_after_start = 0;  ///< solver reported infeasible at k > 0
    long fallbacks = 0;               ///< solver failed and the tail policy was applied
    long tail_rejections = 0;         ///< tail policy failed the feasibility check
    double min_mu = std::numeric_limits<double>::infinity();
    double seconds = 0.0;
    std::vector<StepLog> trajectory;  ///< filled when requested

    bool all_feasible() const { return infeasible_after_start == 0 && tail_rejections == 0; }
};

/// One closed loop of `cfg.steps` steps from the fixed true state cfg.x0.
/// `design` must be built from cfg.model / cfg.spec.
EpisodeResult run_episode(const SimConfig& cfg, const std::shared_ptr<const MpcDesign>& design, long episode,
                          bool record_trajectory = false);

struct CampaignSummary {
    ControllerKind controller = ControllerKind::mpc;
    long episodes = 0;
    long steps = 0;
    std::uint64_t seed = 0;
    int workers = 1;
    double con_mean = 0.0, con_se = 0.0;
    double cost_mean = 0.0, cost_se = 0.0;
    double epsilon = 0.0;
    double J0 = std::numeric_limits<double>::quiet_NaN();
    bool violation = false;  ///< con_mean > epsilon
    long infeasible_after_start = 0;
    long fallbacks = 0;
    long tail_rejections = 0;
    double wall_seconds = 0.0;
    double mean_episode_seconds = 0.0;
    double max_episode_seconds = 0.0;
};

struct CampaignResult {
    CampaignSummary summary;
    std::vector<EpisodeResult> episodes;  ///< in episode order
};

/// Episodes run on `cfg.workers` threads; results are reduced in episode
/// order so the output does not depend on the worker count.
CampaignResult run_campaign(const SimConfig& cfg, const std::shared_ptr<const MpcDesign>& design,
                            const std::function<void(long done, long total)>& progress = {});

/// Mean and standard error across episodes.
void summarize(CampaignResult& r, const SimConfig& cfg);

struct OracleEstimate {
    double cost = 0.0, cost_se = 0.0;
    double con = 0.0, con_se = 0.0;
    long samples = 0;
    long steps = 0;  ///< simulated steps per sample
};

/// Brute-force estimate of the discounted cost and constraint of policy
/// theta from (x_hat, Sigma): samples x ~ N(x_hat, Sigma), noise and
/// arrivals, runs the predicted law for i < N and u = K x_hat after that.
/// Requires beta^horizon_T < 1e-10. Steps whose discount weight is below
/// 1e-17 are not simulated.
OracleEstimate predicted_cost_oracle(const MpcDesign& design, const Policy& theta, const Vec& x_hat,
                                     const Mat& Sigma, long samples, long horizon_T, std::uint64_t seed);

// Output writers.
void write_step_csv(std::ostream& os, const std::vector<StepLog>& steps);
void write_episode_csv(std::ostream& os, const std::vector<EpisodeResult>& episodes);
std::string summary_json(const CampaignSummary& s);

}  // namespace ofmpc
