#pragma once

// Reference computations used by the tests. None of them reuse the
// library's prediction, assembly or solver code paths.

#include "ofmpc/sim.hpp"

#include <cstdint>
#include <random>

namespace ofmpc::oracle {

/// Stabilizing solution of X = A'XA - A'XB(R + B'XB)^-1 B'XA + Q by the
/// structure-preserving doubling algorithm.
Mat dare_doubling(const Mat& A, const Mat& B, const Mat& Q, const Mat& R);

/// K = -(R + B'PB)^-1 B'PA from the doubling solution.
Mat lq_gain_doubling(const Mat& A, const Mat& B, const Mat& Q, const Mat& R);

/// Growth rate of X -> E{Psi X Psi'} by power iteration on matrices.
double ms_radius_power(const SystemModel& m, const Mat& M, int iters = 4000);

struct ExactValue {
    double cost = 0.0;
    double constraint = 0.0;
    Mat Omega;      ///< E{[e stack; innovation stack][..]'}
    Mat Omega_N;    ///< E{[e_N; innovation stack][..]'}
    Vec Exx_diag;   ///< E{||x_i||^2} for i = 0..N
};

/// Exact discounted cost and constraint of the predicted control law by
/// enumerating the N arrival indicators of the horizon and tracking every
/// signal as an affine function of (e_0, v_0.., w_0..). Beyond the horizon
/// the joint (x, x_hat) second moment is propagated until beta^i < 1e-18.
ExactValue exact_policy_value(const SystemModel& m, const Mat& K, const Mat& M, const ControlSpec& s,
                              const Policy& theta, const Vec& x_hat, const Mat& Sigma);

struct SampledValue {
    double cost = 0.0, cost_se = 0.0;
    double constraint = 0.0, constraint_se = 0.0;
    Vec x_sq;     ///< mean of ||x_i||^2 for i = 0..steps-1
    Vec x_sq_se;
};

/// Sample-by-sample simulation of the predicted law from x ~ N(x_hat, Sigma).
SampledValue sample_policy_value(const SystemModel& m, const Mat& K, const Mat& M, const ControlSpec& s,
                                 const Policy& theta, const Vec& x_hat, const Mat& Sigma, long steps, long samples,
                                 std::uint64_t seed);

struct DualSolution {
    Vec theta;
    double multiplier = 0.0;
    bool feasible = true;
};

/// min 0.5 t'Hc t + gc't  s.t.  0.5 t'Hk t + gk't + ck <= budget with Hc
/// positive definite, by bisection on the multiplier.
DualSolution qcqp_dual_bisection(const Mat& Hc, const Vec& gc, const Mat& Hk, const Vec& gk, double ck,
                                 double budget);

struct Instance {
    SystemModel model;
    ControlSpec spec;
    InitialBelief belief;
    Vec x0;
};

/// Random system with certified gains: n_x states, n_u inputs, n_y outputs.
Instance random_instance(std::mt19937_64& rng, int nx, int nu, int ny, int N, double beta);

Mat random_spd(std::mt19937_64& rng, int n, double floor = 0.1);
Vec random_vec(std::mt19937_64& rng, int n, double scale = 1.0);
Mat random_mat(std::mt19937_64& rng, int r, int c, double scale = 1.0);

/// Data of the double-pendulum example.
Instance pendulum();

}  // namespace ofmpc::oracle
