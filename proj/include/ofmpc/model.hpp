#pragma once

#include "ofmpc/linalg.hpp"

namespace ofmpc {

class NotStabilizable : public Error {
public:
    using Error::Error;
};

class NotDetectable : public Error {
public:
    using Error::Error;
};

class RiccatiDiverged : public Error {
public:
    using Error::Error;
};

/// Plant x+ = A x + B u + D w, y = C x + v, with measurements delivered
/// with probability `lambda` (i.i.d. Bernoulli).
struct SystemModel {
    Mat A, B, C, D;
    Mat Sigma_w, Sigma_v;
    double lambda = 1.0;

    int nx() const { return static_cast<int>(A.rows()); }
    int nu() const { return static_cast<int>(B.cols()); }
    int ny() const { return static_cast<int>(C.rows()); }
    int nw() const { return static_cast<int>(D.cols()); }
};

/// Cost weights, discount, constrained output xi = H x with budget epsilon,
/// and prediction horizon.
struct ControlSpec {
    Mat Q, R, H;
    double beta = 0.95;
    double epsilon = 0.0;
    int N = 1;
};

struct InitialBelief {
    Vec x_hat0;
    Mat Sigma0;
};

/// Fixed feedback and observer gains together with their stability
/// certificates. Each radius must be below one.
struct Gains {
    Mat K;  ///< n_u x n_x, state feedback
    Mat M;  ///< n_x x n_y, observer gain
    double rho_phi = 0.0;   ///< spectral radius of A + B K
    double rho_ms = 0.0;    ///< mean-square radius of the estimation error map
    double rho_lyap = 0.0;  ///< discounted mean-square radius of the joint map

    bool certified() const { return rho_phi < 1.0 && rho_ms < 1.0 && rho_lyap < 1.0; }
};

struct RiccatiOptions {
    double tol = 1e-12;
    long max_iter = 1'000'000;
};

/// Dimension, symmetry, definiteness, stabilizability and detectability
/// checks. Throws DimensionMismatch, NotPSD, NotStabilizable or NotDetectable.
void validate_model(const SystemModel& m, const ControlSpec& s);
void validate_belief(const SystemModel& m, const InitialBelief& b);

/// PBH tests on eigenvalues with modulus >= 1.
bool is_stabilizable(const Mat& A, const Mat& B, double rank_tol = 1e-9);
bool is_detectable(const Mat& A, const Mat& C, double rank_tol = 1e-9);

/// Stationary LQ gain for (A, B, Q, R) by Riccati fixed-point iteration.
/// u = K x.
Mat synthesize_K(const SystemModel& m, const ControlSpec& s, const RiccatiOptions& opt = {});

/// Stabilizing solution of the discrete Riccati equation
/// P = A'PA - A'PB (R + B'PB)^-1 B'PA + Q.
Mat solve_control_riccati(const Mat& A, const Mat& B, const Mat& Q, const Mat& R,
                          const RiccatiOptions& opt = {});

/// Steady-state error covariance of the Kalman filter with intermittent
/// observations:  S = A S A' + D Sw D' - lambda A S C'(C S C' + Sv)^-1 C S A'.
Mat solve_intermittent_riccati(const SystemModel& m, const RiccatiOptions& opt = {});

/// M = S C'(C S C' + Sv)^-1 with S from solve_intermittent_riccati.
Mat synthesize_M(const SystemModel& m, const RiccatiOptions& opt = {});

/// Error map Psi(gamma) = A (I - gamma M C).
Mat error_map(const SystemModel& m, const Mat& M, int gamma);

/// rho((1-lambda) Psi(0) (x) Psi(0) + lambda Psi(1) (x) Psi(1)).
double check_ms_stability(const SystemModel& m, const Mat& M);

/// Joint estimation-error / estimate map
/// [[A(I - gamma M C), 0], [gamma A M C, A + B K]].
Mat joint_map(const SystemModel& m, const Mat& K, const Mat& M, int gamma);

/// rho(beta [(1-lambda) Pj(0) (x) Pj(0) + lambda Pj(1) (x) Pj(1)]).
double check_discounted_lyapunov(const SystemModel& m, const Mat& K, const Mat& M, double beta);

/// Runs both syntheses and all three certificates.
Gains synthesize_gains(const SystemModel& m, const ControlSpec& s, const RiccatiOptions& opt = {});

}  // namespace ofmpc
