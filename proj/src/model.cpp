#include "ofmpc/model.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>
#include <complex>
#include <sstream>

namespace ofmpc {

namespace {

using CMat = Eigen::MatrixXcd;

constexpr double kBlowUp = 1e14;

void require_psd(const Mat& a, const char* name, bool strict = false) {
    if (!linalg::is_symmetric(a)) {
        throw NotPSD(std::string(name) + " is not symmetric");
    }
    const double scale = std::max(1.0, std::abs(a.trace()));
    const double lo = linalg::min_eigenvalue(a);
    if (strict ? lo <= 1e-12 * scale : lo < -1e-9 * scale) {
        throw NotPSD(std::string(name) + (strict ? " is not positive definite" : " is not positive semidefinite"));
    }
}

bool pbh_full_rank(const CMat& stacked, Eigen::Index n, double rank_tol) {
    Eigen::JacobiSVD<CMat> svd(stacked);
    const auto& sv = svd.singularValues();
    if (sv.size() < n) {
        return false;
    }
    const double top = std::max(1.0, sv(0));
    return sv(n - 1) > rank_tol * top;
}

bool converged(const Mat& next, const Mat& prev, double tol) {
    const double scale = std::max(1.0, next.cwiseAbs().maxCoeff());
    return (next - prev).cwiseAbs().maxCoeff() <= tol * scale;
}

bool blown_up(const Mat& p) {
    return !p.allFinite() || p.cwiseAbs().maxCoeff() > kBlowUp;
}

}  // namespace

bool is_stabilizable(const Mat& A, const Mat& B, double rank_tol) {
    const Eigen::Index n = A.rows();
    Eigen::EigenSolver<Mat> es(A, false);
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::complex<double> ev = es.eigenvalues()(i);
        if (std::abs(ev) < 1.0) {
            continue;
        }
        CMat stacked(n, n + B.cols());
        stacked.leftCols(n) = A.cast<std::complex<double>>() - ev * CMat::Identity(n, n);
        stacked.rightCols(B.cols()) = B.cast<std::complex<double>>();
        if (!pbh_full_rank(stacked, n, rank_tol)) {
            return false;
        }
    }
    return true;
}

bool is_detectable(const Mat& A, const Mat& C, double rank_tol) {
    return is_stabilizable(A.transpose(), C.transpose(), rank_tol);
}

void validate_model(const SystemModel& m, const ControlSpec& s) {
    const Eigen::Index nx = m.A.rows();
    if (nx == 0) {
        throw DimensionMismatch("A must be non-empty");
    }
    linalg::require_shape(m.A, nx, nx, "A");
    linalg::require_shape(m.B, nx, m.B.cols(), "B");
    linalg::require_shape(m.C, m.C.rows(), nx, "C");
    linalg::require_shape(m.D, nx, m.D.cols(), "D");
    linalg::require_shape(m.Sigma_w, m.D.cols(), m.D.cols(), "Sigma_w");
    linalg::require_shape(m.Sigma_v, m.C.rows(), m.C.rows(), "Sigma_v");
    linalg::require_shape(s.Q, nx, nx, "Q");
    linalg::require_shape(s.R, m.B.cols(), m.B.cols(), "R");
    linalg::require_shape(s.H, s.H.rows(), nx, "H");
    if (!(m.lambda >= 0.0 && m.lambda <= 1.0)) {
        throw Error("lambda must lie in [0, 1]");
    }
    if (!(s.beta > 0.0 && s.beta < 1.0)) {
        throw Error("beta must lie strictly inside (0, 1)");
    }
    if (!(s.epsilon >= 0.0) || !std::isfinite(s.epsilon)) {
        throw Error("epsilon must be finite and non-negative");
    }
    if (s.N < 1) {
        throw Error("horizon N must be at least 1");
    }
    require_psd(m.Sigma_w, "Sigma_w");
    require_psd(m.Sigma_v, "Sigma_v", true);
    require_psd(s.Q, "Q");
    require_psd(s.R, "R", true);
    if (!is_stabilizable(m.A, m.B)) {
        throw NotStabilizable("(A, B) is not stabilizable");
    }
    if (!is_detectable(m.A, m.C)) {
        throw NotDetectable("(A, C) is not detectable");
    }
}

void validate_belief(const SystemModel& m, const InitialBelief& b) {
    if (b.x_hat0.size() != m.nx()) {
        throw DimensionMismatch("x_hat0 has wrong length");
    }
    linalg::require_shape(b.Sigma0, m.nx(), m.nx(), "Sigma0");
    require_psd(b.Sigma0, "Sigma0");
}

Mat solve_control_riccati(const Mat& A, const Mat& B, const Mat& Q, const Mat& R,
                          const RiccatiOptions& opt) {
    Mat P = Q;
    const Mat At = A.transpose();
    for (long it = 0; it < opt.max_iter; ++it) {
        const Mat BtPA = B.transpose() * P * A;
        const Mat S = R + B.transpose() * P * B;
        Mat next = At * P * A - BtPA.transpose() * S.ldlt().solve(BtPA) + Q;
        next = linalg::symmetrize(next);
        if (blown_up(next)) {
            throw RiccatiDiverged("control Riccati iteration diverged");
        }
        if (converged(next, P, opt.tol)) {
            return next;
        }
        P = std::move(next);
    }
    throw RiccatiDiverged("control Riccati iteration hit the iteration cap");
}

Mat synthesize_K(const SystemModel& m, const ControlSpec& s, const RiccatiOptions& opt) {
    const Mat P = solve_control_riccati(m.A, m.B, s.Q, s.R, opt);
    const Mat S = s.R + m.B.transpose() * P * m.B;
    return -S.ldlt().solve(m.B.transpose() * P * m.A);
}

Mat solve_intermittent_riccati(const SystemModel& m, const RiccatiOptions& opt) {
    const Mat W = linalg::symmetrize(m.D * m.Sigma_w * m.D.transpose());
    Mat S = W;
    for (long it = 0; it < opt.max_iter; ++it) {
        const Mat CSAt = m.C * S * m.A.transpose();
        const Mat innov = m.C * S * m.C.transpose() + m.Sigma_v;
        Mat next = m.A * S * m.A.transpose() + W - m.lambda * CSAt.transpose() * innov.ldlt().solve(CSAt);
        next = linalg::symmetrize(next);
        if (blown_up(next)) {
            throw RiccatiDiverged("estimator Riccati iteration diverged; arrival probability may be below critical");
        }
        if (converged(next, S, opt.tol)) {
            return next;
        }
        S = std::move(next);
    }
    throw RiccatiDiverged("estimator Riccati iteration hit the iteration cap");
}

Mat synthesize_M(const SystemModel& m, const RiccatiOptions& opt) {
    const Mat S = solve_intermittent_riccati(m, opt);
    const Mat innov = m.C * S * m.C.transpose() + m.Sigma_v;
    // M = S C' innov^-1, innov symmetric
    return innov.ldlt().solve(m.C * S).transpose();
}

Mat error_map(const SystemModel& m, const Mat& M, int gamma) {
    const int nx = m.nx();
    return m.A * (Mat::Identity(nx, nx) - static_cast<double>(gamma) * M * m.C);
}

double check_ms_stability(const SystemModel& m, const Mat& M) {
    const Mat p0 = error_map(m, M, 0);
    const Mat p1 = error_map(m, M, 1);
    const Mat lifted = (1.0 - m.lambda) * linalg::kron(p0, p0) + m.lambda * linalg::kron(p1, p1);
    return linalg::spectral_radius(lifted);
}

Mat joint_map(const SystemModel& m, const Mat& K, const Mat& M, int gamma) {
    const int nx = m.nx();
    Mat out = Mat::Zero(2 * nx, 2 * nx);
    out.topLeftCorner(nx, nx) = error_map(m, M, gamma);
    out.bottomLeftCorner(nx, nx) = static_cast<double>(gamma) * m.A * M * m.C;
    out.bottomRightCorner(nx, nx) = m.A + m.B * K;
    return out;
}

double check_discounted_lyapunov(const SystemModel& m, const Mat& K, const Mat& M, double beta) {
    const Mat j0 = joint_map(m, K, M, 0);
    const Mat j1 = joint_map(m, K, M, 1);
    const Mat lifted = beta * ((1.0 - m.lambda) * linalg::kron(j0, j0) + m.lambda * linalg::kron(j1, j1));
    return linalg::spectral_radius(lifted);
}

Gains synthesize_gains(const SystemModel& m, const ControlSpec& s, const RiccatiOptions& opt) {
    Gains g;
    g.K = synthesize_K(m, s, opt);
    g.M = synthesize_M(m, opt);
    g.rho_phi = linalg::spectral_radius(m.A + m.B * g.K);
    g.rho_ms = check_ms_stability(m, g.M);
    g.rho_lyap = check_discounted_lyapunov(m, g.K, g.M, s.beta);
    return g;
}

}  // namespace ofmpc
