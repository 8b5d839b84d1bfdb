#include "ofmpc/prediction.hpp"

#include <cmath>
#include <string>

namespace ofmpc {

std::vector<int> PolicyLayout::l_vec_indices() const {
    std::vector<int> idx;
    idx.reserve(static_cast<std::size_t>(l_size()));
    const int rows = N * nu;
    for (int col = 0; col < N * ny; ++col) {
        const int first_row = (col / ny) * nu;
        for (int r = first_row; r < rows; ++r) {
            idx.push_back(col * rows + r);
        }
    }
    return idx;
}

Policy Policy::zero(const PolicyLayout& layout) {
    return Policy{Vec::Zero(layout.c_size()), Mat::Zero(layout.N * layout.nu, layout.N * layout.ny)};
}

Policy Policy::unflatten(const PolicyLayout& layout, const Vec& theta) {
    if (theta.size() != layout.size()) {
        throw DimensionMismatch("policy vector has wrong length");
    }
    Policy p = zero(layout);
    p.c = theta.head(layout.c_size());
    const auto idx = layout.l_vec_indices();
    double* data = p.L.data();
    for (std::size_t k = 0; k < idx.size(); ++k) {
        data[idx[k]] = theta(layout.c_size() + static_cast<Eigen::Index>(k));
    }
    return p;
}

Vec Policy::flatten(const PolicyLayout& layout) const {
    linalg::require_shape(L, layout.N * layout.nu, layout.N * layout.ny, "policy L");
    if (c.size() != layout.c_size()) {
        throw DimensionMismatch("policy c has wrong length");
    }
    Vec theta(layout.size());
    theta.head(layout.c_size()) = c;
    const auto idx = layout.l_vec_indices();
    const double* data = L.data();
    for (std::size_t k = 0; k < idx.size(); ++k) {
        theta(layout.c_size() + static_cast<Eigen::Index>(k)) = data[idx[k]];
    }
    return theta;
}

std::vector<LossPattern> enumerate_patterns(int N, double lambda) {
    const std::size_t count = std::size_t{1} << N;
    std::vector<LossPattern> out(count);
    for (std::size_t j = 0; j < count; ++j) {
        LossPattern& p = out[j];
        p.gamma.resize(static_cast<std::size_t>(N));
        int ones = 0;
        for (int i = 0; i < N; ++i) {
            p.gamma[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>((j >> (N - 1 - i)) & 1U);
            ones += p.gamma[static_cast<std::size_t>(i)];
        }
        p.probability = std::pow(lambda, ones) * std::pow(1.0 - lambda, N - ones);
    }
    return out;
}

StackedOperators build_stacks(const std::vector<Mat>& maps, const Mat& input) {
    const int N = static_cast<int>(maps.size());
    const Eigen::Index n = maps.front().rows();
    const Eigen::Index m = input.cols();
    StackedOperators out;
    out.S = Mat::Zero(N * n, n);
    out.T = Mat::Zero(N * n, N * m);
    out.T_N = Mat::Zero(n, N * m);

    Mat prod = Mat::Identity(n, n);
    for (int i = 0; i < N; ++i) {
        out.S.block(i * n, 0, n, n) = prod;
        prod = maps[static_cast<std::size_t>(i)] * prod;
    }
    out.S_N = prod;

    for (int j = 0; j < N; ++j) {
        Mat cur = input;
        for (int i = j + 1; i <= N; ++i) {
            if (i < N) {
                out.T.block(i * n, j * m, n, m) = cur;
                cur = maps[static_cast<std::size_t>(i)] * cur;
            } else {
                out.T_N.block(0, j * m, n, m) = cur;
            }
        }
    }
    return out;
}

PredictionOperators::PredictionOperators(const SystemModel& m, const Gains& g, const ControlSpec& s,
                                         int max_horizon)
    : model_(m), gains_(g), layout_{s.N, m.nu(), m.ny()}, beta_(s.beta) {
    if (s.N < 1) {
        throw Error("horizon N must be at least 1");
    }
    if (s.N > max_horizon) {
        throw HorizonTooLarge("horizon " + std::to_string(s.N) + " exceeds the pattern enumeration cap " +
                              std::to_string(max_horizon));
    }
    linalg::require_shape(g.K, m.nu(), m.nx(), "K");
    linalg::require_shape(g.M, m.nx(), m.ny(), "M");

    const int N = s.N;
    const int nx = m.nx();

    const Mat phi = m.A + m.B * g.K;
    const std::vector<Mat> phis(static_cast<std::size_t>(N), phi);
    const StackedOperators sb = build_stacks(phis, m.B);
    const StackedOperators sam = build_stacks(phis, m.A * g.M);
    S_phi_ = sb.S;
    T_phiB_ = sb.T;
    S_phi_N_ = sb.S_N;
    T_phiB_N_ = sb.T_N;
    T_phiAM_ = sam.T;
    T_phiAM_N_ = sam.T_N;

    K_blk_ = linalg::repeat_diag(g.K, N);
    M_blk_ = linalg::repeat_diag(g.M, N);
    C_blk_ = linalg::repeat_diag(m.C, N);
    sigma_v_bar_ = linalg::repeat_diag(m.Sigma_v, N);
    sigma_w_bar_ = linalg::repeat_diag(m.Sigma_w, N);

    patterns_ = enumerate_patterns(N, m.lambda);

    const int d = omega_dim();
    const int dN = omega_N_dim();
    const Mat noise_q = linalg::block_diag(sigma_v_bar_, sigma_w_bar_);
    omega_sigma_op_ = Mat::Zero(static_cast<Eigen::Index>(d) * d, nx * nx);
    omega_N_sigma_op_ = Mat::Zero(static_cast<Eigen::Index>(dN) * dN, nx * nx);
    Mat omega_const = Mat::Zero(d, d);
    Mat omega_N_const = Mat::Zero(dN, dN);
    for (const LossPattern& p : patterns_) {
        if (p.probability == 0.0) {
            continue;
        }
        const Mat z = stacked_FG(p);
        const Mat zN = stacked_FNG(p);
        const Mat ze = z.leftCols(nx);
        const Mat zNe = zN.leftCols(nx);
        const Mat zr = z.rightCols(z.cols() - nx);
        const Mat zNr = zN.rightCols(zN.cols() - nx);
        omega_sigma_op_ += p.probability * linalg::kron(ze, ze);
        omega_N_sigma_op_ += p.probability * linalg::kron(zNe, zNe);
        omega_const += p.probability * zr * noise_q * zr.transpose();
        omega_N_const += p.probability * zNr * noise_q * zNr.transpose();
    }
    omega_const_ = linalg::vec(linalg::symmetrize(omega_const));
    omega_N_const_ = linalg::vec(linalg::symmetrize(omega_N_const));

    noise_const_ = linalg::symmetrize(std::pow(s.beta, N + 1) / (1.0 - s.beta) * tail_noise_moment(m, g.M));
}

void PredictionOperators::build_error_blocks(const LossPattern& p, Mat& F, Mat& FN, Mat& G) const {
    const int N = layout_.N;
    const int nx = model_.nx();
    const int ny = model_.ny();
    std::vector<Mat> psis;
    psis.reserve(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) {
        psis.push_back(error_map(model_, gains_.M, p.gamma[static_cast<std::size_t>(i)]));
    }
    const StackedOperators s_am = build_stacks(psis, model_.A * gains_.M);
    const StackedOperators s_d = build_stacks(psis, model_.D);

    Mat gamma_blk = Mat::Zero(N * ny, N * ny);
    for (int i = 0; i < N; ++i) {
        gamma_blk.block(i * ny, i * ny, ny, ny).setIdentity();
        gamma_blk.block(i * ny, i * ny, ny, ny) *= static_cast<double>(p.gamma[static_cast<std::size_t>(i)]);
    }

    const int qd = q_dim();
    F.resize(N * nx, qd);
    F << s_am.S, -s_am.T * gamma_blk, s_d.T;
    FN.resize(nx, qd);
    FN << s_am.S_N, -s_am.T_N * gamma_blk, s_d.T_N;

    Mat v_select = Mat::Zero(N * ny, qd);
    v_select.block(0, nx, N * ny, N * ny) = gamma_blk;
    G = gamma_blk * C_blk_ * F + v_select;
}

Mat PredictionOperators::stacked_FG(const LossPattern& p) const {
    Mat F, FN, G;
    build_error_blocks(p, F, FN, G);
    Mat out(F.rows() + G.rows(), F.cols());
    out << F, G;
    return out;
}

Mat PredictionOperators::stacked_FNG(const LossPattern& p) const {
    Mat F, FN, G;
    build_error_blocks(p, F, FN, G);
    Mat out(FN.rows() + G.rows(), FN.cols());
    out << FN, G;
    return out;
}

Mat PredictionOperators::full_omega_operator(bool terminal) const {
    const int d = terminal ? omega_N_dim() : omega_dim();
    const int qd = q_dim();
    Mat op = Mat::Zero(static_cast<Eigen::Index>(d) * d, static_cast<Eigen::Index>(qd) * qd);
    for (const LossPattern& p : patterns_) {
        const Mat z = terminal ? stacked_FNG(p) : stacked_FG(p);
        op += p.probability * linalg::kron(z, z);
    }
    return op;
}

Mat PredictionOperators::q_second_moment(const Mat& Sigma) const {
    return linalg::block_diag(Sigma, sigma_v_bar_, sigma_w_bar_);
}

OmegaPair compute_omega(const PredictionOperators& ops, const Mat& Sigma) {
    linalg::require_shape(Sigma, ops.nx(), ops.nx(), "Sigma");
    const Vec s = linalg::vec(Sigma);
    const int d = ops.omega_dim();
    const int dN = ops.omega_N_dim();
    OmegaPair out;
    out.Omega = linalg::symmetrize(linalg::unvec(ops.omega_sigma_op() * s + ops.omega_const(), d, d));
    out.Omega_N = linalg::symmetrize(linalg::unvec(ops.omega_N_sigma_op() * s + ops.omega_N_const(), dN, dN));
    return out;
}

OmegaPair compute_omega_enumerated(const PredictionOperators& ops, const Mat& Sigma) {
    linalg::require_shape(Sigma, ops.nx(), ops.nx(), "Sigma");
    const Mat qq = ops.q_second_moment(Sigma);
    OmegaPair out{Mat::Zero(ops.omega_dim(), ops.omega_dim()), Mat::Zero(ops.omega_N_dim(), ops.omega_N_dim())};
    for (const LossPattern& p : ops.patterns()) {
        const Mat z = ops.stacked_FG(p);
        const Mat zN = ops.stacked_FNG(p);
        out.Omega += p.probability * z * qq * z.transpose();
        out.Omega_N += p.probability * zN * qq * zN.transpose();
    }
    out.Omega = linalg::symmetrize(out.Omega);
    out.Omega_N = linalg::symmetrize(out.Omega_N);
    return out;
}

MomentSet compute_moments(const PredictionOperators& ops, const Policy& theta, const Vec& x_hat,
                          const OmegaPair& omega) {
    const int N = ops.N();
    const int nx = ops.nx();
    const int ny = ops.ny();
    const int ne = N * nx;
    const int nz = N * ny;
    if (x_hat.size() != nx) {
        throw DimensionMismatch("x_hat has wrong length");
    }
    linalg::require_shape(theta.L, N * ops.nu(), nz, "policy L");
    linalg::require_shape(omega.Omega, ne + nz, ne + nz, "Omega");
    linalg::require_shape(omega.Omega_N, nx + nz, nx + nz, "Omega_N");

    MomentSet ms;
    ms.Omega = omega.Omega;
    ms.Omega_N = omega.Omega_N;
    ms.pi = ops.S_Phi() * x_hat + ops.T_PhiB() * theta.c;
    ms.Pi = ops.T_PhiB() * theta.L + ops.T_PhiAM();

    const auto oee = omega.Omega.topLeftCorner(ne, ne);
    const auto oez = omega.Omega.topRightCorner(ne, nz);
    const auto ozz = omega.Omega.bottomRightCorner(nz, nz);

    ms.X.resize(2 * ne, 2 * ne);
    ms.X.topLeftCorner(ne, ne) = oee;
    ms.X.topRightCorner(ne, ne) = oez * ms.Pi.transpose();
    ms.X.bottomLeftCorner(ne, ne) = ms.X.topRightCorner(ne, ne).transpose();
    ms.X.bottomRightCorner(ne, ne) = ms.pi * ms.pi.transpose() + ms.Pi * ozz * ms.Pi.transpose();
    ms.X = linalg::symmetrize(ms.X);

    ms.Exx = ms.X.topLeftCorner(ne, ne) + ms.X.topRightCorner(ne, ne) + ms.X.bottomLeftCorner(ne, ne) +
             ms.X.bottomRightCorner(ne, ne);
    ms.Exx = linalg::symmetrize(ms.Exx);

    ms.Eu = ops.K_blk() * ms.pi + theta.c;
    const Mat gain = theta.L + ops.K_blk() * ms.Pi;
    ms.U2 = linalg::symmetrize(ms.Eu * ms.Eu.transpose() + gain * ozz * gain.transpose());

    ms.pi_N = ops.S_Phi_N() * x_hat + ops.T_PhiB_N() * theta.c;
    ms.Pi_N = ops.T_PhiB_N() * theta.L + ops.T_PhiAM_N();
    const auto nee = omega.Omega_N.topLeftCorner(nx, nx);
    const auto nez = omega.Omega_N.topRightCorner(nx, nz);
    const auto nzz = omega.Omega_N.bottomRightCorner(nz, nz);
    ms.X_N.resize(2 * nx, 2 * nx);
    ms.X_N.topLeftCorner(nx, nx) = nee;
    ms.X_N.topRightCorner(nx, nx) = nez * ms.Pi_N.transpose();
    ms.X_N.bottomLeftCorner(nx, nx) = ms.X_N.topRightCorner(nx, nx).transpose();
    ms.X_N.bottomRightCorner(nx, nx) = ms.pi_N * ms.pi_N.transpose() + ms.Pi_N * nzz * ms.Pi_N.transpose();
    ms.X_N = linalg::symmetrize(ms.X_N);
    return ms;
}

Mat sigma_update(const SystemModel& m, const Mat& M, const Mat& Sigma, int gamma) {
    const Mat psi = error_map(m, M, gamma);
    const Mat am = m.A * M;
    Mat next = psi * Sigma * psi.transpose() + m.D * m.Sigma_w * m.D.transpose();
    if (gamma != 0) {
        next += am * m.Sigma_v * am.transpose();
    }
    return linalg::symmetrize(next);
}

Mat tail_noise_moment(const SystemModel& m, const Mat& M) {
    const int nx = m.nx();
    const int ny = m.ny();
    const Mat noise_vw = linalg::block_diag(m.Sigma_v, m.Sigma_w);
    Mat expected = Mat::Zero(2 * nx, 2 * nx);
    for (int gamma = 0; gamma <= 1; ++gamma) {
        const double prob = gamma == 1 ? m.lambda : 1.0 - m.lambda;
        Mat dt = Mat::Zero(2 * nx, ny + m.nw());
        const Mat am = static_cast<double>(gamma) * m.A * M;
        dt.topLeftCorner(nx, ny) = -am;
        dt.topRightCorner(nx, m.nw()) = m.D;
        dt.bottomLeftCorner(nx, ny) = am;
        expected += prob * dt * noise_vw * dt.transpose();
    }
    return linalg::symmetrize(expected);
}

double expected_stage_constraint(const Mat& H, const Vec& x_hat, const Mat& Sigma) {
    return (H * x_hat).squaredNorm() + (H.transpose() * H * Sigma).trace();
}

}  // namespace ofmpc
