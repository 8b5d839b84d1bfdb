#include "ofmpc/assembly.hpp"

#include <cmath>
#include <sstream>

namespace ofmpc {

namespace {

Mat ones_kron(const Mat& w) {
    const Eigen::Index n = w.rows();
    Mat out(2 * n, 2 * n);
    out << w, w, w, w;
    return out;
}

}  // namespace

Mat LyapunovMaps::solve_terminal(const Mat& Xi) const {
    const Eigen::Index n = Xi.rows();
    return linalg::symmetrize(linalg::unvec(lifted_inverse * linalg::vec(Xi), n, n));
}

Mat dual_lyapunov_weight(const SystemModel& m, const Gains& g, double beta, const Mat& W,
                         const LyapunovOptions& opt, long* iterations) {
    const Mat j0 = joint_map(m, g.K, g.M, 0);
    const Mat j1 = joint_map(m, g.K, g.M, 1);
    const double p1 = m.lambda;
    const double p0 = 1.0 - m.lambda;
    Mat Wt = W;
    for (long it = 1; it <= opt.max_iter; ++it) {
        Mat next = beta * (p0 * j0.transpose() * Wt * j0 + p1 * j1.transpose() * Wt * j1) + W;
        next = linalg::symmetrize(next);
        if (!next.allFinite()) {
            throw LyapunovIllPosed("dual Lyapunov iteration diverged");
        }
        const double scale = std::max(1.0, next.cwiseAbs().maxCoeff());
        const bool done = (next - Wt).cwiseAbs().maxCoeff() <= opt.tol * scale;
        Wt = std::move(next);
        if (done) {
            if (iterations != nullptr) {
                *iterations = it;
            }
            return Wt;
        }
    }
    throw LyapunovIllPosed("dual Lyapunov iteration hit the iteration cap");
}

LyapunovMaps build_lyapunov_maps(const SystemModel& m, const Gains& g, const ControlSpec& s,
                                 const LyapunovOptions& opt) {
    LyapunovMaps maps;
    maps.radius = check_discounted_lyapunov(m, g.K, g.M, s.beta);
    if (!(maps.radius < 1.0)) {
        std::ostringstream os;
        os << "discounted mean-square radius " << maps.radius << " is not below one";
        throw LyapunovIllPosed(os.str());
    }
    const int n2 = 2 * m.nx();
    const Mat j0 = joint_map(m, g.K, g.M, 0);
    const Mat j1 = joint_map(m, g.K, g.M, 1);
    const Mat lifted = Mat::Identity(n2 * n2, n2 * n2) -
                       s.beta * ((1.0 - m.lambda) * linalg::kron(j0, j0) + m.lambda * linalg::kron(j1, j1));
    maps.lifted_inverse = lifted.partialPivLu().inverse();

    maps.W_cost = ones_kron(s.Q);
    maps.W_cost.bottomRightCorner(m.nx(), m.nx()) += g.K.transpose() * s.R * g.K;
    maps.W_con = ones_kron(s.H.transpose() * s.H);

    long it_cost = 0;
    long it_con = 0;
    maps.W_cost_dual = dual_lyapunov_weight(m, g, s.beta, maps.W_cost, opt, &it_cost);
    maps.W_con_dual = dual_lyapunov_weight(m, g, s.beta, maps.W_con, opt, &it_con);
    maps.dual_iterations = std::max(it_cost, it_con);

    maps.tail_noise = std::pow(s.beta, s.N + 1) / (1.0 - s.beta) * tail_noise_moment(m, g.M);
    maps.noise_const_cost = (maps.W_cost_dual * maps.tail_noise).trace();
    maps.noise_const_con = (maps.W_con_dual * maps.tail_noise).trace();
    return maps;
}

QuadraticForm QuadraticForm::zero(int dim) {
    return QuadraticForm{Mat::Zero(dim, dim), Vec::Zero(dim), 0.0};
}

double QuadraticForm::value(const Vec& theta) const {
    return 0.5 * theta.dot(hess * theta) + lin.dot(theta) + constant;
}

QuadraticForm QuadraticForm::scaled(double alpha) const {
    return QuadraticForm{alpha * hess, alpha * lin, alpha * constant};
}

double evaluate_form(const QuadraticForm& f, const Vec& theta) {
    if (theta.size() != f.lin.size() || f.hess.rows() != f.lin.size() || f.hess.cols() != f.lin.size()) {
        throw DimensionMismatch("evaluate_form: dimension mismatch");
    }
    return f.value(theta);
}

QuadraticForm probe_quadratic_form(const std::function<double(const Vec&)>& f, int dim) {
    QuadraticForm out = QuadraticForm::zero(dim);
    const Vec zero = Vec::Zero(dim);
    out.constant = f(zero);
    Vec plus(dim), minus(dim);
    for (int i = 0; i < dim; ++i) {
        Vec e = Vec::Unit(dim, i);
        plus(i) = f(e);
        minus(i) = f(-e);
        out.lin(i) = 0.5 * (plus(i) - minus(i));
        out.hess(i, i) = plus(i) + minus(i) - 2.0 * out.constant;
    }
    for (int i = 0; i < dim; ++i) {
        for (int j = i + 1; j < dim; ++j) {
            const Vec e = Vec::Unit(dim, i) + Vec::Unit(dim, j);
            // f(ei + ej) = 0.5 (Hii + Hjj) + Hij + gi + gj + c
            const double hij = f(e) - 0.5 * (out.hess(i, i) + out.hess(j, j)) - out.lin(i) - out.lin(j) -
                               out.constant;
            out.hess(i, j) = hij;
            out.hess(j, i) = hij;
        }
    }
    return out;
}

Mat discounted_blocks(const Mat& W, double beta, int N) {
    Mat out = Mat::Zero(W.rows() * N, W.cols() * N);
    double scale = 1.0;
    for (int i = 0; i < N; ++i) {
        out.block(i * W.rows(), i * W.cols(), W.rows(), W.cols()) = scale * W;
        scale *= beta;
    }
    return out;
}

Assembler::Assembler(const PredictionOperators& ops, const LyapunovMaps& maps, const ControlSpec& spec)
    : ops_(&ops), maps_(&maps), beta_N_(std::pow(spec.beta, spec.N)) {
    const int N = ops.N();
    V_ = ops.K_blk() * ops.T_PhiB() + Mat::Identity(N * ops.nu(), N * ops.nu());
    l_idx_ = ops.layout().l_vec_indices();
    cost_ = make_weights(discounted_blocks(spec.Q, spec.beta, N), discounted_blocks(spec.R, spec.beta, N),
                         maps.W_cost_dual, maps.noise_const_cost);
    con_ = make_weights(discounted_blocks(spec.H.transpose() * spec.H, spec.beta, N), Mat(), maps.W_con_dual,
                        maps.noise_const_con);
}

Assembler::Weights Assembler::make_weights(const Mat& Ad, const Mat& Rd, const Mat& Wt, double noise) const {
    const PredictionOperators& ops = *ops_;
    const int nx = ops.nx();
    Weights w;
    w.Ad = Ad;
    w.Rd = Rd;
    w.Wt = Wt;
    w.noise = noise;
    w.has_input_weight = Rd.size() > 0;

    const Mat& T = ops.T_PhiB();
    const Mat& TN = ops.T_PhiB_N();
    const Mat& S = ops.S_Phi();
    const Mat& SN = ops.S_Phi_N();
    const Mat W22 = Wt.bottomRightCorner(nx, nx);

    w.Pc = T.transpose() * Ad * T;
    w.Jc = T.transpose() * Ad * S;
    w.Kc = S.transpose() * Ad * S;
    if (w.has_input_weight) {
        const Mat KS = ops.K_blk() * S;
        w.Pc += V_.transpose() * Rd * V_;
        w.Jc += V_.transpose() * Rd * KS;
        w.Kc += KS.transpose() * Rd * KS;
    }
    w.PN = TN.transpose() * W22 * TN;
    w.Jc += beta_N_ * TN.transpose() * W22 * SN;
    w.Kc += beta_N_ * SN.transpose() * W22 * SN;
    w.hess_c = linalg::symmetrize(2.0 * (w.Pc + beta_N_ * w.PN));
    w.Kc = linalg::symmetrize(w.Kc);
    return w;
}

QuadraticForm Assembler::assemble(const Weights& w, const Vec& x_hat, const OmegaPair& omega) const {
    const PredictionOperators& ops = *ops_;
    const PolicyLayout& layout = ops.layout();
    const int N = ops.N();
    const int nx = ops.nx();
    const int ne = N * nx;
    const int nz = N * ops.ny();
    const int rows = N * ops.nu();
    const int nc = layout.c_size();
    const int nl = layout.l_size();
    if (x_hat.size() != nx) {
        throw DimensionMismatch("x_hat has wrong length");
    }

    QuadraticForm f = QuadraticForm::zero(layout.size());

    // Perturbation block: Hessian fixed offline, gradient and constant
    // through x_hat only.
    f.hess.topLeftCorner(nc, nc) = w.hess_c;
    f.lin.head(nc) = 2.0 * w.Jc * x_hat;
    f.constant = x_hat.dot(w.Kc * x_hat);

    // Innovation-gain block.
    const auto oee = omega.Omega.topLeftCorner(ne, ne);
    const auto oez = omega.Omega.topRightCorner(ne, nz);
    const auto ozz = omega.Omega.bottomRightCorner(nz, nz);
    const auto nee = omega.Omega_N.topLeftCorner(nx, nx);
    const auto nez = omega.Omega_N.topRightCorner(nx, nz);
    const auto nzz = omega.Omega_N.bottomRightCorner(nz, nz);

    const Mat& T = ops.T_PhiB();
    const Mat& TN = ops.T_PhiB_N();
    const Mat& Pi0 = ops.T_PhiAM();
    const Mat& Pi0N = ops.T_PhiAM_N();
    const Mat W11 = w.Wt.topLeftCorner(nx, nx);
    const Mat W12 = w.Wt.topRightCorner(nx, nx);
    const Mat W21 = w.Wt.bottomLeftCorner(nx, nx);
    const Mat W22 = w.Wt.bottomRightCorner(nx, nx);

    // d value / d L over the full (unrestricted) matrix at L = 0.
    const Mat Pi0_ozz = Pi0 * ozz;
    const Mat Pi0N_nzz = Pi0N * nzz;
    Mat grad = T.transpose() * w.Ad * (oez + Pi0_ozz) + beta_N_ * TN.transpose() * (W21 * nez + W22 * Pi0N_nzz);
    double c_l = (w.Ad * oee).trace() + 2.0 * (w.Ad * oez * Pi0.transpose()).trace() +
                 (w.Ad * Pi0_ozz * Pi0.transpose()).trace() +
                 beta_N_ * ((W11 * nee).trace() + 2.0 * (W12 * Pi0N * nez.transpose()).trace() +
                            (W22 * Pi0N_nzz * Pi0N.transpose()).trace());
    if (w.has_input_weight) {
        const Mat KPi0 = ops.K_blk() * Pi0;
        grad += V_.transpose() * w.Rd * KPi0 * ozz;
        c_l += (w.Rd * KPi0 * ozz * KPi0.transpose()).trace();
    }
    grad *= 2.0;

    // Hessian over vec(L): 2 [ozz (x) Pc + beta^N nzz (x) PN], restricted to
    // the free entries.
    for (int a = 0; a < nl; ++a) {
        const int ia = l_idx_[static_cast<std::size_t>(a)];
        const int ca = ia / rows;
        const int ra = ia % rows;
        f.lin(nc + a) = grad(ra, ca);
        for (int b = a; b < nl; ++b) {
            const int ib = l_idx_[static_cast<std::size_t>(b)];
            const int cb = ib / rows;
            const int rb = ib % rows;
            const double h = 2.0 * (ozz(ca, cb) * w.Pc(ra, rb) + beta_N_ * nzz(ca, cb) * w.PN(ra, rb));
            f.hess(nc + a, nc + b) = h;
            f.hess(nc + b, nc + a) = h;
        }
    }
    f.constant += c_l + w.noise;
    return f;
}

QuadraticForm Assembler::cost(const Vec& x_hat, const OmegaPair& omega) const {
    return assemble(cost_, x_hat, omega);
}

QuadraticForm Assembler::constraint(const Vec& x_hat, const OmegaPair& omega) const {
    return assemble(con_, x_hat, omega);
}

QuadraticForm assemble_cost(const PredictionOperators& ops, const LyapunovMaps& maps, const ControlSpec& spec,
                            const OmegaPair& omega, const Vec& x_hat) {
    return Assembler(ops, maps, spec).cost(x_hat, omega);
}

QuadraticForm assemble_constraint(const PredictionOperators& ops, const LyapunovMaps& maps,
                                  const ControlSpec& spec, const OmegaPair& omega, const Vec& x_hat) {
    return Assembler(ops, maps, spec).constraint(x_hat, omega);
}

DirectEvaluation evaluate_direct(const PredictionOperators& ops, const LyapunovMaps& maps, const ControlSpec& spec,
                                 const Policy& theta, const Vec& x_hat, const OmegaPair& omega) {
    const int N = ops.N();
    const MomentSet ms = compute_moments(ops, theta, x_hat, omega);
    const Mat Qd = discounted_blocks(spec.Q, spec.beta, N);
    const Mat Rd = discounted_blocks(spec.R, spec.beta, N);
    const Mat Hd = discounted_blocks(spec.H.transpose() * spec.H, spec.beta, N);

    const Mat Xi = std::pow(spec.beta, N) * ms.X_N + maps.tail_noise;
    DirectEvaluation out;
    out.P = maps.solve_terminal(Xi);
    out.cost = (ones_kron(Qd) * ms.X).trace() + (Rd * ms.U2).trace() + (maps.W_cost * out.P).trace();
    out.constraint = (ones_kron(Hd) * ms.X).trace() + (maps.W_con * out.P).trace();
    return out;
}

}  // namespace ofmpc
