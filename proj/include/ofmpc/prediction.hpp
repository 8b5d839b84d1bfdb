#pragma once

#include "ofmpc/model.hpp"

#include <cstdint>
#include <vector>

namespace ofmpc {

class HorizonTooLarge : public Error {
public:
    using Error::Error;
};

/// Dimensions of the decision variable theta = (c, L) and its flattening.
///
/// c stacks c_0..c_{N-1} (each n_u). L is the (N n_u) x (N n_y) block lower
/// triangular innovation gain. The flat vector is [c; entries of L inside the
/// lower block triangle in column-major order].
struct PolicyLayout {
    int N = 1;
    int nu = 1;
    int ny = 1;

    int c_size() const { return N * nu; }
    int l_size() const { return nu * ny * N * (N + 1) / 2; }
    int size() const { return c_size() + l_size(); }

    /// Column-major indices into vec(L) of the free entries, in flat order.
    std::vector<int> l_vec_indices() const;
};

/// Perturbation sequence and innovation-feedback gains of the predicted
/// control law  u_i = K xhat_i + c_i + sum_{j<=i} gamma_j L_{i,j} (y_j - C xhat_j).
struct Policy {
    Vec c;
    Mat L;

    static Policy zero(const PolicyLayout& layout);
    static Policy unflatten(const PolicyLayout& layout, const Vec& theta);
    Vec flatten(const PolicyLayout& layout) const;

    Mat block(const PolicyLayout& layout, int i, int j) const {
        return L.block(i * layout.nu, j * layout.ny, layout.nu, layout.ny);
    }
    Vec c_block(const PolicyLayout& layout, int i) const { return c.segment(i * layout.nu, layout.nu); }
};

/// A realization of the N predicted loss indicators with its probability.
struct LossPattern {
    std::vector<std::uint8_t> gamma;
    double probability = 0.0;
};

/// Enumerates the 2^N patterns. Pattern j has gamma_i equal to bit (N-1-i)
/// of j, so j = 0 is all-lost and j = 2^N - 1 is all-received.
std::vector<LossPattern> enumerate_patterns(int N, double lambda);

/// Predicted stacks for a sequence of transition matrices:
/// S rows are prod_{i-1..0}, T has block (i, j) = prod_{i-1..j+1} * B for
/// j < i; S_N and T_N are the N-step counterparts.
struct StackedOperators {
    Mat S, T, S_N, T_N;
};
StackedOperators build_stacks(const std::vector<Mat>& maps, const Mat& input);

/// Second moments of (error stack, innovation stack) and of
/// (terminal error, innovation stack).
struct OmegaPair {
    Mat Omega;
    Mat Omega_N;
};

/// Offline prediction operators for a fixed (model, gains, horizon).
/// Immutable after construction.
class PredictionOperators {
public:
    static constexpr int kDefaultMaxHorizon = 12;

    PredictionOperators(const SystemModel& m, const Gains& g, const ControlSpec& s,
                        int max_horizon = kDefaultMaxHorizon);

    const SystemModel& model() const { return model_; }
    const Gains& gains() const { return gains_; }
    const PolicyLayout& layout() const { return layout_; }
    int N() const { return layout_.N; }
    int nx() const { return model_.nx(); }
    int nu() const { return model_.nu(); }
    int ny() const { return model_.ny(); }
    double beta() const { return beta_; }

    /// Rows of Omega: N n_x error entries then N n_y innovation entries.
    int omega_dim() const { return N() * (nx() + ny()); }
    int omega_N_dim() const { return nx() + N() * ny(); }
    /// Length of q = (x - xhat, v stack, w stack).
    int q_dim() const { return nx() + N() * (ny() + model_.nw()); }

    // Estimate-side stacks driven by Phi = A + B K.
    const Mat& S_Phi() const { return S_phi_; }
    const Mat& T_PhiB() const { return T_phiB_; }
    const Mat& T_PhiAM() const { return T_phiAM_; }  ///< T_(Phi,A) * blkdiag(M)
    const Mat& S_Phi_N() const { return S_phi_N_; }
    const Mat& T_PhiB_N() const { return T_phiB_N_; }
    const Mat& T_PhiAM_N() const { return T_phiAM_N_; }

    const Mat& K_blk() const { return K_blk_; }
    const Mat& M_blk() const { return M_blk_; }
    const Mat& C_blk() const { return C_blk_; }

    const std::vector<LossPattern>& patterns() const { return patterns_; }

    /// [F; G](pattern) and [F_N; G](pattern): maps from q to the stacked
    /// (error, innovation) vectors.
    Mat stacked_FG(const LossPattern& p) const;
    Mat stacked_FNG(const LossPattern& p) const;

    /// vec(Omega) = op * vec(Sigma) + const. This is the aggregate
    /// sum_j P_j [F;G]_j (x) [F;G]_j applied to vec(blkdiag(Sigma, Sv_bar, Sw_bar)),
    /// with the fixed noise blocks folded into the constant.
    const Mat& omega_sigma_op() const { return omega_sigma_op_; }
    const Vec& omega_const() const { return omega_const_; }
    const Mat& omega_N_sigma_op() const { return omega_N_sigma_op_; }
    const Vec& omega_N_const() const { return omega_N_const_; }

    /// The unreduced aggregate acting on vec(blkdiag(Sigma, Sv_bar, Sw_bar)).
    /// Built on demand; its size grows as (N (n_x + n_y) * q_dim)^2.
    Mat full_omega_operator(bool terminal) const;

    /// blkdiag(Sigma, I (x) Sigma_v, I (x) Sigma_w).
    Mat q_second_moment(const Mat& Sigma) const;

    /// beta^{N+1}/(1-beta) E{Dt(gamma) diag(Sv, Sw) Dt(gamma)'}.
    const Mat& noise_const() const { return noise_const_; }

private:
    SystemModel model_;
    Gains gains_;
    PolicyLayout layout_;
    double beta_;

    Mat S_phi_, T_phiB_, T_phiAM_, S_phi_N_, T_phiB_N_, T_phiAM_N_;
    Mat K_blk_, M_blk_, C_blk_;
    std::vector<LossPattern> patterns_;
    Mat omega_sigma_op_, omega_N_sigma_op_;
    Vec omega_const_, omega_N_const_;
    Mat noise_const_;
    Mat sigma_v_bar_, sigma_w_bar_;

    void build_error_blocks(const LossPattern& p, Mat& F, Mat& FN, Mat& G) const;
};

/// Omega and Omega_N through the precomputed aggregate (one matrix-vector
/// product each).
OmegaPair compute_omega(const PredictionOperators& ops, const Mat& Sigma);

/// Reference path: explicit summation over every loss pattern.
OmegaPair compute_omega_enumerated(const PredictionOperators& ops, const Mat& Sigma);

struct MomentSet {
    Vec pi;     ///< E{xhat stack} = E{x stack}
    Mat Pi;     ///< innovation sensitivity of the estimate stack
    Mat Omega;  ///< E{[e; zeta][e; zeta]'}
    Mat X;      ///< E{[e; xhat][e; xhat]'} over the horizon
    Mat Exx;    ///< E{x x'} over the horizon
    Vec Eu;     ///< E{u}
    Mat U2;     ///< E{u u'}
    Vec pi_N;
    Mat Pi_N;
    Mat Omega_N;
    Mat X_N;    ///< E{[e_N; xhat_N][e_N; xhat_N]'}
};

MomentSet compute_moments(const PredictionOperators& ops, const Policy& theta, const Vec& x_hat,
                          const OmegaPair& omega);

/// Sigma+ = Psi(gamma) Sigma Psi(gamma)' + gamma A M Sv M' A' + D Sw D'.
Mat sigma_update(const SystemModel& m, const Mat& M, const Mat& Sigma, int gamma);

/// E{Dt(gamma) diag(Sv, Sw) Dt(gamma)'} for the joint (error, estimate)
/// dynamics beyond the horizon, Dt(gamma) = [[-gamma A M, D], [gamma A M, 0]].
Mat tail_noise_moment(const SystemModel& m, const Mat& M);

/// E{||H x||^2} for x with mean x_hat and error second moment Sigma.
double expected_stage_constraint(const Mat& H, const Vec& x_hat, const Mat& Sigma);

}  // namespace ofmpc
