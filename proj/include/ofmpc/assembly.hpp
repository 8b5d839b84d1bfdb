#pragma once

#include "ofmpc/prediction.hpp"

#include <functional>

namespace ofmpc {

class LyapunovIllPosed : public Error {
public:
    using Error::Error;
};

/// Offline maps for the infinite tail beyond the horizon. The terminal sum
/// P = sum_{i>=N} beta^i X_i solves P = beta E{Pj P Pj'} + Xi with
/// Xi = beta^N X_N + tail noise. Dual weights W~ satisfy
/// tr(W P(Xi)) = tr(W~ Xi).
struct LyapunovMaps {
    Mat lifted_inverse;  ///< [I - beta E{Pj (x) Pj}]^-1 on vec(Xi)
    Mat W_cost;          ///< [[Q, Q], [Q, Q + K'RK]]
    Mat W_con;           ///< 1_{2x2} (x) H'H
    Mat W_cost_dual;
    Mat W_con_dual;
    Mat tail_noise;      ///< beta^{N+1}/(1-beta) E{Dt diag(Sv, Sw) Dt'}
    double noise_const_cost = 0.0;
    double noise_const_con = 0.0;
    double radius = 0.0;
    long dual_iterations = 0;

    /// Solves P = beta E{Pj P Pj'} + Xi through the lifted inverse.
    Mat solve_terminal(const Mat& Xi) const;
};

struct LyapunovOptions {
    double tol = 1e-12;
    long max_iter = 1'000'000;
};

/// Throws LyapunovIllPosed when the discounted joint map is not a contraction.
LyapunovMaps build_lyapunov_maps(const SystemModel& m, const Gains& g, const ControlSpec& s,
                                 const LyapunovOptions& opt = {});

/// Adjoint of the terminal Lyapunov map: W~ = beta E{Pj' W~ Pj} + W by
/// fixed-point iteration.
Mat dual_lyapunov_weight(const SystemModel& m, const Gains& g, double beta, const Mat& W,
                         const LyapunovOptions& opt = {}, long* iterations = nullptr);

/// value(theta) = 0.5 theta' hess theta + lin' theta + constant.
struct QuadraticForm {
    Mat hess;
    Vec lin;
    double constant = 0.0;

    static QuadraticForm zero(int dim);
    int dim() const { return static_cast<int>(lin.size()); }
    double value(const Vec& theta) const;
    Vec gradient(const Vec& theta) const { return hess * theta + lin; }
    QuadraticForm scaled(double alpha) const;
};

/// Throws DimensionMismatch when sizes disagree.
double evaluate_form(const QuadraticForm& f, const Vec& theta);

/// Recovers a quadratic form from point evaluations by probing the
/// coordinate directions.
QuadraticForm probe_quadratic_form(const std::function<double(const Vec&)>& f, int dim);

/// Builds the discounted cost and constraint of the receding-horizon
/// problem as explicit quadratic forms in the flattened policy. All pieces
/// that do not depend on the online data (x_hat, Sigma) are cached.
class Assembler {
public:
    Assembler(const PredictionOperators& ops, const LyapunovMaps& maps, const ControlSpec& spec);

    QuadraticForm cost(const Vec& x_hat, const OmegaPair& omega) const;
    QuadraticForm constraint(const Vec& x_hat, const OmegaPair& omega) const;

    const PredictionOperators& ops() const { return *ops_; }
    const LyapunovMaps& maps() const { return *maps_; }

private:
    struct Weights {
        Mat Ad;        // stage weight on x over the horizon
        Mat Rd;        // stage weight on u over the horizon (may be zero)
        Mat Wt;        // dual terminal weight
        Mat Pc;        // T'Ad T + V'Rd V
        Mat PN;        // T_N' W22 T_N
        Mat hess_c;
        Mat Jc;        // lin_c = 2 Jc x_hat
        Mat Kc;        // const_c = x_hat' Kc x_hat
        double noise = 0.0;
        bool has_input_weight = false;
    };

    Weights make_weights(const Mat& Ad, const Mat& Rd, const Mat& Wt, double noise) const;
    QuadraticForm assemble(const Weights& w, const Vec& x_hat, const OmegaPair& omega) const;

    const PredictionOperators* ops_;
    const LyapunovMaps* maps_;
    double beta_N_;
    Mat V_;  // K_blk T + I
    std::vector<int> l_idx_;
    Weights cost_, con_;
};

QuadraticForm assemble_cost(const PredictionOperators& ops, const LyapunovMaps& maps, const ControlSpec& spec,
                            const OmegaPair& omega, const Vec& x_hat);
QuadraticForm assemble_constraint(const PredictionOperators& ops, const LyapunovMaps& maps,
                                  const ControlSpec& spec, const OmegaPair& omega, const Vec& x_hat);

/// Term-by-term evaluation from the moments with the terminal sum P solved
/// explicitly (no dual weights). Used to cross-check the assembled forms.
struct DirectEvaluation {
    double cost = 0.0;
    double constraint = 0.0;
    Mat P;  ///< explicit terminal sum
};
DirectEvaluation evaluate_direct(const PredictionOperators& ops, const LyapunovMaps& maps, const ControlSpec& spec,
                                 const Policy& theta, const Vec& x_hat, const OmegaPair& omega);

/// blkdiag(W, beta W, ..., beta^{N-1} W).
Mat discounted_blocks(const Mat& W, double beta, int N);

}  // namespace ofmpc
