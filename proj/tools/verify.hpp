#pragma once

#include "ofmpc/sim.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ofmpc::tools {

struct VerifyCheck {
    std::string name;
    double value = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    bool certificate = false;  ///< failure maps to the certificate exit code
};

struct VerifyOptions {
    std::uint64_t seed = 1;
    long identity_samples = 20000;
};

/// Gain certificates, Omega through both paths, Lyapunov adjoint identities,
/// assembled forms against term-by-term evaluation, KKT of the first plan,
/// and the sampled one-step identities of the receding-horizon law.
std::vector<VerifyCheck> run_verify(const SimConfig& cfg, const MpcDesign& design, const VerifyOptions& opt);

struct OneStepSample {
    double lhs = 0.0, lhs_se = 0.0;  ///< beta * mean of next-step value
    double rhs = 0.0;                ///< current value minus expected stage term
};

struct OneStepIdentities {
    OneStepSample constraint;
    OneStepSample cost;
};

/// Samples one closed-loop step from (x_hat, Sigma) with x ~ N(x_hat, Sigma)
/// and compares beta E{mu+} with mu - E{||Hx||^2} and beta E{J(theta_circ)}
/// with J - E{stage cost}. theta is the plan at (x_hat, Sigma).
OneStepIdentities sample_one_step(const MpcDesign& design, const Policy& theta, const Vec& x_hat, const Mat& Sigma,
                                  long samples, std::uint64_t seed);

}  // namespace ofmpc::tools
