#pragma once

#include "ofmpc/solver.hpp"

#include <memory>
#include <optional>

namespace ofmpc {

/// Raised at k = 0 when no policy meets the budget. Carries the smallest
/// budget for which the problem would be feasible.
class InfeasibleAtStart : public Error {
public:
    InfeasibleAtStart(const std::string& what, double min_epsilon) : Error(what), min_epsilon_(min_epsilon) {}
    double min_epsilon() const { return min_epsilon_; }

private:
    double min_epsilon_;
};

class MissingMeasurement : public Error {
public:
    using Error::Error;
};

/// A plan was applied at a time index other than the one it was made for.
class StalePlan : public Error {
public:
    using Error::Error;
};

/// Offline artifacts shared by every closed loop that runs the same design.
/// Immutable once built; safe to share across threads.
class MpcDesign {
public:
    /// Validates the inputs, synthesizes K and M, and throws
    /// NotStabilizable / NotDetectable / RiccatiDiverged / LyapunovIllPosed.
    static std::shared_ptr<const MpcDesign> build(const SystemModel& m, const ControlSpec& s);
    static std::shared_ptr<const MpcDesign> build(const SystemModel& m, const ControlSpec& s, const Gains& g);

    const SystemModel& model() const { return model_; }
    const ControlSpec& spec() const { return spec_; }
    const Gains& gains() const { return gains_; }
    const PredictionOperators& ops() const { return ops_; }
    const LyapunovMaps& maps() const { return maps_; }
    const Assembler& assembler() const { return assembler_; }
    const PolicyLayout& layout() const { return ops_.layout(); }

    /// Cost and constraint forms at (x_hat, Sigma).
    QcqpProblem problem(const Vec& x_hat, const Mat& Sigma, double budget) const;

    MpcDesign(const MpcDesign&) = delete;
    MpcDesign& operator=(const MpcDesign&) = delete;

private:
    MpcDesign(const SystemModel& m, const ControlSpec& s, const Gains& g);

    SystemModel model_;
    ControlSpec spec_;
    Gains gains_;
    PredictionOperators ops_;
    LyapunovMaps maps_;
    Assembler assembler_;
};

struct ControllerState {
    long k = 0;
    Vec x_hat;
    Mat Sigma;
    double mu = 0.0;
    Policy theta_star;  ///< from the most recent plan
    double J = 0.0;     ///< optimal cost of the most recent plan
};

/// k = 0, mu = epsilon, estimate and error moment from the belief.
ControllerState init(const InitialBelief& belief, const ControlSpec& spec);

struct PlanOptions {
    QcqpTolerances tol;
    bool warm_start = false;  ///< seed the solver with the tail policy
};

/// Result of planning at time k. Only (x_hat_k, Sigma_k, mu_k) are used, so a
/// plan cannot depend on the measurement of step k.
struct Plan {
    long k = 0;
    Policy theta;
    double J = 0.0;
    double constraint_value = 0.0;
    SolveStatus status = SolveStatus::max_iter;
    bool fallback = false;       ///< solver failed and the tail policy was used
    bool tail_feasible = true;   ///< the supplied tail policy met the budget
    int iterations = 0;
};

/// Solves the receding-horizon problem. At k = 0 an infeasible problem raises
/// InfeasibleAtStart. At k > 0 a solver failure falls back to `tail`, which
/// meets the budget by construction.
Plan plan(const ControllerState& st, const MpcDesign& design, const PlanOptions& opt = {},
          const Policy* tail = nullptr);

/// gamma = 0: y is ignored and may be absent.
struct Measurement {
    int gamma = 0;
    std::optional<Vec> y;
};

struct ApplyResult {
    Vec u;
    Vec innovation;  ///< gamma (y - C x_hat)
    Vec x_hat_next;
};

/// u = K x_hat + c_0 + gamma L_00 (y - C x_hat); x_hat+ = A x_hat + B u + gamma A M (y - C x_hat).
ApplyResult apply(const ControllerState& st, const Plan& p, const Measurement& z, const MpcDesign& design);

/// Shifted policy that reproduces the remaining predicted distribution one
/// step later. `innovation` is gamma (y - C x_hat).
Policy tail_policy(const PolicyLayout& layout, const Policy& theta_star, const Vec& innovation);

/// Constraint value of theta_circ at (x_hat_next, Sigma_next).
double update_mu(const Policy& theta_circ, const Vec& x_hat_next, const Mat& Sigma_next, const MpcDesign& design);

struct StepRecord {
    long k = 0;
    Vec u;
    int gamma = 0;
    std::optional<Vec> y;
    Vec x_hat;
    Vec x_hat_next;
    double mu = 0.0;
    double mu_next = 0.0;
    double J = 0.0;
    SolveStatus status = SolveStatus::max_iter;
    bool fallback = false;
    bool tail_feasible = true;  ///< previous tail policy met mu_k
};

/// Closed-loop runtime for one episode. Usage per step: plan(), then
/// step(measurement). The measurement is never visible to plan().
class MpcController {
public:
    MpcController(std::shared_ptr<const MpcDesign> design, const InitialBelief& belief, PlanOptions opt = {});

    const ControllerState& state() const { return st_; }
    const MpcDesign& design() const { return *design_; }

    /// Plans for the current k (idempotent within a step).
    const Plan& plan();

    /// Applies the current plan with the revealed measurement, then updates
    /// the error moment, builds the tail policy and the next threshold.
    StepRecord step(const Measurement& z);

private:
    std::shared_ptr<const MpcDesign> design_;
    PlanOptions opt_;
    ControllerState st_;
    std::optional<Plan> plan_;
    std::optional<Policy> tail_;
};

}  // namespace ofmpc
