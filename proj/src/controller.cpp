#include "ofmpc/controller.hpp"

#include <cmath>
#include <sstream>

namespace ofmpc {

MpcDesign::MpcDesign(const SystemModel& m, const ControlSpec& s, const Gains& g)
    : model_(m),
      spec_(s),
      gains_(g),
      ops_(m, g, s),
      maps_(build_lyapunov_maps(m, g, s)),
      assembler_(ops_, maps_, spec_) {}

std::shared_ptr<const MpcDesign> MpcDesign::build(const SystemModel& m, const ControlSpec& s) {
    validate_model(m, s);
    return build(m, s, synthesize_gains(m, s));
}

std::shared_ptr<const MpcDesign> MpcDesign::build(const SystemModel& m, const ControlSpec& s, const Gains& g) {
    validate_model(m, s);
    return std::shared_ptr<const MpcDesign>(new MpcDesign(m, s, g));
}

QcqpProblem MpcDesign::problem(const Vec& x_hat, const Mat& Sigma, double budget) const {
    const OmegaPair omega = compute_omega(ops_, Sigma);
    return QcqpProblem{assembler_.cost(x_hat, omega), assembler_.constraint(x_hat, omega), budget};
}

ControllerState init(const InitialBelief& belief, const ControlSpec& spec) {
    ControllerState st;
    st.k = 0;
    st.x_hat = belief.x_hat0;
    st.Sigma = belief.Sigma0;
    st.mu = spec.epsilon;
    return st;
}

Plan plan(const ControllerState& st, const MpcDesign& design, const PlanOptions& opt, const Policy* tail) {
    const PolicyLayout& layout = design.layout();
    const QcqpProblem prob = design.problem(st.x_hat, st.Sigma, st.mu);

    Vec tail_flat;
    if (tail != nullptr) {
        tail_flat = tail->flatten(layout);
    }
    const QcqpSolution sol =
        solve_qcqp(prob, opt.tol, (opt.warm_start && tail != nullptr) ? &tail_flat : nullptr);

    Plan p;
    p.k = st.k;
    if (tail != nullptr) {
        const double feas_abs = opt.tol.feas_rel * (1.0 + std::abs(st.mu));
        p.tail_feasible = prob.constraint.value(tail_flat) <= st.mu + feas_abs;
    }
    p.status = sol.status;
    p.iterations = sol.iterations;
    if (sol.status == SolveStatus::optimal) {
        p.theta = Policy::unflatten(layout, sol.theta);
        p.J = sol.cost_value;
        p.constraint_value = sol.constraint_value;
        return p;
    }
    if (st.k == 0 || tail == nullptr) {
        if (sol.status == SolveStatus::infeasible) {
            std::ostringstream os;
            os << "receding-horizon problem infeasible at k = " << st.k << "; smallest feasible budget is "
               << sol.min_constraint_value;
            throw InfeasibleAtStart(os.str(), sol.min_constraint_value);
        }
        throw Error("QCQP solver did not converge at k = " + std::to_string(st.k));
    }
    p.fallback = true;
    p.theta = *tail;
    p.J = prob.cost.value(tail_flat);
    p.constraint_value = prob.constraint.value(tail_flat);
    return p;
}

ApplyResult apply(const ControllerState& st, const Plan& p, const Measurement& z, const MpcDesign& design) {
    if (p.k != st.k) {
        throw StalePlan("plan for k = " + std::to_string(p.k) + " applied at k = " + std::to_string(st.k));
    }
    const SystemModel& m = design.model();
    const PolicyLayout& layout = design.layout();
    ApplyResult r;
    r.innovation = Vec::Zero(m.ny());
    if (z.gamma != 0) {
        if (!z.y.has_value()) {
            throw MissingMeasurement("gamma = 1 but no measurement was supplied at k = " + std::to_string(st.k));
        }
        linalg::require_shape(*z.y, m.ny(), 1, "measurement");
        r.innovation = *z.y - m.C * st.x_hat;
    }
    r.u = design.gains().K * st.x_hat + p.theta.c_block(layout, 0) + p.theta.block(layout, 0, 0) * r.innovation;
    r.x_hat_next = m.A * st.x_hat + m.B * r.u + m.A * (design.gains().M * r.innovation);
    return r;
}

Policy tail_policy(const PolicyLayout& layout, const Policy& theta_star, const Vec& innovation) {
    const int N = layout.N;
    const int nu = layout.nu;
    const int ny = layout.ny;
    Policy out = Policy::zero(layout);
    for (int i = 0; i + 1 < N; ++i) {
        out.c.segment(i * nu, nu) =
            theta_star.c_block(layout, i + 1) + theta_star.block(layout, i + 1, 0) * innovation;
        for (int j = 0; j <= i; ++j) {
            out.L.block(i * nu, j * ny, nu, ny) = theta_star.block(layout, i + 1, j + 1);
        }
    }
    return out;
}

double update_mu(const Policy& theta_circ, const Vec& x_hat_next, const Mat& Sigma_next, const MpcDesign& design) {
    const OmegaPair omega = compute_omega(design.ops(), Sigma_next);
    return design.assembler().constraint(x_hat_next, omega).value(theta_circ.flatten(design.layout()));
}

MpcController::MpcController(std::shared_ptr<const MpcDesign> design, const InitialBelief& belief, PlanOptions opt)
    : design_(std::move(design)), opt_(opt) {
    validate_belief(design_->model(), belief);
    st_ = init(belief, design_->spec());
}

const Plan& MpcController::plan() {
    if (!plan_.has_value()) {
        plan_ = ofmpc::plan(st_, *design_, opt_, tail_.has_value() ? &*tail_ : nullptr);
    }
    return *plan_;
}

StepRecord MpcController::step(const Measurement& z) {
    const Plan& p = plan();
    const SystemModel& m = design_->model();
    const ApplyResult a = apply(st_, p, z, *design_);

    StepRecord rec;
    rec.k = st_.k;
    rec.u = a.u;
    rec.gamma = z.gamma;
    if (z.gamma != 0) {
        rec.y = z.y;
    }
    rec.x_hat = st_.x_hat;
    rec.x_hat_next = a.x_hat_next;
    rec.mu = st_.mu;
    rec.J = p.J;
    rec.status = p.status;
    rec.fallback = p.fallback;
    rec.tail_feasible = p.tail_feasible;

    const Mat sigma_next = sigma_update(m, design_->gains().M, st_.Sigma, z.gamma);
    Policy next_tail = tail_policy(design_->layout(), p.theta, a.innovation);
    const double mu_next = update_mu(next_tail, a.x_hat_next, sigma_next, *design_);
    rec.mu_next = mu_next;

    st_.theta_star = p.theta;
    st_.J = p.J;
    st_.k += 1;
    st_.x_hat = a.x_hat_next;
    st_.Sigma = sigma_next;
    st_.mu = mu_next;
    tail_ = std::move(next_tail);
    plan_.reset();
    return rec;
}

}  // namespace ofmpc
