#include "verify.hpp"

#include <cmath>
#include <random>

namespace ofmpc::tools {

namespace {

double rel_diff(const Mat& a, const Mat& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

double rel_diff(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

Mat random_spd(int n, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    Mat G(n, n);
    for (Eigen::Index i = 0; i < G.size(); ++i) {
        G.data()[i] = nd(rng);
    }
    return G * G.transpose() / n + 0.1 * Mat::Identity(n, n);
}

Vec random_vec(int n, double scale, std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, scale);
    Vec v(n);
    for (int i = 0; i < n; ++i) {
        v(i) = nd(rng);
    }
    return v;
}

VerifyCheck at_most(std::string name, double value, double tol, bool certificate = false) {
    return VerifyCheck{std::move(name), value, tol, value <= tol, certificate};
}

}  // namespace

OneStepIdentities sample_one_step(const MpcDesign& design, const Policy& theta, const Vec& x_hat, const Mat& Sigma,
                                  long samples, std::uint64_t seed) {
    const SystemModel& m = design.model();
    const ControlSpec& s = design.spec();
    const PolicyLayout& layout = design.layout();
    const Mat Fs = linalg::psd_sqrt(Sigma);
    const NoiseSampler noise(m);
    const QcqpProblem now = design.problem(x_hat, Sigma, std::numeric_limits<double>::infinity());
    const Vec flat = theta.flatten(layout);

    // The error moment update only depends on gamma, so both forms are built
    // once per arrival outcome.
    const Mat sig_next[2] = {sigma_update(m, design.gains().M, Sigma, 0), sigma_update(m, design.gains().M, Sigma, 1)};
    const OmegaPair omega_next[2] = {compute_omega(design.ops(), sig_next[0]), compute_omega(design.ops(), sig_next[1])};

    double sc = 0.0, sc2 = 0.0, sj = 0.0, sj2 = 0.0;
    for (long n = 0; n < samples; ++n) {
        const auto id = static_cast<std::uint64_t>(n);
        Mat xi(Fs.cols(), 1);
        std::normal_distribution<double> nd;
        CounterRng r0(seed, id, 0, 0);
        for (Eigen::Index i = 0; i < xi.size(); ++i) {
            xi(i) = nd(r0);
        }
        const Vec x = x_hat + Fs * xi.col(0);
        const NoiseDraw d = noise.draw(seed, id, 1);
        Measurement z{d.gamma, std::nullopt};
        if (d.gamma != 0) {
            z.y = m.C * x + d.v;
        }
        ControllerState st;
        st.k = 0;
        st.x_hat = x_hat;
        st.Sigma = Sigma;
        Plan p;
        p.k = 0;
        p.theta = theta;
        const ApplyResult a = apply(st, p, z, design);
        const Policy tail = tail_policy(layout, theta, a.innovation);
        const Vec tflat = tail.flatten(layout);
        const double mu_next = design.assembler().constraint(a.x_hat_next, omega_next[d.gamma]).value(tflat);
        const double j_next = design.assembler().cost(a.x_hat_next, omega_next[d.gamma]).value(tflat);
        sc += mu_next;
        sc2 += mu_next * mu_next;
        sj += j_next;
        sj2 += j_next * j_next;
    }
    const double n = static_cast<double>(samples);
    auto se = [n](double sum, double sum2) {
        return std::sqrt(std::max(0.0, (sum2 - sum * sum / n) / (n - 1.0)) / n);
    };
    OneStepIdentities out;
    out.constraint.lhs = s.beta * sc / n;
    out.constraint.lhs_se = s.beta * se(sc, sc2);
    out.constraint.rhs = now.constraint.value(flat) - expected_stage_constraint(s.H, x_hat, Sigma);
    // u = K x_hat + c_0 + gamma L_00 (C e + v).
    const Vec u_mean = design.gains().K * x_hat + theta.c_block(layout, 0);
    const Mat L00 = theta.block(layout, 0, 0);
    const Mat S_innov = m.C * Sigma * m.C.transpose() + m.Sigma_v;
    const double stage = x_hat.dot(s.Q * x_hat) + (s.Q * Sigma).trace() + u_mean.dot(s.R * u_mean) +
                         m.lambda * (L00.transpose() * s.R * L00 * S_innov).trace();
    out.cost.lhs = s.beta * sj / n;
    out.cost.lhs_se = s.beta * se(sj, sj2);
    out.cost.rhs = now.cost.value(flat) - stage;
    return out;
}

std::vector<VerifyCheck> run_verify(const SimConfig& cfg, const MpcDesign& design, const VerifyOptions& opt) {
    std::vector<VerifyCheck> out;
    const Gains& g = design.gains();
    out.push_back(at_most("rho(A+BK)", g.rho_phi, 1.0, true));
    out.back().pass = g.rho_phi < 1.0;
    out.push_back(at_most("mean-square radius of error map", g.rho_ms, 1.0, true));
    out.back().pass = g.rho_ms < 1.0;
    out.push_back(at_most("discounted radius of joint map", g.rho_lyap, 1.0, true));
    out.back().pass = g.rho_lyap < 1.0;

    std::mt19937_64 rng(opt.seed);
    const int nx = design.model().nx();
    const PolicyLayout& layout = design.layout();

    // Omega: aggregate operator against explicit enumeration.
    for (const Mat& Sigma : {cfg.belief.Sigma0, random_spd(nx, rng)}) {
        const OmegaPair fast = compute_omega(design.ops(), Sigma);
        const OmegaPair ref = compute_omega_enumerated(design.ops(), Sigma);
        out.push_back(at_most("Omega aggregate vs enumeration", std::max(rel_diff(fast.Omega, ref.Omega),
                                                                          rel_diff(fast.Omega_N, ref.Omega_N)),
                              1e-10));
    }

    // Lyapunov adjoint: tr(W P(Xi)) = tr(W~ Xi).
    const LyapunovMaps& maps = design.maps();
    for (int t = 0; t < 2; ++t) {
        const Mat Xi = random_spd(2 * nx, rng);
        const Mat P = maps.solve_terminal(Xi);
        out.push_back(at_most("adjoint identity (cost)",
                              rel_diff((maps.W_cost_dual * Xi).trace(), (maps.W_cost * P).trace()), 1e-9));
        out.push_back(at_most("adjoint identity (constraint)",
                              rel_diff((maps.W_con_dual * Xi).trace(), (maps.W_con * P).trace()), 1e-9));
    }

    // Assembled forms against term-by-term evaluation with an explicit P.
    for (int t = 0; t < 3; ++t) {
        const Vec x_hat = t == 0 ? Vec(cfg.belief.x_hat0) : random_vec(nx, 1.0, rng);
        const Mat Sigma = t == 0 ? Mat(cfg.belief.Sigma0) : random_spd(nx, rng);
        const Policy theta = Policy::unflatten(layout, random_vec(layout.size(), 0.5, rng));
        const OmegaPair omega = compute_omega(design.ops(), Sigma);
        const DirectEvaluation ref = evaluate_direct(design.ops(), maps, design.spec(), theta, x_hat, omega);
        const Vec flat = theta.flatten(layout);
        out.push_back(at_most("assembled cost vs direct",
                              rel_diff(design.assembler().cost(x_hat, omega).value(flat), ref.cost), 1e-9));
        out.push_back(at_most("assembled constraint vs direct",
                              rel_diff(design.assembler().constraint(x_hat, omega).value(flat), ref.constraint),
                              1e-9));
    }

    // First plan and its optimality conditions.
    const ControllerState st = init(cfg.belief, design.spec());
    const QcqpProblem prob = design.problem(st.x_hat, st.Sigma, st.mu);
    const QcqpSolution sol = solve_qcqp(prob);
    out.push_back(VerifyCheck{"first plan solved", sol.status == SolveStatus::optimal ? 0.0 : 1.0, 0.0,
                              sol.status == SolveStatus::optimal, false});
    if (sol.status != SolveStatus::optimal) {
        return out;
    }
    const KktReport kkt = check_kkt(prob, sol.theta);
    const QcqpTolerances tol;
    out.push_back(at_most("KKT stationarity (scaled)", kkt.scaled_stationarity, tol.kkt_rel));
    out.push_back(at_most("KKT complementarity (relative)",
                          std::abs(kkt.complementarity) / std::max(1.0, std::abs(sol.cost_value)), tol.kkt_rel));
    out.push_back(at_most("constraint excess", std::max(0.0, sol.constraint_value - st.mu),
                          tol.feas_rel * (1.0 + std::abs(st.mu))));

    // Sampled one-step identities. They hold exactly only when the next
    // estimate is uncorrelated with its error, i.e. at the stationary error
    // covariance the observer gain was designed for.
    const Mat Sigma_bar = solve_intermittent_riccati(design.model());
    QcqpProblem sp = design.problem(st.x_hat, Sigma_bar, st.mu);
    QcqpSolution ss = solve_qcqp(sp);
    if (ss.status != SolveStatus::optimal) {
        const QcqpProblem free = design.problem(st.x_hat, Sigma_bar, std::numeric_limits<double>::infinity());
        const double lo = min_form_value(free.constraint);
        sp = design.problem(st.x_hat, Sigma_bar, lo + 0.5 * (solve_qcqp(free).constraint_value - lo));
        ss = solve_qcqp(sp);
    }
    const Policy theta = Policy::unflatten(layout, ss.theta);
    const OneStepIdentities id = sample_one_step(design, theta, st.x_hat, Sigma_bar, opt.identity_samples, opt.seed);
    out.push_back(at_most("one-step constraint identity (SE units)",
                          std::abs(id.constraint.lhs - id.constraint.rhs) / id.constraint.lhs_se, 3.0));
    out.push_back(at_most("one-step cost identity (SE units)", std::abs(id.cost.lhs - id.cost.rhs) / id.cost.lhs_se,
                          3.0));
    return out;
}

}  // namespace ofmpc::tools
