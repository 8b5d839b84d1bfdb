#include "ofmpc/config.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace ofmpc;

namespace {

py::dict summary_dict(const CampaignSummary& s) {
    py::dict d;
    d["controller"] = to_string(s.controller);
    d["episodes"] = s.episodes;
    d["steps"] = s.steps;
    d["seed"] = s.seed;
    d["workers"] = s.workers;
    d["constraint_mean"] = s.con_mean;
    d["constraint_se"] = s.con_se;
    d["cost_mean"] = s.cost_mean;
    d["cost_se"] = s.cost_se;
    d["epsilon"] = s.epsilon;
    d["J0"] = s.J0;
    d["violation"] = s.violation;
    d["infeasible_after_start"] = s.infeasible_after_start;
    d["fallbacks"] = s.fallbacks;
    d["tail_rejections"] = s.tail_rejections;
    d["wall_seconds"] = s.wall_seconds;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Output-feedback stochastic MPC with Bernoulli packet loss";

    auto error = py::register_exception<Error>(m, "Error");
    py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
    py::register_exception<InfeasibleAtStart>(m, "InfeasibleAtStart", error.ptr());

    py::class_<SystemModel>(m, "SystemModel")
        .def(py::init<>())
        .def_readwrite("A", &SystemModel::A)
        .def_readwrite("B", &SystemModel::B)
        .def_readwrite("C", &SystemModel::C)
        .def_readwrite("D", &SystemModel::D)
        .def_readwrite("sigma_w", &SystemModel::Sigma_w)
        .def_readwrite("sigma_v", &SystemModel::Sigma_v)
        .def_readwrite("lam", &SystemModel::lambda);

    py::class_<ControlSpec>(m, "ControlSpec")
        .def(py::init<>())
        .def_readwrite("Q", &ControlSpec::Q)
        .def_readwrite("R", &ControlSpec::R)
        .def_readwrite("H", &ControlSpec::H)
        .def_readwrite("beta", &ControlSpec::beta)
        .def_readwrite("epsilon", &ControlSpec::epsilon)
        .def_readwrite("N", &ControlSpec::N);

    py::class_<InitialBelief>(m, "InitialBelief")
        .def(py::init<>())
        .def_readwrite("x_hat0", &InitialBelief::x_hat0)
        .def_readwrite("sigma0", &InitialBelief::Sigma0);

    py::class_<Gains>(m, "Gains")
        .def_readonly("K", &Gains::K)
        .def_readonly("M", &Gains::M)
        .def_readonly("rho_phi", &Gains::rho_phi)
        .def_readonly("rho_ms", &Gains::rho_ms)
        .def_readonly("rho_lyap", &Gains::rho_lyap)
        .def_property_readonly("certified", &Gains::certified);

    py::enum_<ControllerKind>(m, "ControllerKind").value("mpc", ControllerKind::mpc).value("lqg", ControllerKind::lqg);

    py::class_<SimConfig>(m, "SimConfig")
        .def(py::init<>())
        .def_readwrite("model", &SimConfig::model)
        .def_readwrite("spec", &SimConfig::spec)
        .def_readwrite("belief", &SimConfig::belief)
        .def_readwrite("x0", &SimConfig::x0)
        .def_readwrite("episodes", &SimConfig::episodes)
        .def_readwrite("steps", &SimConfig::steps)
        .def_readwrite("seed", &SimConfig::seed)
        .def_readwrite("controller", &SimConfig::controller)
        .def_readwrite("workers", &SimConfig::workers)
        .def("to_json", [](const SimConfig& c) { return config_to_json(c); });

    m.def("load_config", &load_config, py::arg("path"));
    m.def("parse_config", &parse_config, py::arg("text"));
    m.def("synthesize_gains", [](const SystemModel& mod, const ControlSpec& s) { return synthesize_gains(mod, s); },
          py::arg("model"), py::arg("spec"));

    py::class_<MpcDesign, std::shared_ptr<MpcDesign>>(m, "Design")
        .def(py::init([](const SystemModel& mod, const ControlSpec& s) {
                 return std::const_pointer_cast<MpcDesign>(MpcDesign::build(mod, s));
             }),
             py::arg("model"), py::arg("spec"))
        .def_property_readonly("gains", &MpcDesign::gains)
        .def_property_readonly("num_variables", [](const MpcDesign& d) { return d.layout().size(); })
        .def(
            "forms",
            [](const MpcDesign& d, const Vec& x_hat, const Mat& Sigma) {
                const QcqpProblem p = d.problem(x_hat, Sigma, std::numeric_limits<double>::infinity());
                py::dict out;
                out["cost"] = py::make_tuple(p.cost.hess, p.cost.lin, p.cost.constant);
                out["constraint"] = py::make_tuple(p.constraint.hess, p.constraint.lin, p.constraint.constant);
                return out;
            },
            py::arg("x_hat"), py::arg("sigma"),
            "Cost and constraint as (hessian, linear, constant) with value 0.5 t'Ht + g't + c.")
        .def(
            "solve",
            [](const MpcDesign& d, const Vec& x_hat, const Mat& Sigma, double budget) {
                const QcqpSolution s = solve_qcqp(d.problem(x_hat, Sigma, budget));
                py::dict out;
                out["theta"] = s.theta;
                out["cost"] = s.cost_value;
                out["constraint"] = s.constraint_value;
                out["status"] = to_string(s.status);
                out["multiplier"] = s.multiplier;
                out["iterations"] = s.iterations;
                out["min_constraint"] = s.min_constraint_value;
                return out;
            },
            py::arg("x_hat"), py::arg("sigma"), py::arg("budget"))
        .def(
            "oracle",
            [](const MpcDesign& d, const Vec& theta, const Vec& x_hat, const Mat& Sigma, long samples, long horizon,
               std::uint64_t seed) {
                const OracleEstimate e = predicted_cost_oracle(d, Policy::unflatten(d.layout(), theta), x_hat, Sigma,
                                                               samples, horizon, seed);
                py::dict out;
                out["cost"] = e.cost;
                out["cost_se"] = e.cost_se;
                out["constraint"] = e.con;
                out["constraint_se"] = e.con_se;
                return out;
            },
            py::arg("theta"), py::arg("x_hat"), py::arg("sigma"), py::arg("samples") = 100000,
            py::arg("horizon") = 1000, py::arg("seed") = 0);

    py::class_<MpcController>(m, "Controller")
        .def(py::init([](const std::shared_ptr<MpcDesign>& d, const InitialBelief& b) {
                 return MpcController(d, b);
             }),
             py::arg("design"), py::arg("belief"))
        .def_property_readonly("k", [](const MpcController& c) { return c.state().k; })
        .def_property_readonly("x_hat", [](const MpcController& c) { return c.state().x_hat; })
        .def_property_readonly("sigma", [](const MpcController& c) { return c.state().Sigma; })
        .def_property_readonly("mu", [](const MpcController& c) { return c.state().mu; })
        .def("plan",
             [](MpcController& c) {
                 const Plan& p = c.plan();
                 py::dict out;
                 out["k"] = p.k;
                 out["J"] = p.J;
                 out["constraint"] = p.constraint_value;
                 out["status"] = to_string(p.status);
                 out["fallback"] = p.fallback;
                 return out;
             })
        .def(
            "step",
            [](MpcController& c, int gamma, std::optional<Vec> y) {
                const StepRecord r = c.step(Measurement{gamma, std::move(y)});
                py::dict out;
                out["k"] = r.k;
                out["u"] = r.u;
                out["x_hat_next"] = r.x_hat_next;
                out["mu_next"] = r.mu_next;
                out["J"] = r.J;
                return out;
            },
            py::arg("gamma"), py::arg("y") = py::none());

    m.def(
        "run_campaign",
        [](const SimConfig& cfg) {
            CampaignResult r;
            {
                py::gil_scoped_release release;
                const auto d = MpcDesign::build(cfg.model, cfg.spec);
                r = run_campaign(cfg, d);
            }
            py::dict out = summary_dict(r.summary);
            std::vector<double> con, cost;
            for (const EpisodeResult& e : r.episodes) {
                con.push_back(e.discounted_con);
                cost.push_back(e.discounted_cost);
            }
            out["episode_constraint"] = con;
            out["episode_cost"] = cost;
            return out;
        },
        py::arg("config"));
}
