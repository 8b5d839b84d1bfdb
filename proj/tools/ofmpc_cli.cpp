#include "ofmpc/config.hpp"
#include "verify.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace ofmpc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitInfeasible = 2;
constexpr int kExitCertificate = 3;
constexpr int kExitRuntime = 4;

class CertificateFailure : public Error {
public:
    using Error::Error;
};

struct CommonArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<long> episodes;
    std::optional<long> steps;
    std::optional<int> workers;
    std::optional<std::string> controller;
    std::string output;
};

void add_common(CLI::App* sub, CommonArgs& a) {
    sub->add_option("--config", a.config, "Configuration JSON")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", a.seed, "Random seed (overrides config)");
    sub->add_option("--episodes", a.episodes, "Number of episodes")->check(CLI::PositiveNumber);
    sub->add_option("--steps", a.steps, "Steps per episode")->check(CLI::PositiveNumber);
    sub->add_option("--workers", a.workers, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--controller", a.controller, "Controller")->check(CLI::IsMember({"mpc", "lqg"}));
    sub->add_option("--output", a.output, "Output directory");
}

SimConfig resolve(const CommonArgs& a) {
    SimConfig cfg = load_config(a.config);
    if (a.seed) {
        cfg.seed = *a.seed;
    }
    if (a.episodes) {
        cfg.episodes = *a.episodes;
    }
    if (a.steps) {
        cfg.steps = *a.steps;
    }
    if (a.workers) {
        cfg.workers = *a.workers;
    }
    if (a.controller) {
        cfg.controller = parse_controller_kind(*a.controller);
    }
    return cfg;
}

std::shared_ptr<const MpcDesign> build_design(const SimConfig& cfg) {
    validate_belief(cfg.model, cfg.belief);
    auto design = MpcDesign::build(cfg.model, cfg.spec);
    if (!design->gains().certified()) {
        throw CertificateFailure("gain certificates failed:\n" + gains_to_json(design->gains()));
    }
    return design;
}

std::ofstream open_output(const std::string& dir, const std::string& name) {
    fs::create_directories(dir);
    const fs::path path = fs::path(dir) / name;
    std::ofstream os(path);
    if (!os) {
        throw Error("cannot write " + path.string());
    }
    return os;
}

void write_text(const std::string& dir, const std::string& name, const std::string& text) {
    std::ofstream os = open_output(dir, name);
    os << text << '\n';
}

int cmd_synthesize(const CommonArgs& a) {
    const SimConfig cfg = resolve(a);
    validate_model(cfg.model, cfg.spec);
    const Gains g = synthesize_gains(cfg.model, cfg.spec);
    const std::string text = gains_to_json(g);
    std::cout << text << '\n';
    if (!a.output.empty()) {
        write_text(a.output, "gains.json", text);
    }
    if (!g.certified()) {
        std::cerr << "error: gain certificates failed (each radius must be below 1)\n";
        return kExitCertificate;
    }
    return kExitOk;
}

int cmd_simulate(const CommonArgs& a, long episode) {
    SimConfig cfg = resolve(a);
    cfg.episodes = 1;
    const auto design = build_design(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    CampaignResult r;
    r.episodes.push_back(run_episode(cfg, design, episode, true));
    summarize(r, cfg);
    r.summary.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (a.output.empty()) {
        write_step_csv(std::cout, r.episodes.front().trajectory);
    } else {
        std::ofstream os = open_output(a.output, "steps.csv");
        write_step_csv(os, r.episodes.front().trajectory);
        write_text(a.output, "summary.json", summary_json(r.summary));
        std::cout << summary_json(r.summary) << '\n';
    }
    return kExitOk;
}

int cmd_campaign(const CommonArgs& a, std::optional<ControllerKind> force, bool quiet) {
    SimConfig cfg = resolve(a);
    if (force) {
        cfg.controller = *force;
    }
    const auto design = build_design(cfg);
    std::function<void(long, long)> progress;
    if (!quiet) {
        const long every = std::max(1L, cfg.episodes / 20);
        progress = [every](long done, long total) {
            if (done % every == 0 || done == total) {
                std::cerr << "\r" << done << "/" << total << " episodes" << std::flush;
                if (done == total) {
                    std::cerr << '\n';
                }
            }
        };
    }
    const CampaignResult r = run_campaign(cfg, design, progress);
    const std::string summary = summary_json(r.summary);
    std::cout << summary << '\n';
    if (!a.output.empty()) {
        write_text(a.output, "summary.json", summary);
        std::ofstream os = open_output(a.output, "episodes.csv");
        write_episode_csv(os, r.episodes);
    }
    return kExitOk;
}

int cmd_verify(const CommonArgs& a, long samples) {
    const SimConfig cfg = resolve(a);
    validate_model(cfg.model, cfg.spec);
    validate_belief(cfg.model, cfg.belief);
    const auto design = MpcDesign::build(cfg.model, cfg.spec);
    tools::VerifyOptions opt;
    opt.seed = cfg.seed;
    opt.identity_samples = samples;
    const std::vector<tools::VerifyCheck> checks = tools::run_verify(cfg, *design, opt);

    nlohmann::json j = nlohmann::json::array();
    bool ok = true;
    bool cert_ok = true;
    for (const tools::VerifyCheck& c : checks) {
        std::cout << (c.pass ? "PASS " : "FAIL ") << std::left << std::setw(44) << c.name << std::right
                  << std::scientific << std::setprecision(3) << c.value << "  (tol " << c.tolerance << ")\n";
        j.push_back({{"name", c.name}, {"value", c.value}, {"tolerance", c.tolerance}, {"pass", c.pass}});
        ok = ok && c.pass;
        cert_ok = cert_ok && (c.pass || !c.certificate);
    }
    if (!a.output.empty()) {
        write_text(a.output, "verify.json", j.dump(2));
    }
    return ok ? kExitOk : (cert_ok ? kExitRuntime : kExitCertificate);
}

int cmd_oracle(const CommonArgs& a, long samples, long horizon) {
    const SimConfig cfg = resolve(a);
    const auto design = build_design(cfg);
    const ControllerState st = init(cfg.belief, design->spec());
    const Plan p = plan(st, *design);
    if (horizon <= 0) {
        horizon = static_cast<long>(std::ceil(std::log(1e-11) / std::log(design->spec().beta)));
    }
    const OracleEstimate est =
        predicted_cost_oracle(*design, p.theta, st.x_hat, st.Sigma, samples, horizon, cfg.seed);
    auto sigmas = [](double a, double b, double se) { return se > 0.0 ? std::abs(a - b) / se : 0.0; };
    nlohmann::json j;
    j["assembled"] = {{"cost", p.J}, {"constraint", p.constraint_value}};
    j["sampled"] = {{"cost", est.cost},       {"cost_se", est.cost_se}, {"constraint", est.con},
                    {"constraint_se", est.con_se}, {"samples", est.samples}, {"steps", est.steps}};
    const double zc = sigmas(est.cost, p.J, est.cost_se);
    const double zk = sigmas(est.con, p.constraint_value, est.con_se);
    j["deviation_se"] = {{"cost", zc}, {"constraint", zk}};
    j["pass"] = zc <= 3.0 && zk <= 3.0;
    std::cout << j.dump(2) << '\n';
    if (!a.output.empty()) {
        write_text(a.output, "oracle.json", j.dump(2));
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Output-feedback stochastic MPC with packet loss"};
    app.require_subcommand(1);

    CommonArgs args;
    long episode = 0;
    long verify_samples = 20000;
    long oracle_samples = 100000;
    long oracle_horizon = 0;

    auto* synth = app.add_subcommand("synthesize", "Synthesize K and M and report stability certificates");
    add_common(synth, args);
    auto* sim = app.add_subcommand("simulate", "Run one episode and write the per-step CSV");
    add_common(sim, args);
    sim->add_option("--episode", episode, "Episode index (selects the noise substream)")->check(CLI::NonNegativeNumber);
    auto* mc = app.add_subcommand("montecarlo", "Run a Monte Carlo campaign");
    add_common(mc, args);
    auto* base = app.add_subcommand("baseline", "Run the LQG baseline campaign on the same noise streams");
    add_common(base, args);
    auto* ver = app.add_subcommand("verify", "Run the invariant suite");
    add_common(ver, args);
    ver->add_option("--samples", verify_samples, "Samples for the one-step identities")->check(CLI::Range(2L, 100000000L));
    auto* orc = app.add_subcommand("oracle", "Compare assembled forms with brute-force sampling");
    add_common(orc, args);
    orc->add_option("--samples", oracle_samples, "Samples")->check(CLI::Range(2L, 100000000L));
    orc->add_option("--horizon", oracle_horizon, "Simulated steps (default: beta^T < 1e-11)");
    bool quiet = false;
    mc->add_flag("--quiet", quiet, "No progress output");
    base->add_flag("--quiet", quiet, "No progress output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return kExitConfig;
    }

    try {
        if (*synth) {
            return cmd_synthesize(args);
        }
        if (*sim) {
            return cmd_simulate(args, episode);
        }
        if (*mc) {
            return cmd_campaign(args, std::nullopt, quiet);
        }
        if (*base) {
            return cmd_campaign(args, ControllerKind::lqg, quiet);
        }
        if (*ver) {
            return cmd_verify(args, verify_samples);
        }
        if (*orc) {
            return cmd_oracle(args, oracle_samples, oracle_horizon);
        }
    } catch (const InfeasibleAtStart& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInfeasible;
    } catch (const CertificateFailure& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitCertificate;
    } catch (const NotStabilizable& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitCertificate;
    } catch (const NotDetectable& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitCertificate;
    } catch (const RiccatiDiverged& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitCertificate;
    } catch (const LyapunovIllPosed& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitCertificate;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DimensionMismatch& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const NotPSD& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitConfig;
}
