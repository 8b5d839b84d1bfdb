#include "ofmpc/config.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <json.hpp>

using namespace ofmpc;

namespace {

const std::string kPath = std::string(OFMPC_CONFIG_DIR) + "/double_pendulum.json";

nlohmann::json base_doc() {
    return nlohmann::json::parse(config_to_json(load_config(kPath)));
}

}  // namespace

TEST_CASE("pendulum configuration loads the example data") {
    const SimConfig cfg = load_config(kPath);
    const oracle::Instance in = oracle::pendulum();
    CHECK((cfg.model.A - in.model.A).norm() == 0.0);
    CHECK((cfg.model.B - in.model.B).norm() == 0.0);
    CHECK((cfg.model.Sigma_w - in.model.Sigma_w).norm() == 0.0);
    CHECK(cfg.model.lambda == 0.6);
    CHECK((cfg.spec.H - in.spec.H).norm() == 0.0);
    CHECK(cfg.spec.N == 5);
    CHECK(cfg.spec.epsilon == 111.0);
    CHECK((cfg.x0 - in.x0).norm() == 0.0);
    CHECK((cfg.belief.Sigma0 - in.belief.Sigma0).norm() == 0.0);
    CHECK(cfg.episodes == 1000);
    CHECK(cfg.steps == 500);
    CHECK(cfg.seed == 42);
    CHECK(cfg.controller == ControllerKind::mpc);
}

TEST_CASE("matrices are row major") {
    nlohmann::json j = base_doc();
    j["model"]["B"] = {{1, 2}, {3, 4}, {5, 6}, {7, 8}};
    const SimConfig cfg = parse_config(j.dump());
    CHECK(cfg.model.B(0, 1) == 2.0);
    CHECK(cfg.model.B(1, 0) == 3.0);
}

TEST_CASE("round trip") {
    const SimConfig a = load_config(kPath);
    const SimConfig b = parse_config(config_to_json(a));
    CHECK((a.model.A - b.model.A).norm() == 0.0);
    CHECK((a.belief.Sigma0 - b.belief.Sigma0).norm() == 0.0);
    CHECK(a.seed == b.seed);
    CHECK(a.controller == b.controller);
}

TEST_CASE("sim section is optional") {
    nlohmann::json j = base_doc();
    j.erase("sim");
    const SimConfig cfg = parse_config(j.dump());
    CHECK(cfg.episodes == 1);
    CHECK(cfg.workers == 1);
}

TEST_CASE("malformed documents raise ConfigError") {
    CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/file.json"), ConfigError);
    nlohmann::json j = base_doc();
    SUBCASE("missing section") {
        j.erase("spec");
    }
    SUBCASE("missing key") {
        j["model"].erase("lambda");
    }
    SUBCASE("ragged matrix") {
        j["model"]["A"][1] = {1, 2};
    }
    SUBCASE("non-numeric entry") {
        j["spec"]["Q"][0][0] = "ten";
    }
    SUBCASE("fractional horizon") {
        j["spec"]["N"] = 2.5;
    }
    SUBCASE("unknown controller") {
        j["sim"]["controller"] = "pid";
    }
    SUBCASE("zero episodes") {
        j["sim"]["episodes"] = 0;
    }
    SUBCASE("x0 of wrong length") {
        j["belief"]["x0"] = {1, 2};
    }
    CHECK_THROWS_AS(parse_config(j.dump()), ConfigError);
}

TEST_CASE("gains document") {
    const SimConfig cfg = load_config(kPath);
    const auto j = nlohmann::json::parse(gains_to_json(synthesize_gains(cfg.model, cfg.spec)));
    CHECK(j["K"].size() == 2);
    CHECK(j["K"][0].size() == 4);
    CHECK(j["M"].size() == 4);
    CHECK(j["certificates"]["certified"] == true);
    CHECK(j["certificates"]["rho_ms"].get<double>() < 1.0);
}
