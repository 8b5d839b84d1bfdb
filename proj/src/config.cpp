#include "ofmpc/config.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace ofmpc {

namespace {

using nlohmann::json;

const json& require(const json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) {
        throw ConfigError(where + ": missing key '" + key + "'");
    }
    return j.at(key);
}

Mat to_mat(const json& j, const std::string& what) {
    if (!j.is_array() || j.empty()) {
        throw ConfigError(what + ": expected a non-empty nested array");
    }
    const auto rows = static_cast<Eigen::Index>(j.size());
    if (!j.front().is_array()) {
        throw ConfigError(what + ": expected rows as arrays");
    }
    const auto cols = static_cast<Eigen::Index>(j.front().size());
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const json& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
            throw ConfigError(what + ": ragged rows");
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            const json& v = row[static_cast<std::size_t>(c)];
            if (!v.is_number()) {
                throw ConfigError(what + ": non-numeric entry");
            }
            m(r, c) = v.get<double>();
        }
    }
    return m;
}

Vec to_vec(const json& j, const std::string& what) {
    if (!j.is_array()) {
        throw ConfigError(what + ": expected an array");
    }
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) {
            throw ConfigError(what + ": non-numeric entry");
        }
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

double to_num(const json& j, const std::string& what) {
    if (!j.is_number()) {
        throw ConfigError(what + ": expected a number");
    }
    return j.get<double>();
}

json from_mat(const Mat& m) {
    json out = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            row.push_back(m(r, c));
        }
        out.push_back(row);
    }
    return out;
}

json from_vec(const Vec& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

}  // namespace

SimConfig parse_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what());
    }
    SimConfig cfg;
    try {
        const json& m = require(root, "model", "config");
        cfg.model.A = to_mat(require(m, "A", "model"), "model.A");
        cfg.model.B = to_mat(require(m, "B", "model"), "model.B");
        cfg.model.C = to_mat(require(m, "C", "model"), "model.C");
        cfg.model.D = to_mat(require(m, "D", "model"), "model.D");
        cfg.model.Sigma_w = to_mat(require(m, "sigma_w", "model"), "model.sigma_w");
        cfg.model.Sigma_v = to_mat(require(m, "sigma_v", "model"), "model.sigma_v");
        cfg.model.lambda = to_num(require(m, "lambda", "model"), "model.lambda");

        const json& s = require(root, "spec", "config");
        cfg.spec.Q = to_mat(require(s, "Q", "spec"), "spec.Q");
        cfg.spec.R = to_mat(require(s, "R", "spec"), "spec.R");
        cfg.spec.H = to_mat(require(s, "H", "spec"), "spec.H");
        cfg.spec.beta = to_num(require(s, "beta", "spec"), "spec.beta");
        cfg.spec.epsilon = to_num(require(s, "epsilon", "spec"), "spec.epsilon");
        const json& n = require(s, "N", "spec");
        if (!n.is_number_integer()) {
            throw ConfigError("spec.N: expected an integer");
        }
        cfg.spec.N = n.get<int>();

        const json& b = require(root, "belief", "config");
        cfg.x0 = to_vec(require(b, "x0", "belief"), "belief.x0");
        cfg.belief.x_hat0 = to_vec(require(b, "x_hat0", "belief"), "belief.x_hat0");
        cfg.belief.Sigma0 = to_mat(require(b, "sigma0", "belief"), "belief.sigma0");

        if (root.contains("sim")) {
            const json& sim = root.at("sim");
            if (sim.contains("episodes")) {
                cfg.episodes = sim.at("episodes").get<long>();
            }
            if (sim.contains("steps")) {
                cfg.steps = sim.at("steps").get<long>();
            }
            if (sim.contains("seed")) {
                cfg.seed = sim.at("seed").get<std::uint64_t>();
            }
            if (sim.contains("controller")) {
                cfg.controller = parse_controller_kind(sim.at("controller").get<std::string>());
            }
            if (sim.contains("workers")) {
                cfg.workers = sim.at("workers").get<int>();
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed configuration: ") + e.what());
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    if (cfg.episodes < 1 || cfg.steps < 1 || cfg.workers < 1) {
        throw ConfigError("sim: episodes, steps and workers must be at least 1");
    }
    if (cfg.x0.size() != cfg.model.A.rows()) {
        throw ConfigError("belief.x0 has wrong length");
    }
    return cfg;
}

SimConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open configuration file '" + path + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string config_to_json(const SimConfig& cfg) {
    json j;
    j["model"] = {{"A", from_mat(cfg.model.A)},           {"B", from_mat(cfg.model.B)},
                  {"C", from_mat(cfg.model.C)},           {"D", from_mat(cfg.model.D)},
                  {"sigma_w", from_mat(cfg.model.Sigma_w)}, {"sigma_v", from_mat(cfg.model.Sigma_v)},
                  {"lambda", cfg.model.lambda}};
    j["spec"] = {{"Q", from_mat(cfg.spec.Q)},   {"R", from_mat(cfg.spec.R)},         {"H", from_mat(cfg.spec.H)},
                 {"beta", cfg.spec.beta},       {"epsilon", cfg.spec.epsilon},       {"N", cfg.spec.N}};
    j["belief"] = {{"x0", from_vec(cfg.x0)},
                   {"x_hat0", from_vec(cfg.belief.x_hat0)},
                   {"sigma0", from_mat(cfg.belief.Sigma0)}};
    j["sim"] = {{"episodes", cfg.episodes},
                {"steps", cfg.steps},
                {"seed", cfg.seed},
                {"controller", to_string(cfg.controller)},
                {"workers", cfg.workers}};
    return j.dump(2);
}

std::string gains_to_json(const Gains& g) {
    json j;
    j["K"] = from_mat(g.K);
    j["M"] = from_mat(g.M);
    j["certificates"] = {{"rho_phi", g.rho_phi},
                         {"rho_ms", g.rho_ms},
                         {"rho_lyap", g.rho_lyap},
                         {"certified", g.certified()}};
    return j.dump(2);
}

}  // namespace ofmpc
