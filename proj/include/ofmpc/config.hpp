#pragma once

#include "ofmpc/sim.hpp"

#include <string>

namespace ofmpc {

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Reads a configuration document with sections model, spec, belief and sim.
/// Matrices are row-major nested arrays; vectors are flat arrays. Missing sim
/// fields keep their defaults. Throws ConfigError on malformed input.
SimConfig parse_config(const std::string& json_text);
SimConfig load_config(const std::string& path);

/// Serializes a configuration (round-trips through parse_config).
std::string config_to_json(const SimConfig& cfg);

/// Gains and certificates as a JSON document.
std::string gains_to_json(const Gains& g);

}  // namespace ofmpc
