#pragma once

// Flat key=value config files and JSON round-trips for the config structs.
// Unknown keys are rejected so typos fail loudly instead of silently using
// a default.

#include <map>
#include <string>

#include "json.hpp"

#include "dmrn/model_config.hpp"
#include "dmrn/synth_env.hpp"
#include "dmrn/training.hpp"

namespace dmrn::cfgio {

// All tunables reachable from a config file.
struct Settings {
    ModelConfig model;
    TrainConfig train;
    synth::GenConfig gen;
    std::size_t train_instances = 2000;
    std::size_t eval_instances = 500;
};

// Lines are `key = value`; blank lines and lines starting with '#' are
// skipped. Throws std::runtime_error on malformed lines.
std::map<std::string, std::string> parse_kv_file(const std::string& path);
std::map<std::string, std::string> parse_kv_text(const std::string& text);

// Applies parsed pairs onto s. Throws std::runtime_error naming the first
// unknown key or unparsable value.
void apply(Settings& s, const std::map<std::string, std::string>& kv);

nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const synth::GenConfig& c);
ModelConfig model_from_json(const nlohmann::json& j);
TrainConfig train_from_json(const nlohmann::json& j);
synth::GenConfig gen_from_json(const nlohmann::json& j);

}  // namespace dmrn::cfgio
