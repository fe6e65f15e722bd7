#pragma once

// JSON configuration: every key is optional and overrides default_config();
// unknown keys anywhere in the document are rejected.

#include <filesystem>
#include <string>

#include "json.hpp"
#include "mfl/simulator.hpp"

namespace mfl {

SimConfig config_from_json(const nlohmann::json& doc);
SimConfig load_config(const std::filesystem::path& path);

// Fully resolved configuration, in the same schema config_from_json reads.
nlohmann::json config_to_json(const SimConfig& cfg);

// Section readers shared with the instance files of the CLI; keys absent from
// `obj` keep the value in `base`.
WirelessParams read_wireless_section(const nlohmann::json& obj, WirelessParams base, const std::string& path);
ImmuneParams read_immune_section(const nlohmann::json& obj, ImmuneParams base, const std::string& path);
SolverTolerances read_solver_section(const nlohmann::json& obj, SolverTolerances base, const std::string& path);

// Throws ConfigError naming the file when it is missing or not valid JSON.
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace mfl
