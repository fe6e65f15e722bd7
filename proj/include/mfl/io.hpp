#pragma once

// Run-artifact exports: rounds.csv, summary.json, config.json, model.bin and
// timing.csv. Everything except timing.csv is a pure function of the config.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfl/simulator.hpp"

namespace mfl {

inline constexpr int kRoundsCsvVersion = 1;

std::vector<std::string> rounds_csv_columns(const SimConfig& cfg);
void write_rounds_csv(std::ostream& out, const RunArtifact& art);
nlohmann::json summary_json(const RunArtifact& art);

void save_model(const std::filesystem::path& path, const MultimodalModel& model);
MultimodalModel load_model(const std::filesystem::path& path);

// Creates `dir` if needed and writes every artifact file into it.
void write_run_dir(const std::filesystem::path& dir, const RunArtifact& art);

// Doubles are written with %.17g so that they read back exactly.
std::string format_double(double v);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace mfl
