#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mfl/error.hpp"
#include "mfl/io.hpp"

using namespace mfl;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("mfl_test_io_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out(1);
  for (char c : line) {
    if (c == sep) out.emplace_back();
    else out.back() += c;
  }
  return out;
}

}  // namespace

TEST_CASE("doubles are written to round-trip exactly") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) {
    CHECK(std::stod(format_double(v)) == v);
  }
}

TEST_CASE("model files round-trip bit for bit") {
  const std::size_t dims[] = {3, 5};
  auto m = MultimodalModel::zeros(4, dims);
  std::vector<double> flat(m.parameter_count());
  for (std::size_t i = 0; i < flat.size(); ++i) flat[i] = std::ldexp(static_cast<double>(i) - 17.5, -7) / 3.0;
  m.assign_flat(flat);
  const auto p = scratch("model.bin");
  save_model(p, m);
  CHECK(load_model(p) == m);
  CHECK(fs::file_size(p) == 8 + 8 * 3 + 8 * 2 + 8 * m.parameter_count());

  std::ofstream(scratch("junk.bin")) << "not a model at all";
  CHECK_THROWS_AS(load_model(fs::temp_directory_path() / "mfl_test_io_junk.bin"), ConfigError);
  CHECK_THROWS_AS(load_model(scratch("missing.bin")), ConfigError);
  // Truncation is detected.
  fs::resize_file(p, fs::file_size(p) - 4);
  CHECK_THROWS_AS(load_model(p), ConfigError);
}

TEST_CASE("rounds csv has one row per round and a fixed header") {
  SimConfig cfg = default_config();
  cfg.training.rounds = 3;
  cfg.data.clients = 4;
  cfg.data.test_samples = 100;
  const auto art = run(cfg);
  std::ostringstream out;
  write_rounds_csv(out, art);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  const auto cols = rounds_csv_columns(cfg);
  CHECK(split(line, ',') == cols);
  CHECK(std::find(cols.begin(), cols.end(), "accuracy_visual") != cols.end());
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    const auto f = split(line, ',');
    REQUIRE(f.size() == cols.size());
    CHECK(f[0] == std::to_string(rows + 1));
    const auto a = split(f[std::find(cols.begin(), cols.end(), "a") - cols.begin()], ';');
    CHECK(a.size() == 4);
    ++rows;
  }
  CHECK(rows == 3);

  const auto s = summary_json(art);
  CHECK(s["rounds"] == 3);
  CHECK(s["scheduler"] == "jcsba");
  CHECK(s["total_energy_j"].get<double>() == doctest::Approx(art.total_energy()));
  CHECK(s["bounds"]["enabled"] == true);
}

TEST_CASE("run directory holds every artifact") {
  SimConfig cfg = default_config();
  cfg.training.rounds = 2;
  cfg.data.clients = 3;
  cfg.data.test_samples = 100;
  cfg.bound_ledger = false;
  const auto dir = scratch("rundir");
  write_run_dir(dir / "nested", run(cfg));
  for (const char* f : {"config.json", "rounds.csv", "summary.json", "model.bin", "timing.csv"}) {
    CHECK_MESSAGE(fs::exists(dir / "nested" / f), f);
  }
}
