#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "mfl/cli.hpp"
#include "mfl/config.hpp"
#include "mfl/error.hpp"
#include "mfl/io.hpp"

using namespace mfl;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = MFL_SOURCE_DIR;

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("mfl_test_cli_" + name);
  fs::remove_all(p);
  return p;
}

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result call(std::vector<std::string> args) {
  args.insert(args.begin(), "mflsim");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path write_config(const std::string& name, const json& doc) {
  const auto p = scratch(name + ".json");
  std::ofstream(p) << doc.dump();
  return p;
}

// Numbers compare with a relative tolerance, everything else exactly.
void same_json(const json& got, const json& want, const std::string& path = "") {
  if (want.is_number() && got.is_number()) {
    const double a = got.get<double>(), b = want.get<double>();
    CHECK_MESSAGE(std::abs(a - b) <= 1e-9 * std::max({std::abs(a), std::abs(b), 1e-300}), path);
    return;
  }
  REQUIRE_MESSAGE(got.type() == want.type(), path);
  if (want.is_object()) {
    CHECK_MESSAGE(got.size() == want.size(), path);
    for (auto it = want.begin(); it != want.end(); ++it) {
      REQUIRE_MESSAGE(got.contains(it.key()), std::string(path + "." + it.key()));
      same_json(got[it.key()], it.value(), path + "." + it.key());
    }
  } else if (want.is_array()) {
    REQUIRE_MESSAGE(got.size() == want.size(), path);
    for (std::size_t i = 0; i < want.size(); ++i) same_json(got[i], want[i], std::string(path + "[" + std::to_string(i) + "]"));
  } else {
    CHECK_MESSAGE(got == want, path);
  }
}

const json kQuick = {{"seed", 3}, {"rounds", 6}, {"data", {{"clients", 5}, {"test_samples", 200}}}};

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(call({}).code == 1);
  CHECK(call({"frobnicate"}).code == 1);
  CHECK(call({"solve-bandwidth"}).code == 1);  // missing --instance
  CHECK(call({"run", "--config", (kSource / "no_such_file.json").string()}).code == 1);
  CHECK(call({"--help"}).code == 0);
}

TEST_CASE("unknown configuration keys are hard errors") {
  const auto dir = scratch("typo");
  for (const json& doc : {json{{"sead", 1}}, json{{"data", {{"clinets", 3}}}},
                          json{{"data", {{"modalities", {{{"name", "a"}, {"dims", 3}}}}}}},
                          json{{"wireless", {{"p_dbw", 1.0}}}}, json{{"immune", {{"size", 4}}}}}) {
    const auto cfg = write_config("typo", doc);
    const auto r = call({"run", "-c", cfg.string(), "-o", dir.string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("unknown configuration key") != std::string::npos);
  }
  CHECK_THROWS_AS(config_from_json(json{{"rounds", -3}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"rounds", "ten"}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"scheduler", "greedy"}}), ConfigError);
}

TEST_CASE("configuration round-trips through its JSON form") {
  for (const char* name : {"default.json", "audio_text.json", "quick.json"}) {
    const auto cfg = load_config(kSource / "configs" / name);
    const auto again = config_from_json(config_to_json(cfg));
    CHECK(config_to_json(again) == config_to_json(cfg));
  }
  const auto d = load_config(kSource / "configs" / "default.json");
  CHECK(config_to_json(d) == config_to_json(default_config()));
  auto cfg = default_config();
  cfg.baselines.selection_ratios = {0.0, 0.5, 0.25, 1.0};
  cfg.immune.dis = 3;
  cfg.controller.rho_hat = 2.0;
  const auto back = config_from_json(config_to_json(cfg));
  CHECK(back.baselines.selection_ratios == cfg.baselines.selection_ratios);
  CHECK(back.immune.dis == std::optional<std::size_t>(3));
  CHECK(back.controller.rho_hat == std::optional<double>(2.0));
}

TEST_CASE("run writes a deterministic artifact directory") {
  const auto cfg = write_config("quick", kQuick);
  const auto a = scratch("run_a"), b = scratch("run_b");
  REQUIRE(call({"run", "-q", "-c", cfg.string(), "-o", a.string()}).code == 0);
  REQUIRE(call({"run", "-q", "-c", cfg.string(), "-o", b.string()}).code == 0);
  for (const char* f : {"rounds.csv", "summary.json", "config.json", "model.bin"}) {
    REQUIRE(fs::exists(a / f));
    CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
  }
  CHECK(fs::exists(a / "timing.csv"));
  const auto summary = json::parse(slurp(a / "summary.json"));
  CHECK(summary["rounds"] == 6);
  const auto csv = slurp(a / "rounds.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
  // The written model is the final model of an identical in-process run.
  const auto art = run(load_config(cfg));
  CHECK(load_model(a / "model.bin") == art.final_model);
}

TEST_CASE("the output directory environment variable wins") {
  const auto cfg = write_config("quick_env", kQuick);
  const auto env_dir = scratch("env_dir"), flag_dir = scratch("flag_dir");
  ::setenv(kOutputDirEnv, env_dir.string().c_str(), 1);
  const auto r = call({"run", "-q", "-c", cfg.string(), "-o", flag_dir.string()});
  ::unsetenv(kOutputDirEnv);
  CHECK(r.code == 0);
  CHECK(fs::exists(env_dir / "rounds.csv"));
  CHECK_FALSE(fs::exists(flag_dir));
}

TEST_CASE("solve-bandwidth matches the golden output") {
  const auto dir = scratch("solve");
  const auto r = call({"solve-bandwidth", "-q", "-i", (kSource / "tests/golden/bandwidth_instance.json").string(),
                       "-o", dir.string()});
  CHECK(r.code == 0);
  same_json(json::parse(slurp(dir / "solve_bandwidth.json")),
            json::parse(slurp(kSource / "tests/golden/bandwidth_expected.json")));
}

TEST_CASE("schedule matches the golden output and the exhaustive optimum") {
  const auto dir = scratch("schedule");
  const auto r = call({"schedule", "-q", "--exhaustive", "-i",
                       (kSource / "tests/golden/schedule_instance.json").string(), "-o", dir.string()});
  CHECK(r.code == 0);
  const auto got = json::parse(slurp(dir / "schedule.json"));
  same_json(got, json::parse(slurp(kSource / "tests/golden/schedule_expected.json")));
  CHECK(got["schedule"] == got["exhaustive"]["schedule"]);
}

TEST_CASE("instance files reject unknown keys and bad values") {
  const auto dir = scratch("bad_instance");
  const auto bad = write_config("bad_instance", json{{"clients", {{{"queue", 0.1}, {"upload_bits", 10},
                                                                  {"compute_latency_s", 0.001}, {"gain", 1e-12},
                                                                  {"colour", 1}}}}});
  CHECK(call({"solve-bandwidth", "-i", bad.string(), "-o", dir.string()}).code == 1);
  const auto neg = write_config("neg_instance", json{{"clients", {{{"queue", 0.1}, {"upload_bits", 10},
                                                                  {"compute_latency_s", 0.001}, {"gain", -1.0}}}}});
  CHECK(call({"solve-bandwidth", "-i", neg.string(), "-o", dir.string()}).code == 1);
}

TEST_CASE("sweep-v and compare write their tables") {
  const auto cfg = write_config("quick_sweep", kQuick);
  const auto dir = scratch("sweep");
  CHECK(call({"sweep-v", "-q", "-c", cfg.string(), "--values", "", "-o", dir.string()}).code == 1);
  REQUIRE(call({"sweep-v", "-q", "-c", cfg.string(), "--values", "0.01,1", "--seeds", "1-2", "-o", dir.string()})
              .code == 0);
  const auto csv = slurp(dir / "sweep_v.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

  const auto cdir = scratch("compare");
  REQUIRE(call({"compare", "-q", "-c", cfg.string(), "--seeds", "1,2", "--schedulers", "jcsba,random,round_robin",
                "-o", cdir.string()})
              .code == 0);
  const auto doc = json::parse(slurp(cdir / "compare.json"));
  CHECK(doc["schedulers"].size() == 3);
  CHECK(doc["schedulers"]["random"]["accuracy"].size() == 2);
  CHECK(call({"compare", "-q", "-c", cfg.string(), "--schedulers", "greedy", "-o", cdir.string()}).code == 1);
}

TEST_CASE("validate-bounds on full participation finds no violations") {
  json doc = kQuick;
  doc["scheduler"] = "full";
  doc["data"]["modalities"] = {{{"name", "a"}, {"dim", 4}, {"missing_ratio", 0.0}},
                               {{"name", "b"}, {"dim", 5}, {"missing_ratio", 0.0}}};
  const auto cfg = write_config("full_bounds", doc);
  const auto dir = scratch("bounds_full");
  const auto r = call({"validate-bounds", "-q", "-c", cfg.string(), "-o", dir.string()});
  CHECK(r.code == 0);
  const auto b = json::parse(slurp(dir / "bounds.json"));
  CHECK(b["core_violations"] == 0);
  CHECK(b["loss_bound_violations"] == 0);
  CHECK(b["descent_violations"] == 0);

  doc["scheduler"] = "dropout";
  const auto drop = write_config("dropout_bounds", doc);
  CHECK(call({"validate-bounds", "-q", "-c", drop.string(), "-o", dir.string()}).code == 1);
}

TEST_CASE("validate-bounds warns when the descent premise fails") {
  json doc = kQuick;
  doc["training"] = {{"learning_rate", 50.0}};
  const auto cfg = write_config("big_eta", doc);
  const auto dir = scratch("bounds_eta");
  const auto r = call({"validate-bounds", "-q", "-c", cfg.string(), "-o", dir.string()});
  CHECK(r.err.find("descent check is skipped") != std::string::npos);
  const auto b = json::parse(slurp(dir / "bounds.json"));
  CHECK(b["descent_enabled"] == false);
  CHECK(b["descent_checked"] == 0);
}
