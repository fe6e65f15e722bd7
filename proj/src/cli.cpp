#include "mfl/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "detail/json_section.hpp"
#include "mfl/config.hpp"
#include "mfl/error.hpp"
#include "mfl/io.hpp"

namespace mfl {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::string output = "mfl-out";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> rounds;
  std::string scheduler;
  bool quiet = false;
  bool verbose = false;
};

fs::path output_dir(const Common& c) {
  if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0') return env;
  return c.output;
}

SimConfig resolve_config(const Common& c) {
  SimConfig cfg = c.config.empty() ? default_config() : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.rounds) cfg.training.rounds = *c.rounds;
  if (!c.scheduler.empty()) cfg.scheduler = parse_scheduler(c.scheduler);
  cfg.validate();
  return cfg;
}

// "1-10", "3", "1,4,9" or a mix such as "1-3,7".
std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(spec);
  std::string part;
  try {
    while (std::getline(ss, part, ',')) {
      if (part.empty()) throw ConfigError("empty entry in seed list '" + spec + "'");
      const auto dash = part.find('-');
      if (dash == std::string::npos) {
        out.push_back(std::stoull(part));
        continue;
      }
      const auto lo = std::stoull(part.substr(0, dash));
      const auto hi = std::stoull(part.substr(dash + 1));
      if (hi < lo || hi - lo > 100000) throw ConfigError("bad seed range '" + part + "'");
      for (auto s = lo; s <= hi; ++s) out.push_back(s);
    }
  } catch (const std::logic_error&) {
    throw ConfigError("cannot parse seed list '" + spec + "'");
  }
  if (out.empty()) throw ConfigError("seed list is empty");
  return out;
}

std::vector<double> parse_numbers(const std::string& spec) {
  std::vector<double> out;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(part, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used != part.size() || part.empty()) throw ConfigError("cannot parse number '" + part + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> names_of(const SimConfig& cfg) {
  if (!cfg.modality_names.empty()) return cfg.modality_names;
  std::vector<std::string> out;
  for (std::size_t i = 0; i < cfg.data.modalities.size(); ++i) out.push_back("m" + std::to_string(i));
  return out;
}

void print_run(std::ostream& out, const RunArtifact& a, const fs::path& dir) {
  std::ostringstream u;
  const auto names = names_of(a.config);
  const auto uni = a.final_unimodal_accuracy();
  for (std::size_t m = 0; m < uni.size(); ++m) u << " " << names[m] << "=" << uni[m];
  out << scheduler_name(a.config.scheduler) << " seed=" << a.config.seed << " rounds=" << a.records.size()
      << " accuracy=" << a.final_accuracy() << u.str() << " energy_j=" << a.total_energy()
      << " mean_scheduled=" << a.mean_scheduled() << " -> " << dir.string() << "\n";
}

int cmd_run(const Common& c, std::ostream& out) {
  const SimConfig cfg = resolve_config(c);
  const auto art = run(cfg);
  const auto dir = output_dir(c);
  write_run_dir(dir, art);
  if (!c.quiet) print_run(out, art, dir);
  return 0;
}

std::vector<SchedulerKind> parse_kinds(const std::string& spec) {
  std::vector<SchedulerKind> kinds;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ',')) kinds.push_back(parse_scheduler(part));
  if (kinds.empty()) throw ConfigError("scheduler list is empty");
  return kinds;
}

int cmd_compare(const Common& c, const std::string& seeds, const std::string& kinds_spec, std::ostream& out) {
  const SimConfig cfg = resolve_config(c);
  const auto kinds = parse_kinds(kinds_spec);
  const auto cmp = compare(cfg, kinds, parse_seeds(seeds));
  const auto names = names_of(cfg);
  json doc;
  doc["seeds"] = cmp.seeds;
  doc["jcsba_mean_scheduled"] = cmp.n_sched;
  std::ostringstream csv;
  csv << "scheduler,seed,accuracy,energy_j";
  for (const auto& n : names) csv << ",accuracy_" << n;
  csv << "\n";
  for (const auto& s : cmp.schedulers) {
    json e;
    e["accuracy"] = s.accuracy;
    e["energy_j"] = s.energy;
    e["accuracy_mean"] = s.mean_accuracy();
    e["accuracy_std"] = stddev(s.accuracy);
    e["energy_mean_j"] = s.mean_energy();
    e["energy_std_j"] = stddev(s.energy);
    json uni = json::object();
    for (std::size_t m = 0; m < names.size(); ++m) {
      std::vector<double> col;
      for (const auto& u : s.unimodal) col.push_back(u.at(m));
      uni[names[m]] = {{"mean", mean(col)}, {"std", stddev(col)}};
    }
    e["unimodal_accuracy"] = uni;
    doc["schedulers"][scheduler_name(s.kind)] = e;
    for (std::size_t i = 0; i < cmp.seeds.size(); ++i) {
      csv << scheduler_name(s.kind) << ',' << cmp.seeds[i] << ',' << format_double(s.accuracy[i]) << ','
          << format_double(s.energy[i]);
      for (double u : s.unimodal[i]) csv << ',' << format_double(u);
      csv << "\n";
    }
    if (!c.quiet) {
      out << scheduler_name(s.kind) << ": accuracy " << s.mean_accuracy() << " +- " << stddev(s.accuracy)
          << ", energy_j " << s.mean_energy() << " +- " << stddev(s.energy) << "\n";
    }
  }
  const auto dir = output_dir(c);
  fs::create_directories(dir);
  write_text(dir / "compare.json", doc.dump(2) + "\n");
  write_text(dir / "compare.csv", csv.str());
  write_text(dir / "config.json", config_to_json(cfg).dump(2) + "\n");
  return 0;
}

int cmd_sweep_v(const Common& c, const std::string& vs, const std::string& seeds, std::ostream& out) {
  SimConfig cfg = resolve_config(c);
  if (vs.empty()) throw ConfigError("sweep-v needs at least one V value");
  const auto values = parse_numbers(vs);
  const auto seed_list = parse_seeds(seeds);
  const auto names = names_of(cfg);
  cfg.scheduler = SchedulerKind::Jcsba;
  cfg.bound_ledger = false;
  std::ostringstream csv;
  csv << "v,seeds,accuracy_mean,accuracy_std";
  for (const auto& n : names) csv << ",accuracy_" << n << "_mean";
  csv << ",energy_mean_j,energy_std_j,mean_scheduled,max_queue_over_t_j\n";
  json rows = json::array();
  for (double v : values) {
    cfg.controller.v = v;
    cfg.validate();
    std::vector<double> acc, energy, sched, queue;
    std::vector<std::vector<double>> uni(names.size());
    for (auto seed : seed_list) {
      cfg.seed = seed;
      const auto a = run(cfg);
      acc.push_back(a.final_accuracy());
      energy.push_back(a.total_energy());
      sched.push_back(a.mean_scheduled());
      queue.push_back(a.max_queue_over_t());
      const auto u = a.final_unimodal_accuracy();
      for (std::size_t m = 0; m < u.size(); ++m) uni[m].push_back(u[m]);
    }
    csv << format_double(v) << ',' << seed_list.size() << ',' << format_double(mean(acc)) << ','
        << format_double(stddev(acc));
    json row{{"v", v}, {"accuracy", acc}, {"energy_j", energy}, {"accuracy_mean", mean(acc)},
             {"energy_mean_j", mean(energy)}, {"mean_scheduled", mean(sched)}, {"max_queue_over_t_j", mean(queue)}};
    for (std::size_t m = 0; m < names.size(); ++m) {
      csv << ',' << format_double(mean(uni[m]));
      row["accuracy_" + names[m] + "_mean"] = mean(uni[m]);
    }
    csv << ',' << format_double(mean(energy)) << ',' << format_double(stddev(energy)) << ','
        << format_double(mean(sched)) << ',' << format_double(mean(queue)) << "\n";
    rows.push_back(row);
    if (!c.quiet) {
      out << "V=" << v << ": accuracy " << mean(acc) << ", energy_j " << mean(energy) << ", mean_scheduled "
          << mean(sched) << "\n";
    }
  }
  const auto dir = output_dir(c);
  fs::create_directories(dir);
  write_text(dir / "sweep_v.csv", csv.str());
  write_text(dir / "sweep_v.json", json{{"seeds", seed_list}, {"rows", rows}}.dump(2) + "\n");
  return 0;
}

struct BandwidthInstance {
  WirelessParams params;
  SolverTolerances tol;
  std::vector<BandwidthClient> clients;
};

BandwidthInstance read_bandwidth_instance(const json& doc) {
  detail::Section top(doc, "");
  BandwidthInstance inst;
  inst.params = default_config().wireless;
  if (top.has("wireless")) inst.params = read_wireless_section(top.raw("wireless"), inst.params, "wireless");
  if (top.has("solver")) inst.tol = read_solver_section(top.raw("solver"), inst.tol, "solver");
  if (!top.has("clients")) throw ConfigError("instance needs a 'clients' array");
  const json& arr = top.raw("clients");
  if (!arr.is_array() || arr.empty()) throw ConfigError("'clients' must be a non-empty array");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    detail::Section s(arr[i], "clients[" + std::to_string(i) + "]");
    BandwidthClient c;
    c.id = i;
    for (const char* key : {"queue", "upload_bits", "compute_latency_s", "gain"}) {
      if (!s.has(key)) throw ConfigError(s.child(key) + " is required");
    }
    s.read("queue", c.queue);
    s.read("upload_bits", c.upload_bits);
    s.read("compute_latency_s", c.compute_latency_s);
    s.read("gain", c.gain);
    s.finish();
    if (!(c.queue >= 0.0) || !(c.upload_bits > 0.0) || !(c.compute_latency_s >= 0.0) || !(c.gain > 0.0)) {
      throw ConfigError("client " + std::to_string(i) + " has out-of-range values");
    }
    inst.clients.push_back(c);
  }
  top.finish();
  return inst;
}

int cmd_solve_bandwidth(const Common& c, const std::string& instance, std::ostream& out) {
  const auto inst = read_bandwidth_instance(read_json_file(instance));
  const auto res = allocate(inst.clients, inst.params, inst.tol);
  json doc;
  doc["status"] = status_name(res.status);
  doc["interval"] = res.interval;
  doc["kappa"] = res.kappa ? json(*res.kappa) : json(nullptr);
  doc["bandwidth_hz"] = res.bandwidth;
  doc["b_min_hz"] = res.b_min;
  doc["lambda4"] = res.lambda4;
  doc["order"] = res.order;
  int code = 0;
  if (res.status != AllocationStatus::Infeasible) {
    double total = 0.0;
    for (double b : res.bandwidth) total += b;
    doc["bandwidth_total_hz"] = total;
    doc["j3"] = j3(inst.clients, res.bandwidth, inst.params);
    const auto kkt = check_kkt(inst.clients, res, inst.params, inst.tol);
    doc["kkt"] = {{"budget_residual_hz", kkt.budget_residual}, {"lower_violation_hz", kkt.lower_violation},
                  {"stationarity", kkt.stationarity}, {"complementary", kkt.complementary},
                  {"min_lambda4", kkt.min_lambda4}, {"holds", kkt.holds}};
    if (!kkt.holds) code = 2;
  }
  const auto dir = output_dir(c);
  fs::create_directories(dir);
  const std::string text = doc.dump(2) + "\n";
  write_text(dir / "solve_bandwidth.json", text);
  if (!c.quiet) out << text;
  return code;
}

RoundContext read_schedule_instance(const json& doc, ImmuneParams& immune, std::uint64_t& seed) {
  detail::Section top(doc, "");
  RoundContext ctx;
  ctx.params = default_config().wireless;
  ctx.cfg = LyapunovConfig{0.1, 0.5, 1.0};
  top.read("seed", seed);
  if (top.has("wireless")) ctx.params = read_wireless_section(top.raw("wireless"), ctx.params, "wireless");
  if (top.has("solver")) ctx.tol = read_solver_section(top.raw("solver"), ctx.tol, "solver");
  if (top.has("immune")) immune = read_immune_section(top.raw("immune"), immune, "immune");
  if (top.has("lyapunov")) {
    detail::Section s(top.raw("lyapunov"), "lyapunov");
    s.read("v", ctx.cfg.v);
    s.read("eta", ctx.cfg.eta);
    s.read("rho_hat", ctx.cfg.rho_hat);
    s.finish();
  }
  if (!top.has("zeta")) throw ConfigError("instance needs 'zeta', one value per modality");
  ctx.bounds.zeta = detail::number_list(top.raw("zeta"), "zeta");
  const std::size_t m = ctx.bounds.zeta.size();
  if (m == 0 || ctx.params.cycles_per_sample.size() != m) {
    throw ConfigError("'zeta' and wireless.beta need one entry per modality");
  }
  if (!top.has("clients")) throw ConfigError("instance needs a 'clients' array");
  const json& arr = top.raw("clients");
  if (!arr.is_array() || arr.empty()) throw ConfigError("'clients' must be a non-empty array");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    detail::Section s(arr[i], "clients[" + std::to_string(i) + "]");
    for (const char* key : {"queue", "samples", "modalities", "delta", "gain", "upload_bits"}) {
      if (!s.has(key)) throw ConfigError(s.child(key) + " is required");
    }
    double queue = 0.0, gain = 0.0;
    std::size_t samples = 0;
    s.read("queue", queue);
    s.read("gain", gain);
    s.read("samples", samples);
    std::vector<ModalityId> mods;
    std::vector<std::uint8_t> owns(m, 0);
    for (const auto& v : s.raw("modalities")) {
      const auto idx = detail::Section::convert<std::size_t>(v, s.child("modalities"));
      if (idx >= m || owns[idx]) throw ConfigError(s.child("modalities") + " has a bad or repeated index");
      owns[idx] = 1;
      mods.push_back(modality(idx));
    }
    std::sort(mods.begin(), mods.end());
    auto delta = detail::number_list(s.raw("delta"), s.child("delta"));
    if (delta.size() != m) throw ConfigError(s.child("delta") + " needs one entry per modality");
    for (std::size_t j = 0; j < m; ++j) {
      if (!owns[j]) delta[j] = 0.0;
    }
    CostProfile cost;
    cost.samples = samples;
    s.read("upload_bits", cost.upload_bits);
    for (ModalityId mm : mods) cost.cycles_per_sample += ctx.params.cycles_per_sample[index_of(mm)];
    if (mods.size() > 1) cost.cycles_per_sample += ctx.params.fusion_cycles * static_cast<double>(mods.size() - 1);
    s.read("cycles_per_sample", cost.cycles_per_sample);
    s.finish();
    if (mods.empty() || samples == 0 || !(gain > 0.0) || !(queue >= 0.0) || !(cost.upload_bits > 0.0)) {
      throw ConfigError("client " + std::to_string(i) + " has out-of-range values");
    }
    ctx.queue.push_back(queue);
    ctx.gain.push_back(gain);
    ctx.costs.push_back(cost);
    ctx.bounds.samples.push_back(samples);
    ctx.bounds.owns.push_back(owns);
    ctx.bounds.delta.push_back(delta);
  }
  top.finish();
  const std::size_t k = ctx.queue.size();
  ctx.bounds.w_bar.assign(k, std::vector<double>(m, 0.0));
  for (std::size_t j = 0; j < m; ++j) {
    double owned = 0.0;
    for (std::size_t c = 0; c < k; ++c) owned += ctx.bounds.owns[c][j] ? static_cast<double>(ctx.bounds.samples[c]) : 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (ctx.bounds.owns[c][j]) ctx.bounds.w_bar[c][j] = static_cast<double>(ctx.bounds.samples[c]) / owned;
    }
  }
  ctx.validate();
  immune.validate();
  return ctx;
}

int cmd_schedule(const Common& c, const std::string& instance, bool exhaustive, std::ostream& out) {
  ImmuneParams immune;
  std::uint64_t seed = 1;
  const auto ctx = read_schedule_instance(read_json_file(instance), immune, seed);
  if (c.seed) seed = *c.seed;
  const std::size_t k = ctx.clients();
  if (k > 62) throw ConfigError("schedule supports at most 62 clients");
  J2Evaluator ev(ctx);
  Rng rng = substream(seed, Stream::Immune, {0});
  const auto res = immune_search(k, std::ref(ev), immune, rng);
  const auto& chosen = ev.evaluate(res.best);
  json doc;
  doc["schedule"] = res.best;
  doc["feasible"] = res.value.feasible;
  doc["j2"] = res.value.feasible ? json(res.value.value) : json(nullptr);
  doc["bandwidth_hz"] = chosen.decision.bandwidth;
  doc["status"] = status_name(chosen.status);
  doc["evaluations"] = res.evaluations;
  json trace = json::array();
  for (double v : res.best_j2_per_generation) trace.push_back(std::isfinite(v) ? json(v) : json(nullptr));
  doc["best_j2_per_generation"] = trace;
  if (exhaustive) {
    if (k > 16) throw ConfigError("exhaustive comparison is limited to 16 clients");
    const auto opt = exhaustive_search(k, std::ref(ev));
    json e;
    e["schedule"] = opt.best;
    e["j2"] = opt.value.feasible ? json(opt.value.value) : json(nullptr);
    if (opt.value.feasible && res.value.feasible) {
      e["relative_gap"] = (res.value.value - opt.value.value) / std::max(std::abs(opt.value.value), 1e-300);
    }
    doc["exhaustive"] = e;
  }
  const auto dir = output_dir(c);
  fs::create_directories(dir);
  const std::string text = doc.dump(2) + "\n";
  write_text(dir / "schedule.json", text);
  if (!c.quiet) out << text;
  return 0;
}

int cmd_validate_bounds(const Common& c, std::ostream& out, std::ostream& err) {
  SimConfig cfg = resolve_config(c);
  if (cfg.scheduler == SchedulerKind::Dropout) {
    throw ConfigError("bound validation is not defined for modality dropout (it changes the local objective)");
  }
  cfg.bound_ledger = true;
  const auto art = run(cfg);
  const auto dir = output_dir(c);
  write_run_dir(dir, art);
  const auto& bs = art.bounds;
  json doc = summary_json(art)["bounds"];
  doc["eta"] = cfg.training.learning_rate;
  doc["reports"] = bs.reports;
  write_text(dir / "bounds.json", doc.dump(2) + "\n");
  if (!bs.descent_enabled) {
    err << "warning: learning rate " << cfg.training.learning_rate << " is not below 1/gamma_hat = "
        << (bs.smoothness.gamma_hat() > 0 ? 1.0 / bs.smoothness.gamma_hat() : INFINITY)
        << "; the descent check is skipped\n";
  }
  const std::size_t total = bs.core_violations + bs.loss_bound_violations + bs.descent_violations;
  if (!c.quiet) {
    out << "rounds=" << art.records.size() << " rho_hat=" << bs.smoothness.rho_hat()
        << " gamma_hat=" << bs.smoothness.gamma_hat() << " core_violations=" << bs.core_violations
        << " loss_bound_violations=" << bs.loss_bound_violations << " descent_violations=" << bs.descent_violations << "/"
        << bs.descent_checked << " -> " << dir.string() << "\n";
  }
  const std::size_t shown = c.verbose ? bs.reports.size() : std::min<std::size_t>(bs.reports.size(), 5);
  for (std::size_t i = 0; i < shown; ++i) err << "violation: " << bs.reports[i] << "\n";
  if (shown < bs.reports.size()) err << "(" << bs.reports.size() - shown << " more in bounds.json)\n";
  return total == 0 ? 0 : 2;
}

void add_common(CLI::App* sub, Common& c, bool needs_config_options) {
  sub->add_option("-o,--output", c.output, "Output directory (overridden by $" + std::string(kOutputDirEnv) + ")");
  sub->add_flag("-q,--quiet", c.quiet, "Only write files");
  sub->add_flag("-v,--verbose", c.verbose, "Print every violation report");
  if (!needs_config_options) return;
  sub->add_option("-c,--config", c.config, "JSON configuration (defaults when omitted)");
  sub->add_option("--seed", c.seed, "Override the configuration seed");
  sub->add_option("--rounds", c.rounds, "Override the number of rounds");
  sub->add_option("--scheduler", c.scheduler, "jcsba, random, round_robin, selection, dropout or full");
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Wireless multimodal federated learning simulator"};
  app.require_subcommand(1);
  Common c;
  std::string seeds = "1-10";
  std::string kinds = "jcsba,random,round_robin,selection,dropout";
  std::string vs;
  std::string instance;
  bool exhaustive = false;

  auto* run_cmd = app.add_subcommand("run", "Run one simulation and write its artifact directory");
  add_common(run_cmd, c, true);
  auto* cmp_cmd = app.add_subcommand("compare", "Run several schedulers over a seed set");
  add_common(cmp_cmd, c, true);
  cmp_cmd->add_option("--seeds", seeds, "Seeds, e.g. 1-10 or 1,5,9");
  cmp_cmd->add_option("--schedulers", kinds, "Comma-separated scheduler names");
  auto* sweep_cmd = app.add_subcommand("sweep-v", "Sweep the Lyapunov weight V");
  add_common(sweep_cmd, c, true);
  sweep_cmd->add_option("--values", vs, "Comma-separated V values")->required();
  sweep_cmd->add_option("--seeds", seeds, "Seeds, e.g. 1-10 or 1,5,9");
  auto* solve_cmd = app.add_subcommand("solve-bandwidth", "Solve one bandwidth allocation instance");
  add_common(solve_cmd, c, false);
  solve_cmd->add_option("-i,--instance", instance, "Instance JSON")->required();
  auto* sched_cmd = app.add_subcommand("schedule", "Run the immune scheduler on one round instance");
  add_common(sched_cmd, c, false);
  sched_cmd->add_option("-i,--instance", instance, "Instance JSON")->required();
  sched_cmd->add_option("--seed", c.seed, "Override the instance seed");
  sched_cmd->add_flag("--exhaustive", exhaustive, "Also enumerate all schedules (K <= 16)");
  auto* bounds_cmd = app.add_subcommand("validate-bounds", "Run with the exact bound ledger and check it");
  add_common(bounds_cmd, c, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const auto* parsed = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << parsed->help();
    return 1;
  }

  try {
    if (run_cmd->parsed()) return cmd_run(c, out);
    if (cmp_cmd->parsed()) return cmd_compare(c, seeds, kinds, out);
    if (sweep_cmd->parsed()) return cmd_sweep_v(c, vs, seeds, out);
    if (solve_cmd->parsed()) return cmd_solve_bandwidth(c, instance, out);
    if (sched_cmd->parsed()) return cmd_schedule(c, instance, exhaustive, out);
    if (bounds_cmd->parsed()) return cmd_validate_bounds(c, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 3;
  }
  return 1;
}

}  // namespace mfl
