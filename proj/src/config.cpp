#include "mfl/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "detail/json_section.hpp"
#include "mfl/error.hpp"

namespace mfl {

using nlohmann::json;
using detail::number_list;
using detail::Section;

namespace {

double watt_to_dbm(double w) { return 10.0 * std::log10(w) + 30.0; }

std::string combination_label(std::uint64_t code, const std::vector<std::string>& names) {
  std::string label;
  for (std::size_t m = 0; m < names.size(); ++m) {
    if (!(code & (std::uint64_t{1} << m))) continue;
    if (!label.empty()) label += "+";
    label += names[m];
  }
  return label;
}

std::vector<std::string> default_names(std::size_t m) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < m; ++i) out.push_back("m" + std::to_string(i));
  return out;
}

void read_data(Section& s, SimConfig& c) {
  s.read("clients", c.data.clients);
  s.read("classes", c.data.classes);
  s.read("min_samples", c.data.min_samples);
  s.read("max_samples", c.data.max_samples);
  s.read("class_separation", c.data.class_separation);
  s.read("label_skew", c.data.label_skew);
  s.read("test_samples", c.data.test_samples);
  if (s.has("modalities")) {
    const json& arr = s.raw("modalities");
    if (!arr.is_array() || arr.empty()) throw ConfigError("'data.modalities' must be a non-empty array");
    c.data.modalities.clear();
    c.modality_names.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Section m(arr[i], s.child("modalities[" + std::to_string(i) + "]"));
      ModalitySpec spec;
      std::string name = "m" + std::to_string(i);
      m.read("name", name);
      m.read("dim", spec.dim);
      m.read("missing_ratio", spec.missing_ratio);
      m.read("noise", spec.noise);
      m.finish();
      c.data.modalities.push_back(spec);
      c.modality_names.push_back(name);
    }
  }
  c.training.classes = c.data.classes;
}

void read_wireless(Section& s, WirelessParams& w) {
  s.read("b_max_hz", w.bandwidth_max_hz);
  if (s.has("p_dbm")) w.tx_power_w = dbm_to_watt(Section::convert<double>(s.raw("p_dbm"), s.child("p_dbm")));
  if (s.has("n0_dbm_hz")) {
    w.noise_psd_w_per_hz = dbm_to_watt(Section::convert<double>(s.raw("n0_dbm_hz"), s.child("n0_dbm_hz")));
  }
  s.read("tau_max_s", w.tau_max_s);
  s.read("e_add_j", w.energy_per_round_j);
  s.read("f_hz", w.cpu_hz);
  s.read("alpha", w.energy_coefficient);
  if (s.has("beta")) w.cycles_per_sample = number_list(s.raw("beta"), s.child("beta"));
  s.read("beta0", w.fusion_cycles);
  s.read("bits_per_param", w.bits_per_parameter);
  if (s.has("upload_bits")) w.upload_bits = number_list(s.raw("upload_bits"), s.child("upload_bits"));
  s.read("upload_all_modalities", w.upload_all_modalities);
  s.read("cell_radius_m", w.cell_radius_m);
  s.read("min_distance_m", w.min_distance_m);
}

void read_immune(Section& s, ImmuneParams& p) {
  s.read("population", p.population);
  s.read("generations", p.generations);
  s.read("clone_factor", p.clone_factor);
  s.read("mutation_rate", p.mutation_rate);
  s.read("iota", p.iota);
  s.read("eps1", p.eps1);
  s.read("eps2_scale", p.eps2_scale);
  if (s.has("dis")) {
    const json& v = s.raw("dis");
    if (v.is_string() && v.get<std::string>() == "auto") p.dis.reset();
    else p.dis = Section::convert<std::size_t>(v, s.child("dis"));
  }
  s.read("keep_best", p.keep_best);
}

void read_baselines(Section& s, SimConfig& c) {
  if (s.has("n_sched")) {
    const json& v = s.raw("n_sched");
    if (v.is_string() && v.get<std::string>() == "auto") c.baselines.n_sched.reset();
    else c.baselines.n_sched = Section::convert<std::size_t>(v, s.child("n_sched"));
  }
  s.read("p_drop", c.baselines.p_drop);
  if (s.has("selection_ratios")) {
    const json& v = s.raw("selection_ratios");
    const std::string where = s.child("selection_ratios");
    if (!v.is_object()) throw ConfigError(where + " must map modality combinations to ratios");
    const auto& names = c.modality_names.empty() ? default_names(c.data.modalities.size()) : c.modality_names;
    const std::size_t m = names.size();
    if (m > 16) throw ConfigError(where + " supports at most 16 modalities");
    std::vector<double> ratios;
    if (!v.empty()) ratios.assign(std::size_t{1} << m, 0.0);
    std::set<std::uint64_t> seen;
    for (auto it = v.begin(); it != v.end(); ++it) {
      std::uint64_t code = 0;
      std::stringstream ss(it.key());
      std::string part;
      while (std::getline(ss, part, '+')) {
        std::size_t idx = m;
        for (std::size_t i = 0; i < m; ++i) {
          if (names[i] == part) idx = i;
        }
        if (idx == m) throw ConfigError(where + ": unknown modality '" + part + "' in '" + it.key() + "'");
        code |= std::uint64_t{1} << idx;
      }
      if (code == 0 || !seen.insert(code).second) throw ConfigError(where + ": bad or repeated combination '" + it.key() + "'");
      const double r = Section::convert<double>(it.value(), where + "." + it.key());
      if (!(r >= 0.0 && r <= 1.0)) throw ConfigError(where + "." + it.key() + " must lie in [0, 1]");
      ratios[code] = r;
    }
    c.baselines.selection_ratios = std::move(ratios);
  }
}

}  // namespace

WirelessParams read_wireless_section(const json& obj, WirelessParams base, const std::string& path) {
  Section s(obj, path);
  read_wireless(s, base);
  s.finish();
  return base;
}

ImmuneParams read_immune_section(const json& obj, ImmuneParams base, const std::string& path) {
  Section s(obj, path);
  read_immune(s, base);
  s.finish();
  return base;
}

SolverTolerances read_solver_section(const json& obj, SolverTolerances base, const std::string& path) {
  Section s(obj, path);
  s.read("eps_tau", base.eps_tau);
  s.read("eps_b", base.eps_b);
  s.read("eps_kappa", base.eps_kappa);
  s.read("max_iterations", base.max_iterations);
  s.finish();
  if (!(base.eps_tau > 0.0) || !(base.eps_b > 0.0) || !(base.eps_kappa > 0.0) || base.max_iterations <= 0) {
    throw ConfigError("solver tolerances must be positive");
  }
  return base;
}

SimConfig config_from_json(const json& doc) {
  SimConfig c = default_config();
  Section top(doc, "");
  std::uint64_t seed = c.seed;
  top.read("seed", seed);
  c.seed = seed;
  top.read("rounds", c.training.rounds);
  if (top.has("scheduler")) c.scheduler = parse_scheduler(Section::convert<std::string>(top.raw("scheduler"), "scheduler"));

  if (top.has("data")) {
    Section s(top.raw("data"), "data");
    read_data(s, c);
    s.finish();
  }
  const std::size_t m = c.data.modalities.size();
  if (top.has("training")) {
    Section s(top.raw("training"), "training");
    s.read("learning_rate", c.training.learning_rate);
    if (s.has("modal_weights")) c.training.modal_weights = number_list(s.raw("modal_weights"), "training.modal_weights");
    s.finish();
  }
  if (top.has("wireless")) c.wireless = read_wireless_section(top.raw("wireless"), c.wireless, "wireless");
  if (top.has("lyapunov")) {
    Section s(top.raw("lyapunov"), "lyapunov");
    s.read("v", c.controller.v);
    if (s.has("rho_hat")) {
      const json& v = s.raw("rho_hat");
      if (v.is_string() && v.get<std::string>() == "auto") c.controller.rho_hat.reset();
      else c.controller.rho_hat = Section::convert<double>(v, "lyapunov.rho_hat");
    }
    s.read("rho_safety", c.controller.rho_safety);
    s.finish();
  }
  if (top.has("immune")) c.immune = read_immune_section(top.raw("immune"), c.immune, "immune");
  if (top.has("solver")) c.tolerances = read_solver_section(top.raw("solver"), c.tolerances, "solver");
  if (top.has("baselines")) {
    Section s(top.raw("baselines"), "baselines");
    read_baselines(s, c);
    s.finish();
  }
  if (top.has("bounds")) {
    Section s(top.raw("bounds"), "bounds");
    s.read("enabled", c.bound_ledger);
    s.read("safety", c.bound_safety);
    s.finish();
  }
  top.finish();

  // A modality list of a different length invalidates per-modality defaults
  // that the document did not restate.
  if (c.training.modal_weights.size() != m) {
    if (doc.contains("training") && doc["training"].contains("modal_weights")) {
      throw ConfigError("training.modal_weights needs one entry per modality");
    }
    c.training.modal_weights.assign(m, 1.0);
  }
  if (c.wireless.cycles_per_sample.size() != m) throw ConfigError("wireless.beta needs one entry per modality");
  c.validate();
  return c;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

SimConfig load_config(const std::filesystem::path& path) { return config_from_json(read_json_file(path)); }

json config_to_json(const SimConfig& c) {
  json mods = json::array();
  const auto names = c.modality_names.empty() ? default_names(c.data.modalities.size()) : c.modality_names;
  for (std::size_t i = 0; i < c.data.modalities.size(); ++i) {
    const auto& s = c.data.modalities[i];
    mods.push_back({{"name", names[i]}, {"dim", s.dim}, {"missing_ratio", s.missing_ratio}, {"noise", s.noise}});
  }
  json ratios = json::object();
  for (std::uint64_t code = 1; code < c.baselines.selection_ratios.size(); ++code) {
    ratios[combination_label(code, names)] = c.baselines.selection_ratios[code];
  }
  const auto& w = c.wireless;
  json doc;
  doc["seed"] = c.seed;
  doc["rounds"] = c.training.rounds;
  doc["scheduler"] = scheduler_name(c.scheduler);
  doc["data"] = {{"clients", c.data.clients},
                 {"classes", c.data.classes},
                 {"min_samples", c.data.min_samples},
                 {"max_samples", c.data.max_samples},
                 {"class_separation", c.data.class_separation},
                 {"label_skew", c.data.label_skew},
                 {"test_samples", c.data.test_samples},
                 {"modalities", mods}};
  doc["training"] = {{"learning_rate", c.training.learning_rate}, {"modal_weights", c.training.modal_weights}};
  doc["wireless"] = {{"b_max_hz", w.bandwidth_max_hz},
                     {"p_dbm", watt_to_dbm(w.tx_power_w)},
                     {"n0_dbm_hz", watt_to_dbm(w.noise_psd_w_per_hz)},
                     {"tau_max_s", w.tau_max_s},
                     {"e_add_j", w.energy_per_round_j},
                     {"f_hz", w.cpu_hz},
                     {"alpha", w.energy_coefficient},
                     {"beta", w.cycles_per_sample},
                     {"beta0", w.fusion_cycles},
                     {"bits_per_param", w.bits_per_parameter},
                     {"upload_bits", w.upload_bits},
                     {"upload_all_modalities", w.upload_all_modalities},
                     {"cell_radius_m", w.cell_radius_m},
                     {"min_distance_m", w.min_distance_m}};
  doc["lyapunov"] = {{"v", c.controller.v},
                     {"rho_hat", c.controller.rho_hat ? json(*c.controller.rho_hat) : json("auto")},
                     {"rho_safety", c.controller.rho_safety}};
  const auto& p = c.immune;
  doc["immune"] = {{"population", p.population}, {"generations", p.generations},
                   {"clone_factor", p.clone_factor}, {"mutation_rate", p.mutation_rate},
                   {"iota", p.iota}, {"eps1", p.eps1}, {"eps2_scale", p.eps2_scale},
                   {"dis", p.dis ? json(*p.dis) : json("auto")}, {"keep_best", p.keep_best}};
  doc["solver"] = {{"eps_tau", c.tolerances.eps_tau}, {"eps_b", c.tolerances.eps_b},
                   {"eps_kappa", c.tolerances.eps_kappa}, {"max_iterations", c.tolerances.max_iterations}};
  doc["baselines"] = {{"n_sched", c.baselines.n_sched ? json(*c.baselines.n_sched) : json("auto")},
                      {"selection_ratios", ratios},
                      {"p_drop", c.baselines.p_drop}};
  doc["bounds"] = {{"enabled", c.bound_ledger}, {"safety", c.bound_safety}};
  return doc;
}

}  // namespace mfl
