#include "mfl/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "mfl/config.hpp"
#include "mfl/error.hpp"

namespace mfl {

using nlohmann::json;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

const char kMagic[8] = {'M', 'F', 'L', 'M', 'O', 'D', 'E', 'L'};
constexpr std::uint32_t kModelVersion = 1;

template <class F>
std::string joined(const std::vector<ClientRound>& clients, F&& field) {
  std::string out;
  for (std::size_t k = 0; k < clients.size(); ++k) {
    if (k) out += ';';
    out += field(clients[k]);
  }
  return out;
}

std::vector<std::string> names_of(const SimConfig& cfg) {
  if (!cfg.modality_names.empty()) return cfg.modality_names;
  std::vector<std::string> out;
  for (std::size_t i = 0; i < cfg.data.modalities.size(); ++i) out.push_back("m" + std::to_string(i));
  return out;
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw ConfigError("truncated model file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

double get_f64(std::istream& in) {
  const std::uint64_t bits = get_u64(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

std::vector<std::string> rounds_csv_columns(const SimConfig& cfg) {
  std::vector<std::string> cols{"t",        "status",   "scheduled",  "aggregated", "j2",
                                "controller_a", "loss", "loss_multimodal", "loss_unimodal", "accuracy"};
  for (const auto& n : names_of(cfg)) cols.push_back("accuracy_" + n);
  for (const char* c : {"energy_j", "a", "dropped", "bandwidth_hz", "tau_com_s", "tau_cmp_s", "e_com_j", "e_cmp_j",
                        "residual_j", "queue_j", "bound", "a1", "a2", "core_lhs", "core_rhs", "h_prev", "h_psi",
                        "h_next", "grad_sq", "loss_bound_lhs", "loss_bound_rhs", "descent_lhs", "descent_rhs", "descent_checked"}) {
    cols.emplace_back(c);
  }
  return cols;
}

void write_rounds_csv(std::ostream& out, const RunArtifact& art) {
  const auto cols = rounds_csv_columns(art.config);
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  const auto f = [](double v) { return format_double(v); };
  for (const auto& r : art.records) {
    const auto& b = r.bound;
    out << r.t << ',' << r.status << ',' << r.scheduled() << ',' << r.aggregated() << ',' << f(r.j2) << ','
        << f(r.controller_a) << ',' << f(r.loss.total()) << ',' << f(r.loss.multimodal) << ','
        << f(r.loss.unimodal) << ',' << f(r.accuracy);
    for (double u : r.unimodal_accuracy) out << ',' << f(u);
    out << ',' << f(r.energy_j);
    out << ',' << joined(r.clients, [](const ClientRound& c) { return std::string(c.scheduled ? "1" : "0"); });
    out << ',' << joined(r.clients, [](const ClientRound& c) { return std::string(c.dropped ? "1" : "0"); });
    out << ',' << joined(r.clients, [&](const ClientRound& c) { return f(c.bandwidth_hz); });
    out << ',' << joined(r.clients, [&](const ClientRound& c) { return f(c.tau_com_s); });
    out << ',' << joined(r.clients, [&](const ClientRound& c) { return f(c.tau_cmp_s); });
    out << ',' << joined(r.clients, [&](const ClientRound& c) { return f(c.e_com_j); });
    out << ',' << joined(r.clients, [&](const ClientRound& c) { return f(c.e_cmp_j); });
    out << ',' << joined(r.clients, [&](const ClientRound& c) { return f(c.residual_j); });
    out << ',' << joined(r.clients, [&](const ClientRound& c) { return f(c.queue_j); });
    out << ',' << (b.available ? 1 : 0);
    for (double v : {b.a1, b.a2, b.core_lhs, b.core_rhs, b.h_prev, b.h_psi, b.h_next, b.grad_sq, b.loss_bound_lhs,
                     b.loss_bound_rhs, b.descent_lhs, b.descent_rhs}) {
      out << ',' << f(v);
    }
    out << ',' << (b.descent_checked ? 1 : 0) << '\n';
  }
}

json summary_json(const RunArtifact& art) {
  const auto names = names_of(art.config);
  json uni = json::object();
  const auto u = art.final_unimodal_accuracy();
  for (std::size_t m = 0; m < u.size(); ++m) uni[names[m]] = u[m];
  const auto& bs = art.bounds;
  json s;
  s["rounds_csv_version"] = kRoundsCsvVersion;
  s["scheduler"] = scheduler_name(art.config.scheduler);
  s["seed"] = art.config.seed;
  s["rounds"] = art.records.size();
  s["final_accuracy"] = art.final_accuracy();
  s["final_unimodal_accuracy"] = uni;
  s["final_loss"] = art.records.empty() ? 0.0 : art.records.back().loss.total();
  s["total_energy_j"] = art.total_energy();
  s["client_energy_j"] = art.ledger.cumulative;
  s["final_queue_j"] = art.ledger.virtual_queue;
  s["max_queue_over_t_j"] = art.max_queue_over_t();
  s["mean_scheduled"] = art.mean_scheduled();
  std::size_t dropped = 0;
  for (const auto& r : art.records) dropped += r.scheduled() - r.aggregated();
  s["dropped_uploads"] = dropped;
  if (art.n_sched) s["baseline_n_sched"] = art.n_sched;
  json bounds;
  bounds["enabled"] = art.config.bound_ledger && art.config.scheduler != SchedulerKind::Dropout;
  bounds["rho_hat"] = bs.smoothness.rho_hat();
  bounds["gamma_hat"] = bs.smoothness.gamma_hat();
  bounds["trajectory_pairs"] = bs.smoothness.pairs;
  bounds["core_violations"] = bs.core_violations;
  bounds["loss_bound_violations"] = bs.loss_bound_violations;
  bounds["descent_enabled"] = bs.descent_enabled;
  bounds["descent_checked"] = bs.descent_checked;
  bounds["descent_violations"] = bs.descent_violations;
  s["bounds"] = bounds;
  return s;
}

void save_model(const std::filesystem::path& path, const MultimodalModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out.write(kMagic, sizeof kMagic);
  put_u64(out, kModelVersion);
  put_u64(out, model.classes());
  put_u64(out, model.modality_count());
  for (const auto& s : model.submodels()) put_u64(out, s.dim);
  for (const auto& s : model.submodels()) {
    for (double w : s.weights) put_f64(out, w);
    for (double b : s.bias) put_f64(out, b);
  }
}

MultimodalModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw ConfigError("'" + path.string() + "' is not a model file");
  }
  if (get_u64(in) != kModelVersion) throw ConfigError("unsupported model file version");
  const std::size_t classes = get_u64(in);
  const std::size_t m = get_u64(in);
  if (m > 1024 || classes > 1'000'000) throw ConfigError("implausible model header");
  std::vector<std::size_t> dims(m);
  for (auto& d : dims) d = get_u64(in);
  auto model = MultimodalModel::zeros(classes, dims);
  for (auto& s : model.submodels()) {
    for (double& w : s.weights) w = get_f64(in);
    for (double& b : s.bias) b = get_f64(in);
  }
  return model;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw ConfigError("cannot write '" + path.string() + "'");
}

void write_run_dir(const std::filesystem::path& dir, const RunArtifact& art) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create '" + dir.string() + "': " + ec.message());
  write_text(dir / "config.json", config_to_json(art.config).dump(2) + "\n");
  std::ostringstream csv;
  write_rounds_csv(csv, art);
  write_text(dir / "rounds.csv", csv.str());
  write_text(dir / "summary.json", summary_json(art).dump(2) + "\n");
  save_model(dir / "model.bin", art.final_model);
  std::ostringstream timing;
  timing << "t,solver_seconds\n";
  for (const auto& r : art.records) timing << r.t << ',' << format_double(r.solver_seconds) << '\n';
  write_text(dir / "timing.csv", timing.str());
}

}  // namespace mfl
