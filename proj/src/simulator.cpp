#include "mfl/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mfl/error.hpp"

namespace mfl {

const char* scheduler_name(SchedulerKind k) {
  switch (k) {
    case SchedulerKind::Jcsba: return "jcsba";
    case SchedulerKind::Random: return "random";
    case SchedulerKind::RoundRobin: return "round_robin";
    case SchedulerKind::Selection: return "selection";
    case SchedulerKind::Dropout: return "dropout";
    case SchedulerKind::Full: return "full";
  }
  return "unknown";
}

SchedulerKind parse_scheduler(const std::string& name) {
  for (auto k : {SchedulerKind::Jcsba, SchedulerKind::Random, SchedulerKind::RoundRobin,
                 SchedulerKind::Selection, SchedulerKind::Dropout, SchedulerKind::Full}) {
    if (name == scheduler_name(k)) return k;
  }
  throw ConfigError("unknown scheduler '" + name + "'");
}

void SimConfig::validate() const {
  data.validate();
  const std::size_t m = data.modalities.size();
  training.validate(m);
  if (training.classes != data.classes) throw ConfigError("training and data class counts differ");
  wireless.validate(m);
  immune.validate();
  if (!(controller.v >= 0.0)) throw ConfigError("V must be non-negative");
  if (controller.rho_hat && !(*controller.rho_hat >= 0.0)) throw ConfigError("rho_hat must be non-negative");
  if (!(controller.rho_safety > 0.0) || !(bound_safety > 0.0)) throw ConfigError("safety factors must be positive");
  if (baselines.n_sched && (*baselines.n_sched == 0 || *baselines.n_sched > data.clients)) {
    throw ConfigError("n_sched must lie in [1, K]");
  }
  if (!(baselines.p_drop >= 0.0 && baselines.p_drop <= 1.0)) throw ConfigError("p_drop must lie in [0, 1]");
  if (!modality_names.empty() && modality_names.size() != m) {
    throw ConfigError("need one name per modality");
  }
  if (scheduler == SchedulerKind::Jcsba && data.clients > 62) throw ConfigError("JCSBA supports at most 62 clients");
}

SimConfig default_config() {
  SimConfig c;
  c.data.clients = 10;
  c.data.classes = 6;
  c.data.min_samples = 400;
  c.data.max_samples = 1100;
  c.data.class_separation = 0.3;
  c.data.label_skew = 0.5;
  c.data.modalities = {ModalitySpec{8, 0.3, 1.0}, ModalitySpec{12, 0.3, 1.0}};
  c.training.classes = 6;
  c.training.learning_rate = 0.5;
  c.training.modal_weights = {1.0, 1.0};
  c.training.rounds = 200;
  c.wireless.cycles_per_sample = {2000.0, 8000.0};
  c.controller.v = 0.1;
  c.modality_names = {"audio", "visual"};
  return c;
}

std::size_t RoundRecord::scheduled() const {
  return static_cast<std::size_t>(std::count_if(clients.begin(), clients.end(), [](const ClientRound& c) { return c.scheduled; }));
}

std::size_t RoundRecord::aggregated() const {
  return static_cast<std::size_t>(
      std::count_if(clients.begin(), clients.end(), [](const ClientRound& c) { return c.scheduled && !c.dropped; }));
}

double RunArtifact::total_energy() const {
  return std::accumulate(ledger.cumulative.begin(), ledger.cumulative.end(), 0.0);
}

double RunArtifact::mean_scheduled() const {
  if (records.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : records) s += static_cast<double>(r.scheduled());
  return s / static_cast<double>(records.size());
}

double RunArtifact::final_accuracy() const { return records.empty() ? 0.0 : records.back().accuracy; }

std::vector<double> RunArtifact::final_unimodal_accuracy() const {
  return records.empty() ? std::vector<double>{} : records.back().unimodal_accuracy;
}

double RunArtifact::max_queue_over_t() const {
  if (records.empty()) return 0.0;
  const double q = *std::max_element(ledger.virtual_queue.begin(), ledger.virtual_queue.end());
  return q / static_cast<double>(records.size());
}

namespace {

// Controller view of zeta/delta from the latest gradient each client uploaded.
BoundState stale_bounds(const BoundState& structure, const std::vector<Gradient>& grads) {
  BoundState s = structure;
  const std::size_t m_count = s.modalities();
  for (std::size_t mi = 0; mi < m_count; ++mi) {
    const ModalityId m = modality(mi);
    MultimodalModel acc = MultimodalModel::zeros_like(grads.front());
    for (std::size_t k = 0; k < s.clients(); ++k) {
      if (s.owns[k][mi]) acc.axpy_block(m, s.w_bar[k][mi], grads[k][m]);
    }
    s.zeta[mi] = std::sqrt(acc.block_squared_norm(m));
    for (std::size_t k = 0; k < s.clients(); ++k) {
      s.delta[k][mi] = s.owns[k][mi] ? std::sqrt(grads[k].block_squared_distance(m, acc)) : 0.0;
    }
  }
  return s;
}

std::vector<ModalityId> all_of(const ClientDataset& d) { return d.modalities; }

std::vector<double> flat(const MultimodalModel& m) { return m.flatten(); }

}  // namespace

RunArtifact run(const SimConfig& cfg) {
  cfg.validate();
  RunArtifact art;
  art.config = cfg;
  const Federation fed = generate_federation(cfg.data, cfg.seed);
  const std::size_t k_count = cfg.data.clients;
  const std::size_t m_count = cfg.data.modalities.size();
  const double eta = cfg.training.learning_rate;

  std::vector<std::size_t> dims;
  for (const auto& s : cfg.data.modalities) dims.push_back(s.dim);
  MultimodalModel theta = MultimodalModel::zeros(cfg.training.classes, dims);
  art.initial = theta;
  for (const auto& c : fed.clients) art.modalities.push_back(c.modalities);

  const auto distances = place_clients(k_count, cfg.wireless, cfg.seed);
  std::vector<CostProfile> costs;
  for (const auto& c : fed.clients) costs.push_back(cost_profile(c.modalities, theta, cfg.wireless, c.size()));
  EnergyLedger ledger = EnergyLedger::empty(k_count);

  const bool baseline = cfg.scheduler != SchedulerKind::Jcsba && cfg.scheduler != SchedulerKind::Full;
  if (baseline) {
    if (cfg.baselines.n_sched) {
      art.n_sched = *cfg.baselines.n_sched;
    } else {
      SimConfig probe = cfg;
      probe.scheduler = SchedulerKind::Jcsba;
      probe.bound_ledger = false;
      const auto ref = run(probe);
      art.n_sched = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(ref.mean_scheduled())), 1, k_count);
    }
  }

  const BoundState structure = BoundState::structure(fed.clients, m_count);
  std::vector<Gradient> last_grad;
  double rho_running = 0.0;
  if (cfg.scheduler == SchedulerKind::Jcsba) {
    // Free probing round: every client reports its gradient at theta^0.
    last_grad = exact_constants(theta, fed.clients, cfg.training).local;
  }
  std::vector<MultimodalModel> last_local(k_count, theta);

  SmoothnessTracker tracker(cfg.bound_safety);
  const bool bound_ledger = cfg.bound_ledger && cfg.scheduler != SchedulerKind::Dropout;
  double h_prev = global_loss(theta, fed.clients, cfg.training).total();

  for (std::size_t t = 1; t <= cfg.rounds(); ++t) {
    RoundRecord rec;
    rec.t = t;
    rec.clients.assign(k_count, {});
    const ChannelState ch = draw_channels(distances, cfg.seed, t);

    RoundDecision d;
    std::vector<std::vector<ModalityId>> train(k_count);
    const auto start = std::chrono::steady_clock::now();
    switch (cfg.scheduler) {
      case SchedulerKind::Jcsba: {
        RoundContext ctx;
        ctx.bounds = stale_bounds(structure, last_grad);
        double gnorm = 0.0;
        for (double z : ctx.bounds.zeta) gnorm += z * z;
        rho_running = std::max(rho_running, std::sqrt(gnorm));
        ctx.queue = ledger.virtual_queue;
        ctx.costs = costs;
        ctx.gain = ch.gain;
        ctx.params = cfg.wireless;
        ctx.tol = cfg.tolerances;
        ctx.cfg = LyapunovConfig{cfg.controller.v, eta, cfg.controller.rho_hat.value_or(cfg.controller.rho_safety * rho_running)};
        J2Evaluator ev(ctx);
        Rng rng = substream(cfg.seed, Stream::Immune, {t});
        const auto res = immune_search(k_count, std::ref(ev), cfg.immune, rng);
        const auto& chosen = ev.evaluate(res.best);
        d = chosen.decision;
        rec.status = status_name(chosen.status);
        rec.j2 = chosen.value.value;
        rec.controller_a = bound_terms(d.a, ctx.bounds).total();
        for (std::size_t k = 0; k < k_count; ++k) {
          if (d.a[k]) train[k] = all_of(fed.clients[k]);
        }
        break;
      }
      case SchedulerKind::Full: {
        d.a.assign(k_count, 1);
        d.bandwidth.assign(k_count, cfg.wireless.bandwidth_max_hz / static_cast<double>(k_count));
        std::vector<BandwidthClient> bc;
        for (std::size_t k = 0; k < k_count; ++k) {
          bc.push_back(BandwidthClient::from(k, ledger.virtual_queue[k], costs[k], ch.gain[k], cfg.wireless));
        }
        const auto alloc = allocate(bc, cfg.wireless, cfg.tolerances);
        if (alloc.status != AllocationStatus::Infeasible) d.bandwidth = alloc.bandwidth;
        rec.status = alloc.status == AllocationStatus::Infeasible ? "full_equal" : "full_optimal";
        for (std::size_t k = 0; k < k_count; ++k) train[k] = all_of(fed.clients[k]);
        break;
      }
      default: {
        BaselineState s;
        s.clients = k_count;
        s.round = t;
        s.n_sched = art.n_sched;
        s.bandwidth_max_hz = cfg.wireless.bandwidth_max_hz;
        s.seed = cfg.seed;
        s.modalities = art.modalities;
        s.selection_ratios = cfg.baselines.selection_ratios;
        s.p_drop = cfg.baselines.p_drop;
        s.drift.resize(k_count);
        for (std::size_t k = 0; k < k_count; ++k) s.drift[k] = std::sqrt(last_local[k].squared_distance(art.initial));
        const BaselineKind kind = cfg.scheduler == SchedulerKind::Random      ? BaselineKind::Random
                                  : cfg.scheduler == SchedulerKind::RoundRobin ? BaselineKind::RoundRobin
                                  : cfg.scheduler == SchedulerKind::Selection  ? BaselineKind::Selection
                                                                               : BaselineKind::Dropout;
        auto bd = baseline_schedule(kind, s);
        d = std::move(bd.decision);
        train = std::move(bd.modalities);
        rec.status = scheduler_name(cfg.scheduler);
        break;
      }
    }
    rec.solver_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    std::vector<double> consumption(k_count, 0.0);
    std::vector<LocalResult> uploads;
    for (std::size_t k = 0; k < k_count; ++k) {
      if (!d.a[k]) continue;
      const ClientDataset& full = fed.clients[k];
      const bool restricted = train[k] != full.modalities;
      const ClientDataset data = restricted ? full.restricted_to(train[k]) : ClientDataset{};
      const ClientDataset& used = restricted ? data : full;
      const CostProfile cost = restricted ? cost_profile(train[k], theta, cfg.wireless, full.size()) : costs[k];
      const auto com = comm_latency_energy(cost, d.bandwidth[k], ch.gain[k], cfg.wireless);
      const auto cmp = comp_latency_energy(cost, cfg.wireless);
      ClientRound& cr = rec.clients[k];
      cr.scheduled = true;
      cr.bandwidth_hz = d.bandwidth[k];
      cr.tau_com_s = com.latency_s;
      cr.tau_cmp_s = cmp.latency_s;
      cr.e_com_j = com.energy_j;
      cr.e_cmp_j = cmp.energy_j;
      cr.dropped = com.latency_s + cmp.latency_s > cfg.wireless.tau_max_s + cfg.tolerances.eps_tau;
      consumption[k] = com.energy_j + cmp.energy_j;

      MultimodalModel local = local_update(theta, used, cfg.training);
      if (!cr.dropped) {
        if (!last_grad.empty() && !restricted) {
          Gradient g = theta;
          g.axpy(-1.0, local);
          g.scale(1.0 / eta);
          last_grad[k] = std::move(g);
        }
        uploads.push_back(LocalResult{k, train[k], full.size(), local});
      }
      last_local[k] = std::move(local);
    }
    MultimodalModel next = aggregate(uploads, theta);

    if (bound_ledger) {
      const auto exact = exact_constants(theta, fed.clients, cfg.training);
      tracker.add(TrajectoryPoint{flat(theta), h_prev, flat(exact.global)});
      const auto psi = virtual_step(theta, exact.global, eta);
      Schedule agg(k_count, 0);
      for (const auto& u : uploads) agg[u.client] = 1;
      const auto terms = bound_terms(agg, exact.bounds);
      const auto gap = bound_gap_check(next, psi, terms, eta);
      BoundRecord& b = rec.bound;
      b.available = true;
      b.a1 = terms.a1;
      b.a2 = terms.a2;
      b.core_lhs = gap.lhs;
      b.core_rhs = gap.rhs;
      b.h_prev = h_prev;
      b.h_psi = global_loss(psi, fed.clients, cfg.training).total();
      b.grad_sq = exact.global.squared_norm();
      b.zeta = exact.bounds.zeta;
      tracker.add(TrajectoryPoint{flat(psi), b.h_psi, {}});
      if (!gap.holds) {
        art.bounds.core_violations++;
        art.bounds.reports.push_back("round " + std::to_string(t) + " core: " + gap.describe());
      }
    }

    ledger = ledger_step(ledger, d.a, consumption, cfg.wireless);
    for (std::size_t k = 0; k < k_count; ++k) {
      rec.clients[k].residual_j = ledger.residual[k];
      rec.clients[k].queue_j = ledger.virtual_queue[k];
      if (d.a[k]) rec.energy_j += consumption[k];
    }
    theta = std::move(next);
    rec.loss = global_loss(theta, fed.clients, cfg.training);
    h_prev = rec.loss.total();
    rec.bound.h_next = h_prev;
    const auto metrics = evaluate(theta, fed.test, cfg.training);
    rec.accuracy = metrics.multimodal_accuracy;
    rec.unimodal_accuracy = metrics.unimodal_accuracy;
    art.records.push_back(std::move(rec));
  }

  if (bound_ledger && !art.records.empty()) {
    tracker.add(TrajectoryPoint{flat(theta), h_prev, flat(global_gradient(theta, fed.clients, cfg.training))});
    auto& bs = art.bounds;
    bs.smoothness = tracker.estimate();
    const double rho = bs.smoothness.rho_hat();
    const double gamma = bs.smoothness.gamma_hat();
    bs.descent_enabled = gamma > 0.0 && eta < 1.0 / gamma;
    for (auto& r : art.records) {
      BoundRecord& b = r.bound;
      const double tol = 1e-12 * std::max(1.0, std::abs(b.h_prev));
      b.loss_bound_lhs = b.h_next - b.h_psi;
      b.loss_bound_rhs = eta * rho * std::sqrt(b.a1 + b.a2);
      if (b.loss_bound_lhs > b.loss_bound_rhs + tol) {
        bs.loss_bound_violations++;
        std::ostringstream os;
        os.precision(17);
        os << "round " << r.t << " loss bound: " << b.loss_bound_lhs << " > " << b.loss_bound_rhs;
        bs.reports.push_back(os.str());
      }
      b.descent_lhs = b.h_psi - b.h_prev;
      b.descent_rhs = -(2.0 * eta - gamma * eta * eta) / 2.0 * b.grad_sq;
      b.descent_checked = bs.descent_enabled;
      if (bs.descent_enabled) {
        bs.descent_checked++;
        if (b.descent_lhs > b.descent_rhs + tol) {
          bs.descent_violations++;
          std::ostringstream os;
          os.precision(17);
          os << "round " << r.t << " descent: " << b.descent_lhs << " > " << b.descent_rhs;
          bs.reports.push_back(os.str());
        }
      }
    }
  }

  art.final_model = std::move(theta);
  art.ledger = std::move(ledger);
  return art;
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double SchedulerStats::mean_accuracy() const { return mean(accuracy); }
double SchedulerStats::mean_energy() const { return mean(energy); }

Comparison compare(const SimConfig& base, const std::vector<SchedulerKind>& kinds,
                   const std::vector<std::uint64_t>& seeds) {
  if (kinds.empty() || seeds.empty()) throw ConfigError("compare needs at least one scheduler and one seed");
  Comparison out;
  out.seeds = seeds;
  for (auto k : kinds) out.schedulers.push_back(SchedulerStats{k, {}, {}, {}});
  auto record = [&](SchedulerKind k, const RunArtifact& a) {
    for (auto& s : out.schedulers) {
      if (s.kind != k) continue;
      s.accuracy.push_back(a.final_accuracy());
      s.energy.push_back(a.total_energy());
      s.unimodal.push_back(a.final_unimodal_accuracy());
    }
  };
  for (std::uint64_t seed : seeds) {
    SimConfig cfg = base;
    cfg.seed = seed;
    cfg.bound_ledger = false;
    cfg.scheduler = SchedulerKind::Jcsba;
    const auto ref = run(cfg);
    const double mean_size = ref.mean_scheduled();
    out.n_sched.push_back(mean_size);
    record(SchedulerKind::Jcsba, ref);
    const std::size_t n = base.baselines.n_sched.value_or(
        std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(mean_size)), 1, base.data.clients));
    for (auto k : kinds) {
      if (k == SchedulerKind::Jcsba) continue;
      cfg.scheduler = k;
      cfg.baselines.n_sched = n;
      record(k, run(cfg));
    }
  }
  return out;
}

}  // namespace mfl
