#include "mfl/lyapunov.hpp"

#include <cmath>

#include "mfl/error.hpp"

namespace mfl {

void LyapunovConfig::validate() const {
  if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("V must be a non-negative number");
  if (!(eta > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(rho_hat >= 0.0)) throw ConfigError("rho estimate must be non-negative");
}

std::size_t RoundDecision::scheduled() const {
  std::size_t n = 0;
  for (auto x : a) n += x != 0;
  return n;
}

bool operator<(const Objective& a, const Objective& b) {
  if (a.feasible != b.feasible) return a.feasible;
  return a.feasible && a.value < b.value;
}

bool operator==(const Objective& a, const Objective& b) {
  return a.feasible == b.feasible && (!a.feasible || a.value == b.value);
}

void RoundContext::validate() const {
  const std::size_t k = queue.size();
  if (costs.size() != k || gain.size() != k || bounds.clients() != k) {
    throw ConfigError("round context needs one entry per client");
  }
  cfg.validate();
}

double round_energy(const RoundContext& ctx, ClientId k, double bandwidth_hz) {
  const auto& c = ctx.costs.at(k);
  return comm_latency_energy(c, bandwidth_hz, ctx.gain[k], ctx.params).energy_j +
         comp_latency_energy(c, ctx.params).energy_j;
}

bool decision_feasible(const RoundDecision& d, const RoundContext& ctx) {
  const std::size_t k = ctx.clients();
  if (d.a.size() != k || d.bandwidth.size() != k) return false;
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (d.a[i] > 1 || d.bandwidth[i] < 0.0) return false;
    if (!d.a[i]) {
      if (d.bandwidth[i] != 0.0) return false;
      continue;
    }
    if (!(d.bandwidth[i] > 0.0)) return false;
    total += d.bandwidth[i];
    const auto& c = ctx.costs[i];
    const double lat = comm_latency_energy(c, d.bandwidth[i], ctx.gain[i], ctx.params).latency_s +
                       comp_latency_energy(c, ctx.params).latency_s;
    if (lat > ctx.params.tau_max_s + ctx.tol.eps_tau) return false;
  }
  return total <= ctx.params.bandwidth_max_hz;
}

Objective j1(const RoundDecision& d, const RoundContext& ctx) {
  if (!decision_feasible(d, ctx)) return Objective::infeasible();
  const BoundTerms terms = bound_terms(d.a, ctx.bounds);
  double value = ctx.cfg.v * ctx.cfg.eta * ctx.cfg.rho_hat * std::sqrt(terms.total());
  for (std::size_t k = 0; k < ctx.clients(); ++k) {
    const double spent = d.a[k] ? round_energy(ctx, k, d.bandwidth[k]) : 0.0;
    value -= ctx.queue[k] * (ctx.params.energy_per_round_j - spent);
  }
  return Objective::of(value);
}

double j3(const RoundDecision& d, const RoundContext& ctx) {
  double total = 0.0;
  for (std::size_t k = 0; k < ctx.clients(); ++k) {
    if (!d.a[k]) continue;
    if (!(d.bandwidth[k] > 0.0)) throw ConfigError("j3 needs positive bandwidth for scheduled clients");
    total += ctx.queue[k] * comm_latency_energy(ctx.costs[k], d.bandwidth[k], ctx.gain[k], ctx.params).energy_j;
  }
  return total;
}

J2Evaluator::J2Evaluator(const RoundContext& ctx) : ctx_(ctx) {
  ctx_.validate();
  for (std::size_t k = 0; k < ctx.clients(); ++k) {
    base_.push_back(BandwidthClient::from(k, ctx.queue[k], ctx.costs[k], ctx.gain[k], ctx.params));
    b_min_.push_back(solve_b_min(base_.back(), ctx.params, ctx.tol));
  }
}

const J2Evaluation& J2Evaluator::evaluate(const Schedule& a) {
  if (auto it = cache_.find(a); it != cache_.end()) return it->second;
  if (a.size() != ctx_.clients()) throw ConfigError("schedule length does not match the client count");
  J2Evaluation ev;
  ev.decision.a = a;
  ev.decision.bandwidth.assign(a.size(), 0.0);
  std::vector<BandwidthClient> sched;
  std::vector<std::size_t> idx;
  double total_min = 0.0;
  bool possible = true;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (!a[k]) continue;
    if (!b_min_[k]) { possible = false; break; }
    total_min += *b_min_[k];
    sched.push_back(base_[k]);
    idx.push_back(k);
  }
  if (possible && total_min <= ctx_.params.bandwidth_max_hz) {
    if (sched.empty()) {
      ev.status = AllocationStatus::BeyondLast;
      ev.value = j1(ev.decision, ctx_);
    } else {
      const auto alloc = allocate(sched, ctx_.params, ctx_.tol);
      ev.status = alloc.status;
      if (alloc.status != AllocationStatus::Infeasible) {
        for (std::size_t i = 0; i < idx.size(); ++i) ev.decision.bandwidth[idx[i]] = alloc.bandwidth[i];
        ev.value = j1(ev.decision, ctx_);
      }
    }
  }
  return cache_.emplace(a, std::move(ev)).first->second;
}

}  // namespace mfl
