#include "mfl/analysis.hpp"

#include <cmath>
#include <sstream>

#include "mfl/error.hpp"
#include "mfl/kernels.hpp"

namespace mfl {

BoundState BoundState::structure(std::span<const ClientDataset> clients, std::size_t modality_count) {
  BoundState s;
  const std::size_t k = clients.size();
  s.zeta.assign(modality_count, 0.0);
  s.delta.assign(k, std::vector<double>(modality_count, 0.0));
  s.w_bar.assign(k, std::vector<double>(modality_count, 0.0));
  s.owns.assign(k, std::vector<std::uint8_t>(modality_count, 0));
  s.samples.resize(k);
  std::vector<double> owner_total(modality_count, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    s.samples[c] = clients[c].size();
    for (ModalityId m : clients[c].modalities) {
      s.owns[c][index_of(m)] = 1;
      owner_total[index_of(m)] += static_cast<double>(clients[c].size());
    }
  }
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t m = 0; m < modality_count; ++m) {
      if (s.owns[c][m]) s.w_bar[c][m] = static_cast<double>(s.samples[c]) / owner_total[m];
    }
  }
  return s;
}

ExactConstants exact_constants(const MultimodalModel& model, std::span<const ClientDataset> clients,
                               const TrainingConfig& cfg) {
  const std::size_t mcount = model.modality_count();
  ExactConstants out;
  out.bounds = BoundState::structure(clients, mcount);
  out.global = MultimodalModel::zeros_like(model);
  out.local.reserve(clients.size());
  for (std::size_t c = 0; c < clients.size(); ++c) {
    out.local.push_back(local_gradient(model, clients[c], cfg));
    for (ModalityId m : clients[c].modalities) {
      out.global.axpy_block(m, out.bounds.w_bar[c][index_of(m)], out.local.back()[m]);
    }
  }
  for (std::size_t mi = 0; mi < mcount; ++mi) {
    const ModalityId m = modality(mi);
    out.bounds.zeta[mi] = std::sqrt(out.global.block_squared_norm(m));
    for (std::size_t c = 0; c < clients.size(); ++c) {
      if (!out.bounds.owns[c][mi]) continue;
      out.bounds.delta[c][mi] = std::sqrt(out.local[c].block_squared_distance(m, out.global));
    }
  }
  return out;
}

MultimodalModel virtual_step(const MultimodalModel& previous, const Gradient& global, double eta) {
  MultimodalModel psi = previous;
  psi.axpy(-eta, global);
  return psi;
}

BoundTerms bound_terms(std::span<const std::uint8_t> schedule, const BoundState& state) {
  const std::size_t k = state.clients();
  const std::size_t mcount = state.modalities();
  if (schedule.size() != k) throw ConfigError("schedule length does not match the client count");
  BoundTerms t;
  t.per_modality.assign(mcount, 0.0);
  for (std::size_t m = 0; m < mcount; ++m) {
    double scheduled_total = 0.0;
    double covered = 0.0;  // sum over owners of a_k * w_bar
    for (std::size_t c = 0; c < k; ++c) {
      if (!state.owns[c][m] || !schedule[c]) continue;
      scheduled_total += static_cast<double>(state.samples[c]);
      covered += state.w_bar[c][m];
    }
    if (scheduled_total == 0.0) {
      t.per_modality[m] = state.zeta[m] * state.zeta[m];
      t.a1 += t.per_modality[m];
      continue;
    }
    double inner = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (!state.owns[c][m]) continue;
      const double a = schedule[c] ? 1.0 : 0.0;
      const double wt = schedule[c] ? static_cast<double>(state.samples[c]) / scheduled_total : 0.0;
      const double wb = state.w_bar[c][m];
      const double d = state.delta[c][m];
      inner += (wt + wb - 2.0 * a * wb) * d * d;
    }
    // covered can exceed 1 by rounding only; the factor is clamped at zero.
    const double contribution = 2.0 * std::max(0.0, 1.0 - covered) * inner;
    t.per_modality[m] = contribution;
    t.a2 += contribution;
  }
  return t;
}

std::string GapReport::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << "||theta-psi||^2=" << lhs << " eta^2(A1+A2)=" << rhs;
  for (std::size_t m = 0; m < lhs_per_modality.size(); ++m) {
    os << " m" << m << ":" << lhs_per_modality[m] << "/" << rhs_per_modality[m];
  }
  return os.str();
}

GapReport bound_gap_check(const MultimodalModel& theta, const MultimodalModel& psi,
                             const BoundTerms& terms, double eta, double tol) {
  GapReport r;
  const double eta2 = eta * eta;
  for (std::size_t mi = 0; mi < theta.modality_count(); ++mi) {
    const double l = theta.block_squared_distance(modality(mi), psi);
    r.lhs_per_modality.push_back(l);
    r.lhs += l;
    r.rhs_per_modality.push_back(eta2 * terms.per_modality.at(mi));
  }
  r.rhs = eta2 * terms.total();
  r.holds = r.lhs <= r.rhs + tol * std::max(1.0, r.rhs);
  return r;
}

namespace {

void fold_pair(const TrajectoryPoint& a, const TrajectoryPoint& b, SmoothnessEstimate& est) {
  const double dist = std::sqrt(kernels::sq_dist(a.theta, b.theta));
  if (dist < 1e-12) return;
  ++est.pairs;
  est.rho = std::max(est.rho, std::abs(a.loss - b.loss) / dist);
  if (!a.gradient.empty() && !b.gradient.empty()) {
    est.gamma = std::max(est.gamma, std::sqrt(kernels::sq_dist(a.gradient, b.gradient)) / dist);
  }
}

}  // namespace

SmoothnessEstimate estimate_rho_gamma(std::span<const TrajectoryPoint> trajectory, double safety) {
  SmoothnessEstimate est;
  est.safety = safety;
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    for (std::size_t j = i + 1; j < trajectory.size(); ++j) fold_pair(trajectory[i], trajectory[j], est);
  }
  return est;
}

void SmoothnessTracker::add(TrajectoryPoint point) {
  for (const auto& p : points_) fold_pair(p, point, est_);
  points_.push_back(std::move(point));
}

}  // namespace mfl
