#pragma once

// Per-round convergence-bound bookkeeping: exact gradient constants at the
// previous global model, the virtual full-participation step, and the
// scheduling-dependent bound terms A1/A2.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mfl/model.hpp"

namespace mfl {

using Schedule = std::vector<std::uint8_t>;  // a_k in {0, 1}

struct BoundState {
  std::vector<double> zeta;                 // per modality, ||grad H(theta_m)||
  std::vector<std::vector<double>> delta;   // [client][modality], 0 for non-owners
  std::vector<std::vector<double>> w_bar;   // [client][modality], D_k / sum over owners
  std::vector<std::vector<std::uint8_t>> owns;  // [client][modality]
  std::vector<std::size_t> samples;         // D_k

  std::size_t clients() const { return samples.size(); }
  std::size_t modalities() const { return zeta.size(); }

  // Owner structure and weights only; zeta/delta zero.
  static BoundState structure(std::span<const ClientDataset> clients, std::size_t modality_count);
};

struct ExactConstants {
  BoundState bounds;
  Gradient global;              // blockwise global subgradient
  std::vector<Gradient> local;  // per client, zero blocks for missing modalities
};

ExactConstants exact_constants(const MultimodalModel& model, std::span<const ClientDataset> clients,
                               const TrainingConfig& cfg);

// psi_m = theta_m - eta * g_m
MultimodalModel virtual_step(const MultimodalModel& previous, const Gradient& global, double eta);

struct BoundTerms {
  double a1 = 0.0;
  double a2 = 0.0;
  std::vector<double> per_modality;  // contribution of each modality to a1 + a2

  double total() const { return a1 + a2; }
};

BoundTerms bound_terms(std::span<const std::uint8_t> schedule, const BoundState& state);

struct GapReport {
  double lhs = 0.0;  // ||theta - psi||^2
  double rhs = 0.0;  // eta^2 (A1 + A2)
  std::vector<double> lhs_per_modality;
  std::vector<double> rhs_per_modality;
  bool holds = true;

  std::string describe() const;
};

// ||theta^t - psi^t||^2 <= eta^2 (A1 + A2) + tol, with tol relative to the rhs scale.
GapReport bound_gap_check(const MultimodalModel& theta, const MultimodalModel& psi,
                             const BoundTerms& terms, double eta, double tol = 1e-9);

struct TrajectoryPoint {
  std::vector<double> theta;  // flattened parameters
  double loss = 0.0;
  std::vector<double> gradient;  // flattened
};

struct SmoothnessEstimate {
  double rho = 0.0;    // raw maxima over pairs
  double gamma = 0.0;
  double safety = 1.5;
  std::size_t pairs = 0;

  double rho_hat() const { return safety * rho; }
  double gamma_hat() const { return safety * gamma; }
};

// Max over all pairs of |H(a)-H(b)|/|a-b| and |g(a)-g(b)|/|a-b|; pairs closer
// than 1e-12 are skipped.
SmoothnessEstimate estimate_rho_gamma(std::span<const TrajectoryPoint> trajectory,
                                      double safety = 1.5);

// Incremental form of the same estimate, for long trajectories.
class SmoothnessTracker {
 public:
  explicit SmoothnessTracker(double safety = 1.5) { est_.safety = safety; }
  void add(TrajectoryPoint point);
  const SmoothnessEstimate& estimate() const { return est_; }
  std::size_t size() const { return points_.size(); }

 private:
  std::vector<TrajectoryPoint> points_;
  SmoothnessEstimate est_;
};

}  // namespace mfl
