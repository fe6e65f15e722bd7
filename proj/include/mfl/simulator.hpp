#pragma once

// End-to-end rounds: channel draw, scheduling, local updates, straggler
// filtering, aggregation, energy ledger, bound ledger and evaluation.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mfl/analysis.hpp"
#include "mfl/bandwidth.hpp"
#include "mfl/baselines.hpp"
#include "mfl/immune.hpp"
#include "mfl/lyapunov.hpp"
#include "mfl/synthetic.hpp"
#include "mfl/wireless.hpp"

namespace mfl {

enum class SchedulerKind { Jcsba, Random, RoundRobin, Selection, Dropout, Full };

const char* scheduler_name(SchedulerKind k);
SchedulerKind parse_scheduler(const std::string& name);

struct ControllerConfig {
  double v = 1.0;
  std::optional<double> rho_hat;  // fixed controller constant; running estimate when unset
  double rho_safety = 1.5;
};

struct BaselineConfig {
  std::optional<std::size_t> n_sched;     // defaults to the mean JCSBA schedule size
  std::vector<double> selection_ratios;   // indexed by modality-combination bitmask
  double p_drop = 0.5;
};

struct SimConfig {
  std::uint64_t seed = 1;
  SyntheticConfig data;
  TrainingConfig training;
  WirelessParams wireless;
  ControllerConfig controller;
  ImmuneParams immune;
  SolverTolerances tolerances;
  BaselineConfig baselines;
  SchedulerKind scheduler = SchedulerKind::Jcsba;
  bool bound_ledger = true;     // exact per-round bound terms (oracle access to all data)
  double bound_safety = 1.5;    // factor on the trajectory rho/gamma for the loss-bound and descent checks
  std::vector<std::string> modality_names;

  std::size_t rounds() const { return training.rounds; }
  void validate() const;
};

// Two modalities, ten clients, 10 MHz cell with a 10 ms round deadline.
SimConfig default_config();

struct ClientRound {
  double bandwidth_hz = 0.0;
  double tau_com_s = 0.0;
  double tau_cmp_s = 0.0;
  double e_com_j = 0.0;
  double e_cmp_j = 0.0;
  bool scheduled = false;
  bool dropped = false;  // missed the deadline; energy spent, upload discarded
  double residual_j = 0.0;  // q_k
  double queue_j = 0.0;     // Q_k after the update
};

struct BoundRecord {
  bool available = false;
  double a1 = 0.0;
  double a2 = 0.0;
  double core_lhs = 0.0;  // ||theta^t - psi^t||^2
  double core_rhs = 0.0;  // eta^2 (A1 + A2)
  double h_prev = 0.0;    // H(theta^{t-1})
  double h_psi = 0.0;     // H(psi^t)
  double h_next = 0.0;    // H(theta^t)
  double grad_sq = 0.0;   // sum_m ||g_m||^2 at theta^{t-1}
  std::vector<double> zeta;
  // Filled after the run, once rho/gamma are known.
  double loss_bound_lhs = 0.0, loss_bound_rhs = 0.0;
  double descent_lhs = 0.0, descent_rhs = 0.0;
  bool descent_checked = false;
};

struct RoundRecord {
  std::size_t t = 0;
  std::vector<ClientRound> clients;
  std::string status;  // allocation status (JCSBA) or scheduler name
  double j2 = 0.0;     // controller objective of the chosen schedule (JCSBA)
  double controller_a = 0.0;  // A1 + A2 as the controller estimated it
  LossParts loss;      // H on the training federation after the update
  double accuracy = 0.0;
  std::vector<double> unimodal_accuracy;
  double energy_j = 0.0;  // spent this round, all clients
  BoundRecord bound;
  double solver_seconds = 0.0;  // wall-clock; not part of the deterministic exports

  std::size_t scheduled() const;
  std::size_t aggregated() const;
};

struct BoundSummary {
  SmoothnessEstimate smoothness;
  std::size_t core_violations = 0;
  std::size_t loss_bound_violations = 0;
  std::size_t descent_violations = 0;
  std::size_t descent_checked = 0;
  bool descent_enabled = false;  // eta < 1/gamma_hat
  std::vector<std::string> reports;  // one line per violation
};

struct RunArtifact {
  SimConfig config;
  std::vector<RoundRecord> records;
  MultimodalModel initial;
  MultimodalModel final_model;
  EnergyLedger ledger;
  BoundSummary bounds;
  std::vector<std::vector<ModalityId>> modalities;  // M_k as generated
  std::size_t n_sched = 0;                          // baseline target actually used

  double total_energy() const;
  double mean_scheduled() const;
  double final_accuracy() const;
  std::vector<double> final_unimodal_accuracy() const;
  double max_queue_over_t() const;
};

RunArtifact run(const SimConfig& cfg);

struct SchedulerStats {
  SchedulerKind kind = SchedulerKind::Jcsba;
  std::vector<double> accuracy;  // per seed
  std::vector<double> energy;
  std::vector<std::vector<double>> unimodal;

  double mean_accuracy() const;
  double mean_energy() const;
};

struct Comparison {
  std::vector<std::uint64_t> seeds;
  std::vector<SchedulerStats> schedulers;
  std::vector<double> n_sched;  // per seed
};

// Runs JCSBA first on each seed, then every other scheduler with n_sched set
// to JCSBA's rounded mean schedule size unless the config fixes it.
Comparison compare(const SimConfig& base, const std::vector<SchedulerKind>& kinds,
                   const std::vector<std::uint64_t>& seeds);

double mean(const std::vector<double>& v);
double stddev(const std::vector<double>& v);

}  // namespace mfl
