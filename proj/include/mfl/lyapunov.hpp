#pragma once

// Drift-plus-penalty objectives for one round: J1 over (a, B), J3 over B for a
// fixed schedule, and J2(a) = J1(a, B*(a)).

#include <compare>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "mfl/analysis.hpp"
#include "mfl/bandwidth.hpp"
#include "mfl/wireless.hpp"

namespace mfl {

struct LyapunovConfig {
  double v = 1.0;        // trade-off weight V
  double eta = 0.5;      // learning rate seen by the bound
  double rho_hat = 1.0;  // Lipschitz estimate used by the controller

  void validate() const;
};

struct RoundDecision {
  Schedule a;
  std::vector<double> bandwidth;  // Hz, zero for unscheduled clients

  std::size_t scheduled() const;
};

// Objective value with infeasibility ranked after every finite value.
struct Objective {
  bool feasible = false;
  double value = 0.0;

  static Objective infeasible() { return {}; }
  static Objective of(double v) { return {true, v}; }
};

bool operator<(const Objective& a, const Objective& b);
bool operator==(const Objective& a, const Objective& b);

// What the server knows when it decides round t.
struct RoundContext {
  BoundState bounds;                 // zeta/delta estimates and owner weights
  std::vector<double> queue;         // Q_k at round start
  std::vector<CostProfile> costs;
  std::vector<double> gain;          // h_k this round
  WirelessParams params;
  SolverTolerances tol;
  LyapunovConfig cfg;

  std::size_t clients() const { return queue.size(); }
  void validate() const;
};

// Energy the client would spend this round at bandwidth B (B > 0).
double round_energy(const RoundContext& ctx, ClientId k, double bandwidth_hz);

// Binary schedule, bandwidth only on scheduled clients, shared budget and deadlines.
bool decision_feasible(const RoundDecision& d, const RoundContext& ctx);

Objective j1(const RoundDecision& d, const RoundContext& ctx);
double j3(const RoundDecision& d, const RoundContext& ctx);

struct J2Evaluation {
  Objective value;
  RoundDecision decision;
  AllocationStatus status = AllocationStatus::Infeasible;
};

// J2 with per-round memoisation of schedules already solved.
class J2Evaluator {
 public:
  explicit J2Evaluator(const RoundContext& ctx);

  const J2Evaluation& evaluate(const Schedule& a);
  Objective operator()(const Schedule& a) { return evaluate(a).value; }
  const RoundContext& context() const { return ctx_; }
  std::size_t solves() const { return cache_.size(); }

 private:
  const RoundContext& ctx_;
  std::vector<BandwidthClient> base_;
  std::vector<std::optional<double>> b_min_;
  std::map<Schedule, J2Evaluation> cache_;
};

}  // namespace mfl
