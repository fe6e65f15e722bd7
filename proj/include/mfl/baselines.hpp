#pragma once

// Comparison schedulers: Random, Round-Robin, Selection and modality Dropout.
// None of them looks at deadlines, so their uploads can miss tau_max.

#include <cstdint>
#include <string>
#include <vector>

#include "mfl/lyapunov.hpp"
#include "mfl/model.hpp"

namespace mfl {

enum class BaselineKind { Random, RoundRobin, Selection, Dropout };

const char* baseline_name(BaselineKind k);

struct BaselineState {
  std::size_t clients = 0;
  std::size_t round = 1;        // t, 1-based
  std::size_t n_sched = 1;      // target schedule size
  double bandwidth_max_hz = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::vector<ModalityId>> modalities;  // M_k
  // Selection: ||theta_k^{t-1} - theta^0|| per client and the per-combination ratios.
  std::vector<double> drift;
  std::vector<double> selection_ratios;  // keyed by combination code, empty = n_sched / K for all
  double p_drop = 0.5;                   // Dropout
};

struct BaselineDecision {
  RoundDecision decision;
  // Modalities each scheduled client trains and uploads this round.
  std::vector<std::vector<ModalityId>> modalities;
};

// Bitmask of a modality set, used to group clients by combination.
std::uint64_t combination_code(const std::vector<ModalityId>& mods);

BaselineDecision baseline_schedule(BaselineKind kind, const BaselineState& state);

}  // namespace mfl
