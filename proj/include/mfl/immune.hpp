#pragma once

// Client scheduling by clonal selection over participation vectors, with an
// exhaustive oracle for small client counts.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "mfl/analysis.hpp"
#include "mfl/lyapunov.hpp"
#include "mfl/rng.hpp"

namespace mfl {

struct ImmuneParams {
  std::size_t population = 20;   // S
  std::size_t generations = 10;  // G
  std::size_t clone_factor = 5;  // mu
  double mutation_rate = 0.175;  // z
  double iota = 1.0;             // affinity exponent
  double eps1 = 1.0;
  double eps2_scale = 0.2;       // eps2 = eps2_scale * mean affinity of the generation
  std::optional<std::size_t> dis;  // Hamming threshold; floor(K/4) when unset
  bool keep_best = true;         // force the best antibody into the clone set

  std::size_t hamming_threshold(std::size_t clients) const { return dis ? *dis : clients / 4; }
  void validate() const;
};

struct Antibody {
  Schedule a;
  Objective j2;
  double affinity = 0.0;
  double concentration = 0.0;
  double incentive = 0.0;
};

// (J2max - J2)^iota with J2max over the feasible members; infeasible -> 0.
std::vector<double> affinity(std::span<const Objective> j2, double iota);
// Fraction of the population within Hamming distance dis (self included).
std::vector<double> concentration(std::span<const Schedule> population, std::size_t dis);
double incentive(double affinity, double concentration, double eps1, double eps2);

std::size_t hamming(const Schedule& a, const Schedule& b);

using J2Function = std::function<Objective(const Schedule&)>;

struct ImmuneResult {
  Schedule best;
  Objective value;
  std::vector<double> best_j2_per_generation;  // best feasible J2 in A^g, g = 0..G
  std::size_t evaluations = 0;
};

// `initial`, when given, replaces the random first population (size must be S).
ImmuneResult immune_search(std::size_t clients, const J2Function& j2, const ImmuneParams& params, Rng& rng,
                           const std::vector<Schedule>* initial = nullptr);

struct ExhaustiveResult {
  Schedule best;
  Objective value;
};

// Argmin over all 2^K schedules, ties to the lowest integer encoding (bit k = client k).
ExhaustiveResult exhaustive_search(std::size_t clients, const J2Function& j2);

Schedule decode_schedule(std::uint64_t bits, std::size_t clients);
std::uint64_t encode_schedule(const Schedule& a);

}  // namespace mfl
