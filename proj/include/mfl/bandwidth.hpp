#pragma once

// Optimal FDMA bandwidth split for a fixed schedule: minimise
// sum_k Q_k e_com,k(B_k) subject to the per-client deadline and the shared
// budget, by the KKT interval scan over the ordered marginal costs kappa_k.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfl/wireless.hpp"

namespace mfl {

struct SolverTolerances {
  double eps_tau = 1e-9;    // s
  double eps_b = 1.0;       // Hz
  double eps_kappa = 1e-12; // relative
  int max_iterations = 200;
};

// One scheduled client as the solver sees it.
struct BandwidthClient {
  ClientId id = 0;
  double queue = 0.0;          // Q_k, J
  double upload_bits = 0.0;    // Gamma_k
  double compute_latency_s = 0.0;
  double gain = 0.0;           // h_k

  static BandwidthClient from(ClientId id, double queue, const CostProfile& cost, double gain,
                              const WirelessParams& params);
};

// Gamma_k / r(B)
double comm_latency(const BandwidthClient& c, double bandwidth_hz, const WirelessParams& params);
// d(Gamma_k / r)/dB, always negative
double comm_latency_slope(const BandwidthClient& c, double bandwidth_hz, const WirelessParams& params);

// Smallest bandwidth meeting the deadline; nullopt if the deadline cannot be
// met within [1 Hz, 10 B_max]. Throws NumericalError if the root-find stalls.
std::optional<double> solve_b_min(const BandwidthClient& c, const WirelessParams& params,
                                  const SolverTolerances& tol = {});

bool feasibility(std::span<const std::optional<double>> b_mins, const WirelessParams& params);

// Marginal objective Q p dGamma/r / dB; negative for Q > 0, zero for Q = 0.
double kappa_at(const BandwidthClient& c, double bandwidth_hz, const WirelessParams& params);
double kappa_slope(const BandwidthClient& c, double bandwidth_hz, const WirelessParams& params);

// B with kappa_at(B) = target on [1 Hz, 10 B_max]. Throws ConfigError if the
// target lies outside the attainable range.
double boundary_bandwidth(const BandwidthClient& c, double kappa_target, const WirelessParams& params,
                          const SolverTolerances& tol = {});

enum class AllocationStatus { Infeasible, TightMin, InteriorInterval, BeyondLast };

const char* status_name(AllocationStatus s);

struct AllocationResult {
  AllocationStatus status = AllocationStatus::Infeasible;
  std::size_t interval = 0;  // j for InteriorInterval: kappa* in (kappa_{i_j}, kappa_{i_{j+1}}]
  std::vector<double> bandwidth;  // parallel to the input clients; zeros when infeasible
  std::vector<double> b_min;      // zeros where infeasible
  std::optional<double> kappa;
  std::vector<double> lambda4;
  std::vector<std::size_t> order;  // ascending kappa_k, ties by client id
};

AllocationResult allocate(std::span<const BandwidthClient> clients, const WirelessParams& params,
                          const SolverTolerances& tol = {});

// sum_k Q_k p Gamma_k / r(B_k)
double j3(std::span<const BandwidthClient> clients, std::span<const double> bandwidth,
          const WirelessParams& params);

struct KktReport {
  double budget_residual = 0.0;       // |sum B - B_max|, Hz
  double lower_violation = 0.0;       // max(B_min - B), Hz
  double stationarity = 0.0;          // max relative residual of E2
  double complementary = 0.0;         // max lambda4 * |latency slack|
  double min_lambda4 = 0.0;
  bool holds = false;

  std::string describe() const;
};

KktReport check_kkt(std::span<const BandwidthClient> clients, const AllocationResult& result,
                    const WirelessParams& params, const SolverTolerances& tol = {},
                    double stationarity_tol = 1e-6);

}  // namespace mfl
