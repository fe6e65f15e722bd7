#pragma once

// FDMA uplink, local computation, and per-round energy bookkeeping.
// Everything is SI: W, Hz, J, s, bits. dBm/dB values are converted when the
// configuration is loaded.

#include <cstdint>
#include <span>
#include <vector>

#include "mfl/model.hpp"

namespace mfl {

double dbm_to_watt(double dbm);
double db_to_linear(double db);

struct WirelessParams {
  double bandwidth_max_hz = 10e6;
  double tx_power_w = 0.19952623149688797;          // 23 dBm
  double noise_psd_w_per_hz = 3.981071705534973e-21;  // -174 dBm/Hz
  double tau_max_s = 0.01;
  double energy_per_round_j = 0.01;
  double cpu_hz = 1.55e9;
  double energy_coefficient = 1e-27;  // alpha
  std::vector<double> cycles_per_sample;  // beta_m, one per modality
  double fusion_cycles = 50.0;            // beta_0
  std::size_t bits_per_parameter = 32;
  // When non-empty, overrides bits_per_parameter x parameter count per modality.
  std::vector<double> upload_bits;
  // Upload every submodel regardless of ownership (literal reading of the
  // upload-size sum); off by default.
  bool upload_all_modalities = false;
  double cell_radius_m = 500.0;
  double min_distance_m = 10.0;

  void validate(std::size_t modality_count) const;
};

// Log-distance pathloss 128.1 + 37.6 log10(d / 1 km), in dB.
double pathloss_db(double distance_m);
// Large-scale gain 10^(-PL/10); the mean of channel_gain at this distance.
double mean_channel_gain(double distance_m);

// Client distances, uniform over the cell disk (clamped at min_distance_m).
std::vector<double> place_clients(std::size_t clients, const WirelessParams& params,
                                  std::uint64_t seed);

// Pathloss times a unit-mean exponential small-scale draw; keyed by
// (seed, round, client) so evaluation order never changes the draw.
double channel_gain(double distance_m, std::uint64_t seed, std::size_t round, ClientId client);

struct ChannelState {
  std::vector<double> gain;        // h_k^t
  std::vector<double> distance_m;  // d_k
};

ChannelState draw_channels(std::span<const double> distances, std::uint64_t seed,
                           std::size_t round);

// B log2(1 + p h / (B N0)). Throws for B <= 0.
double uplink_rate(double bandwidth_hz, double gain, const WirelessParams& params);

struct CostProfile {
  double upload_bits = 0.0;        // Gamma_k
  double cycles_per_sample = 0.0;  // Phi_k
  std::size_t samples = 0;         // D_k
};

CostProfile cost_profile(std::span<const ModalityId> modalities, const MultimodalModel& model,
                         const WirelessParams& params, std::size_t samples);

struct LatencyEnergy {
  double latency_s = 0.0;
  double energy_j = 0.0;
};

LatencyEnergy comm_latency_energy(const CostProfile& cost, double bandwidth_hz, double gain,
                                  const WirelessParams& params);
LatencyEnergy comp_latency_energy(const CostProfile& cost, const WirelessParams& params);

// tau_com + tau_cmp <= tau_max
bool check_latency(const CostProfile& cost, double bandwidth_hz, double gain,
                   const WirelessParams& params);

struct EnergyLedger {
  std::vector<double> virtual_queue;  // Q_k^t, J
  std::vector<double> residual;       // q_k of the last step, J
  std::vector<double> cumulative;     // energy spent so far, J

  static EnergyLedger empty(std::size_t clients);
};

// q_k = E_add - a_k * consumption_k ; Q_k <- max(Q_k - q_k, 0)
EnergyLedger ledger_step(const EnergyLedger& ledger, std::span<const std::uint8_t> scheduled,
                         std::span<const double> consumption_j, const WirelessParams& params);

}  // namespace mfl
