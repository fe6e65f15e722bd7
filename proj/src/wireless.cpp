#include "mfl/wireless.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "mfl/error.hpp"
#include "mfl/rng.hpp"

namespace mfl {

double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

void WirelessParams::validate(std::size_t modality_count) const {
  auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  if (!positive(bandwidth_max_hz) || !positive(tx_power_w) || !positive(noise_psd_w_per_hz) ||
      !positive(tau_max_s) || !positive(energy_per_round_j) || !positive(cpu_hz) ||
      !positive(energy_coefficient) || !positive(cell_radius_m) || !positive(min_distance_m)) {
    throw ConfigError("wireless parameters must be positive and finite");
  }
  if (!(fusion_cycles >= 0.0)) throw ConfigError("fusion cycles must be non-negative");
  if (bits_per_parameter == 0) throw ConfigError("bits per parameter must be positive");
  if (cycles_per_sample.size() != modality_count) {
    throw ConfigError("need one cycles-per-sample value per modality");
  }
  for (double b : cycles_per_sample) {
    if (!positive(b)) throw ConfigError("cycles per sample must be positive");
  }
  if (!upload_bits.empty() && upload_bits.size() != modality_count) {
    throw ConfigError("upload_bits override needs one entry per modality");
  }
  if (min_distance_m > cell_radius_m) throw ConfigError("min distance exceeds the cell radius");
}

double pathloss_db(double distance_m) { return 128.1 + 37.6 * std::log10(distance_m / 1000.0); }

double mean_channel_gain(double distance_m) { return std::pow(10.0, -pathloss_db(distance_m) / 10.0); }

std::vector<double> place_clients(std::size_t clients, const WirelessParams& params,
                                  std::uint64_t seed) {
  Rng rng = substream(seed, Stream::Placement);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> d(clients);
  for (double& x : d) {
    x = std::max(params.min_distance_m, params.cell_radius_m * std::sqrt(unit(rng)));
  }
  return d;
}

double channel_gain(double distance_m, std::uint64_t seed, std::size_t round, ClientId client) {
  Rng rng = substream(seed, Stream::Channel, {round, client});
  std::exponential_distribution<double> fading(1.0);
  return mean_channel_gain(distance_m) * fading(rng);
}

ChannelState draw_channels(std::span<const double> distances, std::uint64_t seed,
                           std::size_t round) {
  ChannelState cs;
  cs.distance_m.assign(distances.begin(), distances.end());
  cs.gain.resize(distances.size());
  for (std::size_t k = 0; k < distances.size(); ++k) {
    cs.gain[k] = channel_gain(distances[k], seed, round, k);
  }
  return cs;
}

double uplink_rate(double bandwidth_hz, double gain, const WirelessParams& params) {
  if (!(bandwidth_hz > 0.0)) throw ConfigError("bandwidth must be positive");
  const double snr = params.tx_power_w * gain / (bandwidth_hz * params.noise_psd_w_per_hz);
  return bandwidth_hz * std::log1p(snr) / std::log(2.0);
}

CostProfile cost_profile(std::span<const ModalityId> modalities, const MultimodalModel& model,
                         const WirelessParams& params, std::size_t samples) {
  CostProfile cost;
  cost.samples = samples;
  auto bits_of = [&](std::size_t m) {
    if (!params.upload_bits.empty()) return params.upload_bits.at(m);
    return static_cast<double>(params.bits_per_parameter) *
           static_cast<double>(model.submodels()[m].parameter_count());
  };
  if (params.upload_all_modalities) {
    for (std::size_t m = 0; m < model.modality_count(); ++m) cost.upload_bits += bits_of(m);
  } else {
    for (ModalityId m : modalities) cost.upload_bits += bits_of(index_of(m));
  }
  for (ModalityId m : modalities) {
    cost.cycles_per_sample += params.cycles_per_sample.at(index_of(m)) + params.fusion_cycles;
  }
  cost.cycles_per_sample -= params.fusion_cycles;
  return cost;
}

LatencyEnergy comm_latency_energy(const CostProfile& cost, double bandwidth_hz, double gain,
                                  const WirelessParams& params) {
  const double rate = uplink_rate(bandwidth_hz, gain, params);
  LatencyEnergy out;
  out.latency_s = cost.upload_bits / rate;
  out.energy_j = params.tx_power_w * out.latency_s;
  return out;
}

LatencyEnergy comp_latency_energy(const CostProfile& cost, const WirelessParams& params) {
  const double work = static_cast<double>(cost.samples) * cost.cycles_per_sample;
  LatencyEnergy out;
  out.latency_s = work / params.cpu_hz;
  out.energy_j = params.energy_coefficient * params.cpu_hz * params.cpu_hz * work;
  return out;
}

bool check_latency(const CostProfile& cost, double bandwidth_hz, double gain,
                   const WirelessParams& params) {
  const double cmp = comp_latency_energy(cost, params).latency_s;
  if (cmp > params.tau_max_s) return false;
  if (!(bandwidth_hz > 0.0)) return false;
  return comm_latency_energy(cost, bandwidth_hz, gain, params).latency_s + cmp <= params.tau_max_s;
}

EnergyLedger EnergyLedger::empty(std::size_t clients) {
  return EnergyLedger{std::vector<double>(clients, 0.0), std::vector<double>(clients, 0.0),
                      std::vector<double>(clients, 0.0)};
}

EnergyLedger ledger_step(const EnergyLedger& ledger, std::span<const std::uint8_t> scheduled,
                         std::span<const double> consumption_j, const WirelessParams& params) {
  const std::size_t k = ledger.virtual_queue.size();
  if (scheduled.size() != k || consumption_j.size() != k) {
    throw ConfigError("ledger step needs one schedule bit and consumption per client");
  }
  EnergyLedger next = ledger;
  for (std::size_t i = 0; i < k; ++i) {
    const double spent = scheduled[i] ? consumption_j[i] : 0.0;
    next.residual[i] = params.energy_per_round_j - spent;
    next.virtual_queue[i] = std::max(ledger.virtual_queue[i] - next.residual[i], 0.0);
    next.cumulative[i] = ledger.cumulative[i] + spent;
  }
  return next;
}

}  // namespace mfl
