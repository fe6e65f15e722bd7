#include "mfl/bandwidth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "detail/root.hpp"
#include "mfl/error.hpp"

namespace mfl {

namespace {

constexpr double kLn2 = 0.69314718055994530942;
constexpr double kLowestHz = 1.0;

double upper_hz(const WirelessParams& p) { return 10.0 * p.bandwidth_max_hz; }

// SNR at bandwidth B: x = p h / (B N0)
double snr(const BandwidthClient& c, double b, const WirelessParams& p) {
  return p.tx_power_w * c.gain / (b * p.noise_psd_w_per_hz);
}

// x/(1+x) - ln(1+x), series near zero where the difference cancels.
double curvature_term(double x) {
  if (x < 1e-4) return x * x * (-0.5 + x * (2.0 / 3.0 + x * (-0.75 + x * 0.8)));
  return x / (1.0 + x) - std::log1p(x);
}

void check_client(const BandwidthClient& c) {
  if (!(c.gain > 0.0) || !(c.upload_bits > 0.0) || !(c.queue >= 0.0) || !(c.compute_latency_s >= 0.0)) {
    throw ConfigError("bandwidth client " + std::to_string(c.id) +
                      " needs positive gain and upload size and non-negative queue");
  }
}

}  // namespace

BandwidthClient BandwidthClient::from(ClientId id, double queue, const CostProfile& cost, double gain,
                                      const WirelessParams& params) {
  return BandwidthClient{id, queue, cost.upload_bits, comp_latency_energy(cost, params).latency_s, gain};
}

double comm_latency(const BandwidthClient& c, double b, const WirelessParams& p) {
  if (!(b > 0.0)) throw ConfigError("bandwidth must be positive");
  return c.upload_bits * kLn2 / (b * std::log1p(snr(c, b, p)));
}

double comm_latency_slope(const BandwidthClient& c, double b, const WirelessParams& p) {
  const double x = snr(c, b, p);
  const double l = std::log1p(x);
  return c.upload_bits * kLn2 * curvature_term(x) / (b * b * l * l);
}

std::optional<double> solve_b_min(const BandwidthClient& c, const WirelessParams& p,
                                  const SolverTolerances& tol) {
  check_client(c);
  const double avail = p.tau_max_s - c.compute_latency_s;
  if (!(avail > 0.0)) return std::nullopt;
  const double hi = upper_hz(p);
  if (comm_latency(c, hi, p) > avail) return std::nullopt;
  if (comm_latency(c, kLowestHz, p) <= avail) return kLowestHz;
  // Work in s = ln B: the latency curve is close to 1/B there.
  auto f = [&](double s) {
    const double b = std::exp(s);
    return std::pair{comm_latency(c, b, p) - avail, comm_latency_slope(c, b, p) * b};
  };
  const double guess = std::log(std::clamp(c.upload_bits / avail, kLowestHz * 2, hi / 2));
  const auto r = detail::safeguarded_newton(f, std::log(kLowestHz), std::log(hi), guess,
                                            1e-3 * tol.eps_tau, 1e-15, tol.max_iterations);
  if (!r.converged) {
    throw NumericalError("B_min search for client " + std::to_string(c.id) +
                         " did not converge; bracket [" + std::to_string(std::exp(r.lo)) + ", " +
                         std::to_string(std::exp(r.hi)) + "] Hz");
  }
  return std::exp(r.x);
}

bool feasibility(std::span<const std::optional<double>> b_mins, const WirelessParams& p) {
  double total = 0.0;
  for (const auto& b : b_mins) {
    if (!b) return false;
    total += *b;
  }
  return total <= p.bandwidth_max_hz;
}

double kappa_at(const BandwidthClient& c, double b, const WirelessParams& p) {
  return c.queue * p.tx_power_w * comm_latency_slope(c, b, p);
}

double kappa_slope(const BandwidthClient& c, double b, const WirelessParams& p) {
  const double x = snr(c, b, p);
  const double l = std::log1p(x);
  const double u = curvature_term(x);
  const double k = c.queue * p.tx_power_w * c.upload_bits * kLn2;
  const double bracket = x * x / ((1.0 + x) * (1.0 + x)) - 2.0 * u + 2.0 * u * x / ((1.0 + x) * l);
  return k * bracket / (b * b * b * l * l);
}

namespace {

// Inverse of kappa_at on [lo, hi], clamped to the ends when the target is out of range.
double bandwidth_for_kappa(const BandwidthClient& c, double target, double lo, double hi, double warm,
                           const WirelessParams& p, const SolverTolerances& tol) {
  if (kappa_at(c, lo, p) >= target) return lo;
  if (kappa_at(c, hi, p) <= target) return hi;
  auto f = [&](double s) {
    const double b = std::exp(s);
    return std::pair{kappa_at(c, b, p) - target, kappa_slope(c, b, p) * b};
  };
  const double guess = (warm > lo && warm < hi) ? std::log(warm) : 0.5 * (std::log(lo) + std::log(hi));
  const auto r = detail::safeguarded_newton(f, std::log(lo), std::log(hi), guess,
                                            tol.eps_kappa * std::abs(target), 1e-15, tol.max_iterations);
  if (!r.converged) {
    throw NumericalError("boundary bandwidth for client " + std::to_string(c.id) +
                         " did not converge; bracket [" + std::to_string(std::exp(r.lo)) + ", " +
                         std::to_string(std::exp(r.hi)) + "] Hz");
  }
  return std::exp(r.x);
}

}  // namespace

double boundary_bandwidth(const BandwidthClient& c, double target, const WirelessParams& p,
                          const SolverTolerances& tol) {
  check_client(c);
  const double lo = kLowestHz;
  const double hi = upper_hz(p);
  if (!(target >= kappa_at(c, lo, p) && target <= kappa_at(c, hi, p))) {
    throw ConfigError("kappa target outside the attainable range of client " + std::to_string(c.id));
  }
  return bandwidth_for_kappa(c, target, lo, hi, 0.0, p, tol);
}

const char* status_name(AllocationStatus s) {
  switch (s) {
    case AllocationStatus::Infeasible: return "infeasible";
    case AllocationStatus::TightMin: return "tight_min";
    case AllocationStatus::InteriorInterval: return "interior_interval";
    case AllocationStatus::BeyondLast: return "beyond_last";
  }
  return "unknown";
}

namespace {

// Solve sum_{k in interior} B_k(kappa) = budget for kappa in (kappa_lo, kappa_hi],
// kappa_hi = 0 meaning the open-ended last interval. Works in y = ln(-kappa).
double solve_kappa_star(std::span<const BandwidthClient> clients, std::span<const std::size_t> interior,
                        std::span<const double> b_min, double budget, double kappa_lo, double kappa_hi,
                        std::vector<double>& bandwidth, const WirelessParams& p,
                        const SolverTolerances& tol) {
  const double hi_hz = upper_hz(p);
  auto eval = [&](double y) {
    const double kappa = -std::exp(y);
    double total = 0.0;
    double slope = 0.0;
    for (std::size_t k : interior) {
      const double b = bandwidth_for_kappa(clients[k], kappa, b_min[k], hi_hz, bandwidth[k], p, tol);
      bandwidth[k] = b;
      total += b;
      if (b > b_min[k] && b < hi_hz) slope += kappa / kappa_slope(clients[k], b, p);
    }
    return std::pair{total - budget, slope};
  };
  const double y_small_total = std::log(-kappa_lo);
  double y_large_total;
  if (kappa_hi < 0.0) {
    y_large_total = std::log(-kappa_hi);
  } else {
    y_large_total = y_small_total - 1.0;
    int guard = 0;
    while (eval(y_large_total).first < 0.0) {
      y_large_total -= 2.0;
      if (++guard > 400) throw NumericalError("could not bracket kappa* from above");
    }
  }
  const auto r = detail::safeguarded_newton(eval, y_large_total, y_small_total,
                                            0.5 * (y_large_total + y_small_total), 1e-3 * tol.eps_b,
                                            tol.eps_kappa, tol.max_iterations);
  if (!r.converged) {
    std::ostringstream os;
    os << "kappa* search did not converge; bracket [" << -std::exp(r.hi) << ", " << -std::exp(r.lo)
       << "]";
    throw NumericalError(os.str());
  }
  eval(r.x);
  return -std::exp(r.x);
}

void enforce_budget(std::vector<double>& bandwidth, std::span<const std::size_t> interior, double cap) {
  if (interior.empty()) return;
  for (int guard = 0; guard < 64; ++guard) {
    double total = 0.0;
    for (double b : bandwidth) total += b;
    if (total <= cap) return;
    const std::size_t k = *std::max_element(interior.begin(), interior.end(),
                                            [&](std::size_t a, std::size_t b) { return bandwidth[a] < bandwidth[b]; });
    bandwidth[k] = std::nextafter(bandwidth[k] - (total - cap), 0.0);
  }
}

}  // namespace

AllocationResult allocate(std::span<const BandwidthClient> clients, const WirelessParams& p,
                          const SolverTolerances& tol) {
  const std::size_t n = clients.size();
  AllocationResult out;
  out.bandwidth.assign(n, 0.0);
  out.b_min.assign(n, 0.0);
  out.lambda4.assign(n, 0.0);
  if (n == 0) throw ConfigError("allocation needs at least one scheduled client");

  double total_min = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto b = solve_b_min(clients[k], p, tol);
    if (!b) return out;
    out.b_min[k] = *b;
    total_min += *b;
  }
  if (total_min > p.bandwidth_max_hz) {
    std::fill(out.b_min.begin(), out.b_min.end(), 0.0);
    return out;
  }

  std::vector<double> kappa(n);
  for (std::size_t k = 0; k < n; ++k) kappa[k] = kappa_at(clients[k], out.b_min[k], p);
  out.order.resize(n);
  std::iota(out.order.begin(), out.order.end(), 0);
  std::sort(out.order.begin(), out.order.end(), [&](std::size_t a, std::size_t b) {
    if (kappa[a] != kappa[b]) return kappa[a] < kappa[b];
    return clients[a].id < clients[b].id;
  });

  auto fill_lambda = [&](double kstar) {
    for (std::size_t k = 0; k < n; ++k) {
      if (out.bandwidth[k] > out.b_min[k]) continue;
      const double slope = comm_latency_slope(clients[k], out.b_min[k], p);
      out.lambda4[k] = std::max(0.0, kstar / slope - clients[k].queue * p.tx_power_w);
    }
  };

  if (total_min >= p.bandwidth_max_hz - tol.eps_b) {
    out.status = AllocationStatus::TightMin;
    out.bandwidth = out.b_min;
    out.kappa = kappa[out.order.front()];
    fill_lambda(*out.kappa);
    return out;
  }

  out.bandwidth = out.b_min;
  const bool all_idle = std::all_of(clients.begin(), clients.end(), [](const BandwidthClient& c) { return c.queue == 0.0; });
  if (all_idle) {
    // Flat objective: every split is optimal; share the slack evenly.
    const double share = (p.bandwidth_max_hz - total_min) / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) out.bandwidth[k] = out.b_min[k] + share;
    enforce_budget(out.bandwidth, out.order, p.bandwidth_max_hz);
    out.status = AllocationStatus::BeyondLast;
    out.kappa = 0.0;
    return out;
  }

  const double hi_hz = upper_hz(p);
  std::size_t j = 1;
  for (; j < n; ++j) {
    const double target = kappa[out.order[j]];
    double sum = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t k = out.order[r];
      sum += r < j ? bandwidth_for_kappa(clients[k], target, out.b_min[k], hi_hz, 0.0, p, tol)
                   : out.b_min[k];
    }
    if (sum >= p.bandwidth_max_hz) break;  // Pre holds on (kappa_{i_j}, kappa_{i_{j+1}}]
  }

  std::vector<std::size_t> interior(out.order.begin(), out.order.begin() + static_cast<std::ptrdiff_t>(j));
  double fixed = 0.0;
  for (std::size_t r = j; r < n; ++r) fixed += out.b_min[out.order[r]];
  const double kappa_lo = kappa[out.order[j - 1]];
  const double kappa_hi = j < n ? kappa[out.order[j]] : 0.0;
  out.status = j < n ? AllocationStatus::InteriorInterval : AllocationStatus::BeyondLast;
  out.interval = j < n ? j : 0;
  const double kstar = solve_kappa_star(clients, interior, out.b_min, p.bandwidth_max_hz - fixed,
                                        kappa_lo, kappa_hi, out.bandwidth, p, tol);
  enforce_budget(out.bandwidth, interior, p.bandwidth_max_hz);
  out.kappa = kstar;
  fill_lambda(kstar);
  return out;
}

double j3(std::span<const BandwidthClient> clients, std::span<const double> bandwidth,
          const WirelessParams& p) {
  if (clients.size() != bandwidth.size()) throw ConfigError("j3 needs one bandwidth per client");
  double total = 0.0;
  for (std::size_t k = 0; k < clients.size(); ++k) {
    if (!(bandwidth[k] > 0.0)) throw ConfigError("j3 needs positive bandwidth for scheduled clients");
    total += clients[k].queue * p.tx_power_w * comm_latency(clients[k], bandwidth[k], p);
  }
  return total;
}

std::string KktReport::describe() const {
  std::ostringstream os;
  os << "budget=" << budget_residual << "Hz lower=" << lower_violation << "Hz stationarity="
     << stationarity << " complementary=" << complementary << " min_lambda4=" << min_lambda4;
  return os.str();
}

KktReport check_kkt(std::span<const BandwidthClient> clients, const AllocationResult& res,
                    const WirelessParams& p, const SolverTolerances& tol, double stationarity_tol) {
  KktReport rep;
  if (res.status == AllocationStatus::Infeasible || !res.kappa) return rep;
  const double kstar = *res.kappa;
  double total = 0.0;
  for (std::size_t k = 0; k < clients.size(); ++k) {
    const double b = res.bandwidth[k];
    total += b;
    rep.lower_violation = std::max(rep.lower_violation, res.b_min[k] - b);
    const double l4 = res.lambda4[k];
    rep.min_lambda4 = k == 0 ? l4 : std::min(rep.min_lambda4, l4);
    const double lhs = (clients[k].queue * p.tx_power_w + l4) * comm_latency_slope(clients[k], b, p);
    const double scale = std::max(std::abs(kstar), std::abs(lhs));
    if (scale > 0.0) rep.stationarity = std::max(rep.stationarity, std::abs(lhs - kstar) / scale);
    const double slack = comm_latency(clients[k], b, p) + clients[k].compute_latency_s - p.tau_max_s;
    rep.complementary = std::max(rep.complementary, l4 * std::abs(slack));
  }
  rep.budget_residual = std::abs(total - p.bandwidth_max_hz);
  const bool budget_ok = res.status == AllocationStatus::TightMin
                             ? total <= p.bandwidth_max_hz && rep.budget_residual <= tol.eps_b
                             : rep.budget_residual <= tol.eps_b;
  // lambda4 is O(Q p); the slackness tolerance scales with it.
  double lambda_scale = 0.0;
  for (double l : res.lambda4) lambda_scale = std::max(lambda_scale, l);
  rep.holds = budget_ok && rep.lower_violation <= tol.eps_b && rep.stationarity < stationarity_tol &&
              rep.min_lambda4 >= 0.0 && rep.complementary <= tol.eps_tau * std::max(1.0, lambda_scale);
  return rep;
}

}  // namespace mfl
