#include <cmath>
#include <random>

#include "doctest.h"
#include "instances.hpp"
#include "mfl/error.hpp"
#include "mfl/immune.hpp"
#include "mfl/lyapunov.hpp"

using namespace mfl;
using mfl::test::random_feasible_point;
using mfl::test::random_round_context;

namespace {

// Independent J1: bound penalty minus queue-weighted energy residuals.
double j1_oracle(const RoundContext& ctx, const Schedule& a, const std::vector<double>& b) {
  long double value = ctx.cfg.v * ctx.cfg.eta * ctx.cfg.rho_hat * std::sqrt(bound_terms(a, ctx.bounds).total());
  for (std::size_t k = 0; k < a.size(); ++k) {
    long double spent = 0.0L;
    if (a[k]) {
      const auto& c = ctx.costs[k];
      const long double rate = b[k] * std::log2(1.0L + ctx.params.tx_power_w * ctx.gain[k] /
                                                          (b[k] * ctx.params.noise_psd_w_per_hz));
      spent = ctx.params.tx_power_w * c.upload_bits / rate + ctx.params.energy_coefficient * ctx.params.cpu_hz *
                                                                 ctx.params.cpu_hz * c.samples * c.cycles_per_sample;
    }
    value -= ctx.queue[k] * (ctx.params.energy_per_round_j - spent);
  }
  return static_cast<double>(value);
}

}  // namespace

TEST_CASE("objective ordering puts infeasible last") {
  CHECK(Objective::of(5.0) < Objective::infeasible());
  CHECK_FALSE(Objective::infeasible() < Objective::of(5.0));
  CHECK_FALSE(Objective::infeasible() < Objective::infeasible());
  CHECK(Objective::of(-1.0) < Objective::of(0.0));
  CHECK(Objective::infeasible() == Objective::infeasible());
  CHECK_FALSE(Objective::of(1.0) == Objective::infeasible());
}

TEST_CASE("empty schedule costs the uncovered bound and the full energy credit") {
  auto ctx = random_round_context(1, 5);
  RoundDecision d{Schedule(5, 0), std::vector<double>(5, 0.0)};
  double credit = 0.0;
  for (double q : ctx.queue) credit += q * ctx.params.energy_per_round_j;
  const double z2 = ctx.bounds.zeta[0] * ctx.bounds.zeta[0] + ctx.bounds.zeta[1] * ctx.bounds.zeta[1];
  const auto v = j1(d, ctx);
  REQUIRE(v.feasible);
  CHECK(v.value == doctest::Approx(0.1 * 0.5 * 3.0 * std::sqrt(z2) - credit));

  ctx.cfg.v = 0.0;
  for (double& q : ctx.queue) q = 0.0;
  CHECK(j1(d, ctx).value == 0.0);
}

TEST_CASE("feasibility of decisions") {
  const auto ctx = random_round_context(2, 4);
  J2Evaluator ev(ctx);
  const auto& full = ev.evaluate(Schedule(4, 1));
  if (full.value.feasible) CHECK(decision_feasible(full.decision, ctx));

  RoundDecision d{Schedule{1, 0, 0, 0}, {1e6, 0.0, 0.0, 0.0}};
  d.bandwidth[1] = 1.0;  // bandwidth on an unscheduled client
  CHECK_FALSE(decision_feasible(d, ctx));
  d.bandwidth = {2e7, 0.0, 0.0, 0.0};  // over budget
  CHECK_FALSE(decision_feasible(d, ctx));
  d.bandwidth = {1e-3, 0.0, 0.0, 0.0};  // deadline missed
  CHECK_FALSE(decision_feasible(d, ctx));
  d.bandwidth = {0.0, 0.0, 0.0, 0.0};
  CHECK_FALSE(decision_feasible(d, ctx));
  d.a = {2, 0, 0, 0};
  CHECK_FALSE(decision_feasible(d, ctx));
  CHECK(j1(RoundDecision{Schedule{1, 0, 0, 0}, {1e-3, 0.0, 0.0, 0.0}}, ctx) == Objective::infeasible());
}

TEST_CASE("J1 and J3 match independent evaluations") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto ctx = random_round_context(seed, 6);
    J2Evaluator ev(ctx);
    Rng rng = substream(seed, Stream::Instance, {99});
    for (int trial = 0; trial < 10; ++trial) {
      Schedule a(6);
      for (auto& x : a) x = static_cast<std::uint8_t>(rng() & 1U);
      const auto& e = ev.evaluate(a);
      if (!e.value.feasible) continue;
      CHECK(e.value.value == doctest::Approx(j1_oracle(ctx, a, e.decision.bandwidth)).epsilon(1e-12));
      long double j3o = 0.0L;
      for (std::size_t k = 0; k < 6; ++k) {
        if (!a[k]) continue;
        const double rate = uplink_rate(e.decision.bandwidth[k], ctx.gain[k], ctx.params);
        j3o += ctx.queue[k] * ctx.params.tx_power_w * ctx.costs[k].upload_bits / rate;
      }
      CHECK(j3(e.decision, ctx) == doctest::Approx(static_cast<double>(j3o)).epsilon(1e-12));
    }
  }
}

TEST_CASE("J2 is the minimum of J1 over feasible bandwidths") {
  // Sampling oracle: no random feasible allocation beats the solved one.
  for (std::uint64_t seed = 1; seed <= 15; ++seed) {
    const auto ctx = random_round_context(seed, 4);
    J2Evaluator ev(ctx);
    Rng rng = substream(seed, Stream::Instance, {5});
    for (std::uint64_t bits = 1; bits < 16; ++bits) {
      const Schedule a = decode_schedule(bits, 4);
      const auto& e = ev.evaluate(a);
      std::vector<double> b_min;
      std::vector<std::size_t> idx;
      bool reachable = true;
      for (std::size_t k = 0; k < 4; ++k) {
        if (!a[k]) continue;
        const auto b = solve_b_min(BandwidthClient::from(k, ctx.queue[k], ctx.costs[k], ctx.gain[k], ctx.params),
                                   ctx.params, ctx.tol);
        if (!b) reachable = false;
        b_min.push_back(b.value_or(0.0));
        idx.push_back(k);
      }
      double total = 0.0;
      for (double b : b_min) total += b;
      if (!reachable || total > ctx.params.bandwidth_max_hz) {
        CHECK_FALSE(e.value.feasible);
        continue;
      }
      REQUIRE(e.value.feasible);
      for (int s = 0; s < 300; ++s) {
        const auto pt = random_feasible_point(rng, b_min, ctx.params.bandwidth_max_hz);
        RoundDecision d{a, std::vector<double>(4, 0.0)};
        for (std::size_t i = 0; i < idx.size(); ++i) d.bandwidth[idx[i]] = pt[i];
        const auto o = j1(d, ctx);
        if (!o.feasible) continue;
        CHECK(e.value.value <= o.value + 1e-9 * std::max(1.0, std::abs(o.value)));
      }
    }
  }
}

TEST_CASE("an unreachable client makes every schedule containing it infeasible") {
  auto ctx = random_round_context(7, 3);
  ctx.gain[1] = 1e-30;
  J2Evaluator ev(ctx);
  for (std::uint64_t bits = 0; bits < 8; ++bits) {
    const auto& e = ev.evaluate(decode_schedule(bits, 3));
    if (bits & 2U) {
      CHECK_FALSE(e.value.feasible);
      CHECK(e.status == AllocationStatus::Infeasible);
    }
  }
  CHECK(ev(decode_schedule(0, 3)).feasible);
}

TEST_CASE("evaluations are memoised per schedule") {
  const auto ctx = random_round_context(8, 5);
  J2Evaluator ev(ctx);
  const Schedule a{1, 0, 1, 0, 1};
  const auto first = ev(a);
  const auto again = ev(a);
  CHECK(first == again);
  CHECK(ev.solves() == 1);
  ev(Schedule{0, 0, 0, 0, 0});
  CHECK(ev.solves() == 2);
  CHECK_THROWS_AS(ev(Schedule{1, 0}), ConfigError);
}

TEST_CASE("large queues discourage scheduling, large V encourages it") {
  auto ctx = random_round_context(9, 6);
  for (double& q : ctx.queue) q = 1e3;
  {
    J2Evaluator ev(ctx);
    CHECK(exhaustive_search(6, std::ref(ev)).best == Schedule(6, 0));
  }
  for (double& q : ctx.queue) q = 0.0;
  ctx.cfg.v = 10.0;
  {
    J2Evaluator ev(ctx);
    const auto best = exhaustive_search(6, std::ref(ev));
    // With free energy the bound term alone decides; it vanishes only when
    // every owner of every modality participates, if that is feasible.
    if (ev(Schedule(6, 1)).feasible) CHECK(best.value.value == doctest::Approx(0.0).scale(1e-12));
  }
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS((LyapunovConfig{-1.0, 0.5, 1.0}.validate()), ConfigError);
  CHECK_THROWS_AS((LyapunovConfig{1.0, 0.0, 1.0}.validate()), ConfigError);
  CHECK_THROWS_AS((LyapunovConfig{1.0, 0.5, -1.0}.validate()), ConfigError);
  CHECK_NOTHROW((LyapunovConfig{0.0, 0.5, 0.0}.validate()));
}
