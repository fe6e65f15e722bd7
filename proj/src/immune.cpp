#include "mfl/immune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mfl/error.hpp"

namespace mfl {

void ImmuneParams::validate() const {
  if (population == 0 || clone_factor == 0 || population % clone_factor != 0) {
    throw ConfigError("immune population must be a positive multiple of the clone factor");
  }
  if (population / clone_factor == population) throw ConfigError("clone factor must exceed one");
  if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0)) throw ConfigError("mutation rate must lie in [0, 1]");
  if (!(iota > 0.0)) throw ConfigError("affinity exponent must be positive");
  if (!(eps1 >= 0.0) || !(eps2_scale >= 0.0)) throw ConfigError("incentive weights must be non-negative");
}

std::vector<double> affinity(std::span<const Objective> j2, double iota) {
  std::vector<double> out(j2.size(), 0.0);
  bool any = false;
  double worst = 0.0;
  for (const auto& v : j2) {
    if (!v.feasible) continue;
    worst = any ? std::max(worst, v.value) : v.value;
    any = true;
  }
  if (!any) return out;
  for (std::size_t i = 0; i < j2.size(); ++i) {
    if (j2[i].feasible) out[i] = std::pow(worst - j2[i].value, iota);
  }
  return out;
}

std::size_t hamming(const Schedule& a, const Schedule& b) {
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

std::vector<double> concentration(std::span<const Schedule> population, std::size_t dis) {
  const std::size_t s = population.size();
  std::vector<double> out(s, 0.0);
  for (std::size_t i = 0; i < s; ++i) {
    std::size_t near = 0;
    for (std::size_t j = 0; j < s; ++j) near += hamming(population[i], population[j]) <= dis;
    out[i] = static_cast<double>(near) / static_cast<double>(s);
  }
  return out;
}

double incentive(double aff, double con, double eps1, double eps2) { return eps1 * aff - eps2 * con; }

Schedule decode_schedule(std::uint64_t bits, std::size_t clients) {
  Schedule a(clients, 0);
  for (std::size_t k = 0; k < clients; ++k) a[k] = static_cast<std::uint8_t>((bits >> k) & 1U);
  return a;
}

std::uint64_t encode_schedule(const Schedule& a) {
  std::uint64_t bits = 0;
  for (std::size_t k = 0; k < a.size(); ++k) bits |= static_cast<std::uint64_t>(a[k] != 0) << k;
  return bits;
}

namespace {

Schedule random_schedule(std::size_t clients, Rng& rng) {
  Schedule a(clients);
  for (auto& x : a) x = static_cast<std::uint8_t>(rng() >> 63);
  return a;
}

// Indices of the `count` largest keys; ties keep the lower index first.
std::vector<std::size_t> top_by(const std::vector<double>& key, std::size_t count) {
  std::vector<std::size_t> idx(key.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return key[a] > key[b]; });
  idx.resize(std::min(count, idx.size()));
  return idx;
}

std::size_t best_index(const std::vector<Antibody>& pop) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < pop.size(); ++i) {
    if (pop[i].j2 < pop[best].j2) best = i;
  }
  return best;
}

}  // namespace

ImmuneResult immune_search(std::size_t clients, const J2Function& j2, const ImmuneParams& params, Rng& rng,
                           const std::vector<Schedule>* initial) {
  params.validate();
  const std::size_t s = params.population;
  const std::size_t elite = s / params.clone_factor;  // S / mu
  const std::size_t keep = s - elite;                 // (mu S - S) / mu
  const std::size_t dis = params.hamming_threshold(clients);
  std::bernoulli_distribution flip(params.mutation_rate);

  ImmuneResult res;
  auto score = [&](const Schedule& a) {
    ++res.evaluations;
    return j2(a);
  };

  std::vector<Antibody> pop(s);
  if (initial != nullptr) {
    if (initial->size() != s) throw ConfigError("initial population must have exactly S antibodies");
    for (std::size_t i = 0; i < s; ++i) pop[i].a = (*initial)[i];
  } else {
    for (auto& ab : pop) ab.a = random_schedule(clients, rng);
  }
  for (auto& ab : pop) ab.j2 = score(ab.a);

  auto record_best = [&] {
    const auto& b = pop[best_index(pop)];
    res.best_j2_per_generation.push_back(b.j2.feasible ? b.j2.value : INFINITY);
  };
  record_best();

  for (std::size_t g = 0; g < params.generations; ++g) {
    std::vector<Objective> vals(s);
    std::vector<Schedule> genes(s);
    for (std::size_t i = 0; i < s; ++i) {
      vals[i] = pop[i].j2;
      genes[i] = pop[i].a;
    }
    const auto aff = affinity(vals, params.iota);
    const auto con = concentration(genes, dis);
    const double mean_aff = std::accumulate(aff.begin(), aff.end(), 0.0) / static_cast<double>(s);
    const double eps2 = params.eps2_scale * mean_aff;
    std::vector<double> inc(s);
    for (std::size_t i = 0; i < s; ++i) {
      pop[i].affinity = aff[i];
      pop[i].concentration = con[i];
      pop[i].incentive = inc[i] = incentive(aff[i], con[i], params.eps1, eps2);
    }

    auto chosen = top_by(inc, elite);
    if (params.keep_best) {
      const std::size_t b = best_index(pop);
      if (std::find(chosen.begin(), chosen.end(), b) == chosen.end()) chosen.back() = b;
    }
    std::vector<Antibody> imm;
    for (std::size_t i : chosen) imm.push_back(pop[i]);

    std::vector<Antibody> pool;
    for (const auto& parent : imm) {
      for (std::size_t c = 0; c < params.clone_factor; ++c) {
        Antibody child;
        child.a = parent.a;
        for (auto& bit : child.a) {
          if (flip(rng)) bit ^= 1U;
        }
        child.j2 = score(child.a);
        pool.push_back(std::move(child));
      }
    }
    pool.insert(pool.end(), imm.begin(), imm.end());

    std::vector<Objective> pool_vals(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool_vals[i] = pool[i].j2;
    const auto pool_aff = affinity(pool_vals, params.iota);
    // Affinity ties (all infeasible, or equal J2) fall back to the J2 order.
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (pool_aff[a] != pool_aff[b]) return pool_aff[a] > pool_aff[b];
      return pool[a].j2 < pool[b].j2;
    });

    std::vector<Antibody> next;
    for (std::size_t i = 0; i < keep; ++i) next.push_back(pool[order[i]]);
    for (std::size_t i = 0; i < elite; ++i) {
      Antibody fresh;
      fresh.a = random_schedule(clients, rng);
      fresh.j2 = score(fresh.a);
      next.push_back(std::move(fresh));
    }
    pop = std::move(next);
    record_best();
  }

  const auto& b = pop[best_index(pop)];
  if (b.j2.feasible) {
    res.best = b.a;
    res.value = b.j2;
  } else {
    res.best.assign(clients, 0);
    res.value = j2(res.best);
  }
  return res;
}

ExhaustiveResult exhaustive_search(std::size_t clients, const J2Function& j2) {
  if (clients > 16) throw ConfigError("exhaustive search is limited to 16 clients");
  ExhaustiveResult res;
  res.best = decode_schedule(0, clients);
  res.value = j2(res.best);
  const std::uint64_t total = std::uint64_t{1} << clients;
  for (std::uint64_t bits = 1; bits < total; ++bits) {
    auto a = decode_schedule(bits, clients);
    const auto v = j2(a);
    if (v < res.value) {
      res.value = v;
      res.best = std::move(a);
    }
  }
  return res;
}

}  // namespace mfl
