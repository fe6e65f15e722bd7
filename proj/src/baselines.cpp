#include "mfl/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "mfl/error.hpp"
#include "mfl/rng.hpp"

namespace mfl {

const char* baseline_name(BaselineKind k) {
  switch (k) {
    case BaselineKind::Random: return "random";
    case BaselineKind::RoundRobin: return "round_robin";
    case BaselineKind::Selection: return "selection";
    case BaselineKind::Dropout: return "dropout";
  }
  return "unknown";
}

std::uint64_t combination_code(const std::vector<ModalityId>& mods) {
  std::uint64_t code = 0;
  for (ModalityId m : mods) code |= std::uint64_t{1} << index_of(m);
  return code;
}

namespace {

std::vector<std::size_t> random_subset(std::size_t k, std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(n, k));
  return idx;
}

BaselineDecision equal_split(const BaselineState& s, const std::vector<std::size_t>& chosen) {
  BaselineDecision out;
  out.decision.a.assign(s.clients, 0);
  out.decision.bandwidth.assign(s.clients, 0.0);
  out.modalities.assign(s.clients, {});
  if (chosen.empty()) return out;
  const double share = s.bandwidth_max_hz / static_cast<double>(chosen.size());
  for (std::size_t k : chosen) {
    out.decision.a[k] = 1;
    out.decision.bandwidth[k] = share;
    out.modalities[k] = s.modalities.at(k);
  }
  return out;
}

std::vector<std::size_t> selection_pick(const BaselineState& s) {
  std::map<std::uint64_t, std::vector<std::size_t>> groups;
  for (std::size_t k = 0; k < s.clients; ++k) groups[combination_code(s.modalities[k])].push_back(k);
  const double fallback = static_cast<double>(s.n_sched) / static_cast<double>(s.clients);
  std::vector<std::size_t> chosen;
  for (auto& [code, members] : groups) {
    double ratio = fallback;
    if (!s.selection_ratios.empty()) {
      if (code >= s.selection_ratios.size()) throw ConfigError("selection ratio missing for a modality combination");
      ratio = s.selection_ratios[code];
    }
    const auto take = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(members.size())));
    // Least-updated clients first; ties by client id.
    std::stable_sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) { return s.drift[a] < s.drift[b]; });
    for (std::size_t i = 0; i < std::min(take, members.size()); ++i) chosen.push_back(members[i]);
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

}  // namespace

BaselineDecision baseline_schedule(BaselineKind kind, const BaselineState& s) {
  if (s.modalities.size() != s.clients) throw ConfigError("baseline state needs modalities for every client");
  if (s.clients == 0) return {};
  switch (kind) {
    case BaselineKind::Random: {
      Rng rng = substream(s.seed, Stream::Baseline, {s.round});
      return equal_split(s, random_subset(s.clients, s.n_sched, rng));
    }
    case BaselineKind::RoundRobin: {
      std::vector<std::size_t> chosen;
      const std::size_t n = std::min(s.n_sched, s.clients);
      for (std::size_t i = 0; i < n; ++i) chosen.push_back(((s.round - 1) * n + i) % s.clients);
      std::sort(chosen.begin(), chosen.end());
      return equal_split(s, chosen);
    }
    case BaselineKind::Selection: {
      if (s.drift.size() != s.clients) throw ConfigError("selection needs a drift value per client");
      return equal_split(s, selection_pick(s));
    }
    case BaselineKind::Dropout: {
      Rng rng = substream(s.seed, Stream::Baseline, {s.round});
      auto out = equal_split(s, random_subset(s.clients, s.n_sched, rng));
      std::bernoulli_distribution drop(s.p_drop);
      for (std::size_t k = 0; k < s.clients; ++k) {
        if (!out.decision.a[k] || out.modalities[k].size() < 2) continue;
        Rng dr = substream(s.seed, Stream::Dropout, {s.round, k});
        std::vector<ModalityId> kept{out.modalities[k].front()};  // primary = lowest index owned
        for (std::size_t i = 1; i < out.modalities[k].size(); ++i) {
          if (!drop(dr)) kept.push_back(out.modalities[k][i]);
        }
        out.modalities[k] = std::move(kept);
      }
      return out;
    }
  }
  throw ConfigError("unknown baseline");
}

}  // namespace mfl
