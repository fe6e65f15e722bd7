#include "mfl/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "mfl/error.hpp"

namespace mfl {

void SyntheticConfig::validate() const {
  if (clients == 0) throw ConfigError("need at least one client");
  if (classes < 2) throw ConfigError("need at least two classes");
  if (modalities.empty()) throw ConfigError("need at least one modality");
  for (const auto& m : modalities) {
    if (m.dim == 0) throw ConfigError("modality dimension must be positive");
    if (!(m.missing_ratio >= 0.0 && m.missing_ratio < 1.0)) {
      throw ConfigError("missing ratio must lie in [0, 1)");
    }
    if (!(m.noise >= 0.0)) throw ConfigError("noise must be non-negative");
  }
  if (min_samples == 0 || min_samples > max_samples) {
    throw ConfigError("sample range must satisfy 1 <= min_samples <= max_samples");
  }
  if (!(label_skew >= 0.0)) throw ConfigError("label skew must be non-negative");
  if (test_samples == 0) throw ConfigError("test set must be non-empty");
}

std::vector<std::vector<ModalityId>> assign_modalities(const SyntheticConfig& cfg, Rng& rng) {
  const std::size_t k = cfg.clients;
  const std::size_t mcount = cfg.modalities.size();
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<std::vector<bool>> owns(k, std::vector<bool>(mcount, true));
    std::vector<std::size_t> kept(k, mcount);
    bool ok = true;
    for (std::size_t m = 0; m < mcount && ok; ++m) {
      const auto missing =
          static_cast<std::size_t>(std::llround(cfg.modalities[m].missing_ratio * static_cast<double>(k)));
      std::vector<std::size_t> order(k);
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      std::size_t removed = 0;
      for (std::size_t c : order) {
        if (removed == missing) break;
        if (kept[c] <= 1) continue;
        owns[c][m] = false;
        --kept[c];
        ++removed;
      }
      if (removed != missing || removed == k) ok = false;
    }
    if (!ok) continue;
    std::vector<std::vector<ModalityId>> out(k);
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t m = 0; m < mcount; ++m) {
        if (owns[c][m]) out[c].push_back(modality(m));
      }
    }
    return out;
  }
  throw ConfigError("missing ratios cannot be satisfied with every client keeping a modality");
}

namespace {

struct ClassMeans {
  // means[m][c * dim + i]
  std::vector<std::vector<double>> means;
};

ClassMeans draw_means(const SyntheticConfig& cfg, std::uint64_t seed) {
  ClassMeans cm;
  for (std::size_t m = 0; m < cfg.modalities.size(); ++m) {
    Rng rng = substream(seed, Stream::Data, {0xC1A55, m});
    std::normal_distribution<double> normal(0.0, cfg.class_separation);
    std::vector<double> mu(cfg.classes * cfg.modalities[m].dim);
    for (double& v : mu) v = normal(rng);
    cm.means.push_back(std::move(mu));
  }
  return cm;
}

ClientDataset draw_dataset(const SyntheticConfig& cfg, const ClassMeans& cm, ClientId owner,
                           const std::vector<ModalityId>& mods, std::size_t samples,
                           const std::vector<double>& class_probs, Rng& rng) {
  ClientDataset ds;
  ds.owner = owner;
  ds.modalities = mods;
  std::discrete_distribution<int> label_dist(class_probs.begin(), class_probs.end());
  ds.labels.resize(samples);
  for (int& y : ds.labels) y = label_dist(rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (ModalityId m : mods) {
    const auto& spec = cfg.modalities[index_of(m)];
    FeatureBlock block{m, spec.dim, std::vector<double>(samples * spec.dim)};
    const auto& mu = cm.means[index_of(m)];
    for (std::size_t j = 0; j < samples; ++j) {
      const auto y = static_cast<std::size_t>(ds.labels[j]);
      for (std::size_t i = 0; i < spec.dim; ++i) {
        block.values[j * spec.dim + i] = mu[y * spec.dim + i] + spec.noise * normal(rng);
      }
    }
    ds.blocks.push_back(std::move(block));
  }
  return ds;
}

std::vector<double> client_class_probs(const SyntheticConfig& cfg, Rng& rng) {
  std::vector<double> probs(cfg.classes, 1.0);
  if (cfg.label_skew > 0.0) {
    std::gamma_distribution<double> gamma(cfg.label_skew, 1.0);
    double total = 0.0;
    for (double& p : probs) {
      p = gamma(rng) + 1e-12;
      total += p;
    }
    for (double& p : probs) p /= total;
  }
  return probs;
}

}  // namespace

Federation generate_federation(const SyntheticConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const ClassMeans cm = draw_means(cfg, seed);
  Rng het = substream(seed, Stream::Heterogeneity);
  const auto mods = assign_modalities(cfg, het);

  Federation fed;
  for (std::size_t k = 0; k < cfg.clients; ++k) {
    Rng rng = substream(seed, Stream::Data, {k});
    std::uniform_int_distribution<std::size_t> size_dist(cfg.min_samples, cfg.max_samples);
    const std::size_t samples = size_dist(rng);
    const auto probs = client_class_probs(cfg, rng);
    fed.clients.push_back(draw_dataset(cfg, cm, k, mods[k], samples, probs, rng));
  }
  std::vector<ModalityId> all(cfg.modalities.size());
  for (std::size_t m = 0; m < all.size(); ++m) all[m] = modality(m);
  Rng test_rng = substream(seed, Stream::Data, {0x7E57});
  fed.test = draw_dataset(cfg, cm, cfg.clients, all, cfg.test_samples,
                          std::vector<double>(cfg.classes, 1.0), test_rng);
  return fed;
}

}  // namespace mfl
