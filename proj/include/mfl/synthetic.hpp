#pragma once

#include <cstdint>
#include <vector>

#include "mfl/model.hpp"
#include "mfl/rng.hpp"

namespace mfl {

struct ModalitySpec {
  std::size_t dim = 8;
  double missing_ratio = 0.3;  // fraction of clients lacking this modality
  double noise = 1.0;          // per-coordinate noise std
};

struct SyntheticConfig {
  std::size_t clients = 10;
  std::size_t classes = 6;
  std::vector<ModalitySpec> modalities;
  std::size_t min_samples = 300;
  std::size_t max_samples = 900;
  double class_separation = 1.0;  // std of the per-class mean coordinates
  double label_skew = 0.0;        // Dirichlet concentration; 0 means IID labels
  std::size_t test_samples = 1000;

  void validate() const;
};

struct Federation {
  std::vector<ClientDataset> clients;
  ClientDataset test;  // every modality present
};

// Per-class Gaussian means are drawn once per seed and modality; client
// modality sets honour the missing ratios with every client keeping at least
// one modality and every modality keeping at least one owner.
Federation generate_federation(const SyntheticConfig& cfg, std::uint64_t seed);

// Which modalities each client keeps; exposed for tests.
std::vector<std::vector<ModalityId>> assign_modalities(const SyntheticConfig& cfg, Rng& rng);

}  // namespace mfl
