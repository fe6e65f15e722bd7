#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "mfl/model.hpp"
#include "mfl/rng.hpp"

namespace mfl::test {

inline MultimodalModel random_model(Rng& rng, std::size_t classes, const std::vector<std::size_t>& dims,
                                    double scale = 0.5) {
  std::normal_distribution<double> n(0.0, scale);
  auto m = MultimodalModel::zeros(classes, dims);
  for (auto& sub : m.submodels()) {
    for (double& w : sub.weights) w = n(rng);
    for (double& b : sub.bias) b = n(rng);
  }
  return m;
}

inline ClientDataset random_dataset(Rng& rng, ClientId owner, const std::vector<ModalityId>& mods,
                                    const std::vector<std::size_t>& dims, std::size_t classes,
                                    std::size_t samples) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_int_distribution<int> label(0, static_cast<int>(classes) - 1);
  ClientDataset ds;
  ds.owner = owner;
  ds.modalities = mods;
  ds.labels.resize(samples);
  for (int& y : ds.labels) y = label(rng);
  for (ModalityId m : mods) {
    FeatureBlock b{m, dims[index_of(m)], std::vector<double>(samples * dims[index_of(m)])};
    for (double& v : b.values) v = n(rng);
    ds.blocks.push_back(std::move(b));
  }
  return ds;
}

inline TrainingConfig training(std::size_t modalities, double eta = 0.1, double v = 1.0,
                               std::size_t classes = 6) {
  TrainingConfig cfg;
  cfg.learning_rate = eta;
  cfg.modal_weights.assign(modalities, v);
  cfg.classes = classes;
  return cfg;
}

inline double rel_err(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace mfl::test
