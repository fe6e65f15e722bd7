#pragma once

// Decision-level-fusion multimodal classifier: one linear-softmax submodel per
// modality, fused by averaging the logits of the modalities a sample carries.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace mfl {

enum class ModalityId : std::uint32_t {};

constexpr std::size_t index_of(ModalityId m) { return static_cast<std::size_t>(m); }
constexpr ModalityId modality(std::size_t i) { return static_cast<ModalityId>(i); }

using ClientId = std::size_t;

struct Submodel {
  std::size_t classes = 0;
  std::size_t dim = 0;
  std::vector<double> weights;  // classes x dim, row-major
  std::vector<double> bias;     // classes

  static Submodel zeros(std::size_t classes, std::size_t dim);
  std::size_t parameter_count() const { return classes * (dim + 1); }
  bool all_finite() const;
};

class MultimodalModel {
 public:
  MultimodalModel() = default;
  explicit MultimodalModel(std::vector<Submodel> submodels) : submodels_(std::move(submodels)) {}

  static MultimodalModel zeros(std::size_t classes, std::span<const std::size_t> dims);
  static MultimodalModel zeros_like(const MultimodalModel& shape);

  std::size_t modality_count() const { return submodels_.size(); }
  std::size_t classes() const { return submodels_.empty() ? 0 : submodels_.front().classes; }
  std::size_t parameter_count() const;

  Submodel& operator[](ModalityId m) { return submodels_.at(index_of(m)); }
  const Submodel& operator[](ModalityId m) const { return submodels_.at(index_of(m)); }
  std::span<const Submodel> submodels() const { return submodels_; }
  std::span<Submodel> submodels() { return submodels_; }

  bool same_shape(const MultimodalModel& other) const;

  // this += alpha * other, blockwise
  void axpy(double alpha, const MultimodalModel& other);
  void axpy_block(ModalityId m, double alpha, const Submodel& other);
  void scale(double alpha);

  double squared_norm() const;
  double block_squared_norm(ModalityId m) const;
  double squared_distance(const MultimodalModel& other) const;
  double block_squared_distance(ModalityId m, const MultimodalModel& other) const;

  // Modality-ordered, row-major weights followed by bias, per block.
  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> flat);

  friend bool operator==(const MultimodalModel&, const MultimodalModel&);

 private:
  std::vector<Submodel> submodels_;
};

bool operator==(const Submodel& a, const Submodel& b);

// Gradients share the model layout.
using Gradient = MultimodalModel;

// Features of one modality for every sample of a dataset, samples x dim.
struct FeatureBlock {
  ModalityId modality{};
  std::size_t dim = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t j) const { return {values.data() + j * dim, dim}; }
};

struct Sample {
  std::vector<std::pair<ModalityId, std::vector<double>>> features;
  int label = 0;
};

struct SampleView {
  std::vector<std::pair<ModalityId, std::span<const double>>> features;
  int label = 0;
};

SampleView view_of(const Sample& s);

struct ClientDataset {
  ClientId owner = 0;
  std::vector<ModalityId> modalities;  // sorted, unique
  std::vector<FeatureBlock> blocks;    // parallel to `modalities`
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  bool has(ModalityId m) const;
  const FeatureBlock* block(ModalityId m) const;
  SampleView sample(std::size_t j) const;

  // Restrict to a subset of the owned modalities (used by modality dropout).
  ClientDataset restricted_to(std::span<const ModalityId> keep) const;

  // Throws ConfigError if the dataset does not match the model layout.
  void validate(const MultimodalModel& model) const;
};

struct TrainingConfig {
  double learning_rate = 0.5;
  std::vector<double> modal_weights;  // v_m, one per modality
  std::size_t classes = 6;
  std::size_t rounds = 100;

  double modal_weight(ModalityId m) const { return modal_weights.at(index_of(m)); }
  void validate(std::size_t modality_count) const;
};

// Softmax cross-entropy of logits against a class label, via log-sum-exp.
double cross_entropy(std::span<const double> logits, int label);
// probs <- softmax(logits)
void softmax(std::span<const double> logits, std::span<double> probs);

std::vector<double> predict(const MultimodalModel& model, const SampleView& sample);
std::vector<double> submodel_logits(const Submodel& sub, std::span<const double> x);

double multimodal_loss(const MultimodalModel& model, const ClientDataset& data);
// Mean cross-entropy of one submodel alone on the dataset (unweighted).
double unimodal_loss(const MultimodalModel& model, const ClientDataset& data, ModalityId m);
double unimodal_loss_sum(const MultimodalModel& model, const ClientDataset& data,
                         const TrainingConfig& cfg);

// Full-batch subgradient of F_k + G_k. Blocks of modalities the client lacks
// are exactly zero.
Gradient local_gradient(const MultimodalModel& model, const ClientDataset& data,
                        const TrainingConfig& cfg);

MultimodalModel local_update(const MultimodalModel& global, const ClientDataset& data,
                             const TrainingConfig& cfg);

// One uploaded local model together with what the server needs to weight it.
struct LocalResult {
  ClientId client = 0;
  std::vector<ModalityId> modalities;  // modalities trained this round
  std::size_t samples = 0;             // D_k
  MultimodalModel model;
};

// Per modality: D-weighted mean over uploaders owning it, or the previous
// submodel unchanged if nobody uploaded it.
MultimodalModel aggregate(std::span<const LocalResult> locals, const MultimodalModel& previous);

struct LossParts {
  double multimodal = 0.0;  // F
  double unimodal = 0.0;    // G
  double total() const { return multimodal + unimodal; }
};

// Global federated objective H = F + G. F weights clients by D_k / sum D;
// the unimodal part of modality m is averaged over its owners only, which is
// what substituting the global unimodal loss for missing modalities yields.
LossParts global_loss(const MultimodalModel& model, std::span<const ClientDataset> clients,
                      const TrainingConfig& cfg);

// Blockwise global subgradient: owners of m weighted by D_k / sum_{owners} D_i.
Gradient global_gradient(const MultimodalModel& model, std::span<const ClientDataset> clients,
                         const TrainingConfig& cfg);

struct EvalMetrics {
  double multimodal_accuracy = 0.0;
  std::vector<double> unimodal_accuracy;
  LossParts loss;
};

EvalMetrics evaluate(const MultimodalModel& model, const ClientDataset& test,
                     const TrainingConfig& cfg);

}  // namespace mfl
