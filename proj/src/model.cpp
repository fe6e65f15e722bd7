#include "mfl/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "mfl/error.hpp"
#include "mfl/kernels.hpp"

namespace mfl {

Submodel Submodel::zeros(std::size_t classes, std::size_t dim) {
  Submodel s;
  s.classes = classes;
  s.dim = dim;
  s.weights.assign(classes * dim, 0.0);
  s.bias.assign(classes, 0.0);
  return s;
}

bool Submodel::all_finite() const {
  auto finite = [](double v) { return std::isfinite(v); };
  return std::all_of(weights.begin(), weights.end(), finite) &&
         std::all_of(bias.begin(), bias.end(), finite);
}

bool operator==(const Submodel& a, const Submodel& b) {
  return a.classes == b.classes && a.dim == b.dim && a.weights == b.weights && a.bias == b.bias;
}

bool operator==(const MultimodalModel& a, const MultimodalModel& b) {
  return a.submodels_ == b.submodels_;
}

MultimodalModel MultimodalModel::zeros(std::size_t classes, std::span<const std::size_t> dims) {
  std::vector<Submodel> subs;
  subs.reserve(dims.size());
  for (std::size_t d : dims) subs.push_back(Submodel::zeros(classes, d));
  return MultimodalModel(std::move(subs));
}

MultimodalModel MultimodalModel::zeros_like(const MultimodalModel& shape) {
  std::vector<Submodel> subs;
  subs.reserve(shape.modality_count());
  for (const auto& s : shape.submodels_) subs.push_back(Submodel::zeros(s.classes, s.dim));
  return MultimodalModel(std::move(subs));
}

std::size_t MultimodalModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& s : submodels_) n += s.parameter_count();
  return n;
}

bool MultimodalModel::same_shape(const MultimodalModel& other) const {
  if (submodels_.size() != other.submodels_.size()) return false;
  for (std::size_t i = 0; i < submodels_.size(); ++i) {
    if (submodels_[i].classes != other.submodels_[i].classes ||
        submodels_[i].dim != other.submodels_[i].dim) {
      return false;
    }
  }
  return true;
}

void MultimodalModel::axpy(double alpha, const MultimodalModel& other) {
  for (std::size_t i = 0; i < submodels_.size(); ++i) {
    axpy_block(modality(i), alpha, other.submodels_[i]);
  }
}

void MultimodalModel::axpy_block(ModalityId m, double alpha, const Submodel& other) {
  Submodel& s = submodels_.at(index_of(m));
  kernels::axpy(alpha, other.weights, s.weights);
  kernels::axpy(alpha, other.bias, s.bias);
}

void MultimodalModel::scale(double alpha) {
  for (auto& s : submodels_) {
    for (double& w : s.weights) w *= alpha;
    for (double& b : s.bias) b *= alpha;
  }
}

double MultimodalModel::block_squared_norm(ModalityId m) const {
  const Submodel& s = submodels_.at(index_of(m));
  return kernels::sq_norm(s.weights) + kernels::sq_norm(s.bias);
}

double MultimodalModel::squared_norm() const {
  double n = 0.0;
  for (std::size_t i = 0; i < submodels_.size(); ++i) n += block_squared_norm(modality(i));
  return n;
}

double MultimodalModel::block_squared_distance(ModalityId m, const MultimodalModel& other) const {
  const Submodel& a = submodels_.at(index_of(m));
  const Submodel& b = other.submodels_.at(index_of(m));
  return kernels::sq_dist(a.weights, b.weights) + kernels::sq_dist(a.bias, b.bias);
}

double MultimodalModel::squared_distance(const MultimodalModel& other) const {
  double d = 0.0;
  for (std::size_t i = 0; i < submodels_.size(); ++i) {
    d += block_squared_distance(modality(i), other);
  }
  return d;
}

std::vector<double> MultimodalModel::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& s : submodels_) {
    flat.insert(flat.end(), s.weights.begin(), s.weights.end());
    flat.insert(flat.end(), s.bias.begin(), s.bias.end());
  }
  return flat;
}

void MultimodalModel::assign_flat(std::span<const double> flat) {
  if (flat.size() != parameter_count()) {
    throw ConfigError("flat parameter vector has " + std::to_string(flat.size()) +
                      " entries, model expects " + std::to_string(parameter_count()));
  }
  std::size_t pos = 0;
  for (auto& s : submodels_) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), s.weights.size(), s.weights.begin());
    pos += s.weights.size();
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), s.bias.size(), s.bias.begin());
    pos += s.bias.size();
  }
}

SampleView view_of(const Sample& s) {
  SampleView v;
  v.label = s.label;
  for (const auto& [m, x] : s.features) v.features.emplace_back(m, std::span<const double>(x));
  return v;
}

bool ClientDataset::has(ModalityId m) const {
  return std::binary_search(modalities.begin(), modalities.end(), m);
}

const FeatureBlock* ClientDataset::block(ModalityId m) const {
  for (std::size_t i = 0; i < modalities.size(); ++i) {
    if (modalities[i] == m) return &blocks[i];
  }
  return nullptr;
}

SampleView ClientDataset::sample(std::size_t j) const {
  SampleView v;
  v.label = labels.at(j);
  for (const auto& b : blocks) v.features.emplace_back(b.modality, b.row(j));
  return v;
}

ClientDataset ClientDataset::restricted_to(std::span<const ModalityId> keep) const {
  ClientDataset out;
  out.owner = owner;
  out.labels = labels;
  for (std::size_t i = 0; i < modalities.size(); ++i) {
    if (std::find(keep.begin(), keep.end(), modalities[i]) != keep.end()) {
      out.modalities.push_back(modalities[i]);
      out.blocks.push_back(blocks[i]);
    }
  }
  if (out.modalities.empty()) throw ConfigError("restriction removes every modality");
  return out;
}

void ClientDataset::validate(const MultimodalModel& model) const {
  const std::string who = "client " + std::to_string(owner);
  if (modalities.empty()) throw ConfigError(who + ": dataset has no modality");
  if (blocks.size() != modalities.size()) throw ConfigError(who + ": modality/block mismatch");
  if (!std::is_sorted(modalities.begin(), modalities.end()) ||
      std::adjacent_find(modalities.begin(), modalities.end()) != modalities.end()) {
    throw ConfigError(who + ": modalities must be sorted and unique");
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto m = modalities[i];
    if (index_of(m) >= model.modality_count()) throw ConfigError(who + ": unknown modality");
    if (blocks[i].modality != m || blocks[i].dim != model[m].dim ||
        blocks[i].values.size() != blocks[i].dim * size()) {
      throw ConfigError(who + ": feature block for modality " + std::to_string(index_of(m)) +
                        " does not match the model dimension");
    }
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= model.classes()) {
      throw ConfigError(who + ": label out of range");
    }
  }
}

void TrainingConfig::validate(std::size_t modality_count) const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be a finite non-negative number");
  }
  if (modal_weights.size() != modality_count) {
    throw ConfigError("need one modal weight per modality");
  }
  for (double v : modal_weights) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("modal weights must be >= 0");
  }
  if (classes < 2) throw ConfigError("need at least two classes");
}

double cross_entropy(std::span<const double> logits, int label) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double z : logits) s += std::exp(z - mx);
  return mx + std::log(s) - logits[static_cast<std::size_t>(label)];
}

void softmax(std::span<const double> logits, std::span<double> probs) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    probs[c] = std::exp(logits[c] - mx);
    s += probs[c];
  }
  const double inv = 1.0 / s;
  for (double& p : probs) p *= inv;
}

std::vector<double> submodel_logits(const Submodel& sub, std::span<const double> x) {
  if (x.size() != sub.dim) {
    throw ConfigError("feature dimension " + std::to_string(x.size()) +
                      " does not match submodel dimension " + std::to_string(sub.dim));
  }
  std::vector<double> out(sub.classes);
  kernels::active().gemv(sub.weights.data(), sub.bias.data(), x.data(), out.data(), sub.classes,
                         sub.dim);
  return out;
}

std::vector<double> predict(const MultimodalModel& model, const SampleView& sample) {
  if (sample.features.empty()) throw ConfigError("sample has no modality");
  std::vector<double> fused(model.classes(), 0.0);
  for (const auto& [m, x] : sample.features) {
    if (index_of(m) >= model.modality_count()) throw ConfigError("sample modality not in model");
    const auto logits = submodel_logits(model[m], x);
    kernels::axpy(1.0, logits, fused);
  }
  const double inv = 1.0 / static_cast<double>(sample.features.size());
  for (double& z : fused) z *= inv;
  return fused;
}

namespace {

void require_non_empty(const ClientDataset& data) {
  if (data.size() == 0) {
    throw ConfigError("client " + std::to_string(data.owner) + " has an empty dataset");
  }
}

// Per-sample logits of every owned modality, plus their fused average.
struct ForwardScratch {
  std::vector<std::vector<double>> logits;
  std::vector<double> fused;

  ForwardScratch(const MultimodalModel& model, const ClientDataset& data)
      : logits(data.modalities.size(), std::vector<double>(model.classes())),
        fused(model.classes()) {}

  void run(const MultimodalModel& model, const ClientDataset& data, std::size_t j) {
    const auto& k = kernels::active();
    std::fill(fused.begin(), fused.end(), 0.0);
    for (std::size_t i = 0; i < data.modalities.size(); ++i) {
      const Submodel& sub = model[data.modalities[i]];
      k.gemv(sub.weights.data(), sub.bias.data(), data.blocks[i].row(j).data(), logits[i].data(),
             sub.classes, sub.dim);
      k.axpy(1.0, logits[i].data(), fused.data(), fused.size());
    }
    const double inv = 1.0 / static_cast<double>(data.modalities.size());
    for (double& z : fused) z *= inv;
  }
};

}  // namespace

double multimodal_loss(const MultimodalModel& model, const ClientDataset& data) {
  require_non_empty(data);
  ForwardScratch fw(model, data);
  double total = 0.0;
  for (std::size_t j = 0; j < data.size(); ++j) {
    fw.run(model, data, j);
    total += cross_entropy(fw.fused, data.labels[j]);
  }
  return total / static_cast<double>(data.size());
}

double unimodal_loss(const MultimodalModel& model, const ClientDataset& data, ModalityId m) {
  require_non_empty(data);
  const FeatureBlock* block = data.block(m);
  if (block == nullptr) throw ConfigError("client does not own the requested modality");
  const Submodel& sub = model[m];
  std::vector<double> logits(sub.classes);
  double total = 0.0;
  for (std::size_t j = 0; j < data.size(); ++j) {
    kernels::active().gemv(sub.weights.data(), sub.bias.data(), block->row(j).data(),
                           logits.data(), sub.classes, sub.dim);
    total += cross_entropy(logits, data.labels[j]);
  }
  return total / static_cast<double>(data.size());
}

double unimodal_loss_sum(const MultimodalModel& model, const ClientDataset& data,
                         const TrainingConfig& cfg) {
  double total = 0.0;
  for (ModalityId m : data.modalities) {
    const double v = cfg.modal_weight(m);
    if (v != 0.0) total += v * unimodal_loss(model, data, m);
  }
  return total;
}

Gradient local_gradient(const MultimodalModel& model, const ClientDataset& data,
                        const TrainingConfig& cfg) {
  require_non_empty(data);
  const auto& k = kernels::active();
  const std::size_t classes = model.classes();
  Gradient grad = MultimodalModel::zeros_like(model);

  ForwardScratch fw(model, data);
  std::vector<double> fused_residual(classes);
  std::vector<double> residual(classes);
  const double fusion_scale = 1.0 / static_cast<double>(data.modalities.size());

  for (std::size_t j = 0; j < data.size(); ++j) {
    const auto y = static_cast<std::size_t>(data.labels[j]);
    fw.run(model, data, j);
    softmax(fw.fused, fused_residual);
    fused_residual[y] -= 1.0;
    for (double& r : fused_residual) r *= fusion_scale;

    for (std::size_t i = 0; i < data.modalities.size(); ++i) {
      const ModalityId m = data.modalities[i];
      const double v = cfg.modal_weight(m);
      softmax(fw.logits[i], residual);
      residual[y] -= 1.0;
      for (std::size_t c = 0; c < classes; ++c) residual[c] = fused_residual[c] + v * residual[c];
      Submodel& g = grad[m];
      k.rank1(residual.data(), data.blocks[i].row(j).data(), g.weights.data(), classes, g.dim);
      k.axpy(1.0, residual.data(), g.bias.data(), classes);
    }
  }

  const double inv = 1.0 / static_cast<double>(data.size());
  grad.scale(inv);
  for (ModalityId m : data.modalities) {
    if (!grad[m].all_finite()) {
      throw NumericalError("non-finite gradient for modality " + std::to_string(index_of(m)) +
                           " on client " + std::to_string(data.owner));
    }
  }
  return grad;
}

MultimodalModel local_update(const MultimodalModel& global, const ClientDataset& data,
                             const TrainingConfig& cfg) {
  const Gradient grad = local_gradient(global, data, cfg);
  MultimodalModel local = global;
  for (ModalityId m : data.modalities) local.axpy_block(m, -cfg.learning_rate, grad[m]);
  return local;
}

MultimodalModel aggregate(std::span<const LocalResult> locals, const MultimodalModel& previous) {
  std::vector<const LocalResult*> order;
  order.reserve(locals.size());
  for (const auto& l : locals) {
    if (!l.model.same_shape(previous)) throw ConfigError("uploaded model has the wrong shape");
    order.push_back(&l);
  }
  std::sort(order.begin(), order.end(),
            [](const LocalResult* a, const LocalResult* b) { return a->client < b->client; });

  MultimodalModel next = previous;
  for (std::size_t mi = 0; mi < previous.modality_count(); ++mi) {
    const ModalityId m = modality(mi);
    double total = 0.0;
    bool any = false;
    for (const LocalResult* l : order) {
      if (std::find(l->modalities.begin(), l->modalities.end(), m) == l->modalities.end()) continue;
      any = true;
      total += static_cast<double>(l->samples);
    }
    if (!any) continue;
    if (!(total > 0.0)) {
      throw NumericalError("aggregation weights for modality " + std::to_string(mi) +
                           " sum to zero");
    }
    Submodel& out = next[m];
    std::fill(out.weights.begin(), out.weights.end(), 0.0);
    std::fill(out.bias.begin(), out.bias.end(), 0.0);
    for (const LocalResult* l : order) {
      if (std::find(l->modalities.begin(), l->modalities.end(), m) == l->modalities.end()) continue;
      next.axpy_block(m, static_cast<double>(l->samples) / total, l->model[m]);
    }
  }
  return next;
}

namespace {

std::vector<double> owner_totals(std::span<const ClientDataset> clients, std::size_t modalities) {
  std::vector<double> totals(modalities, 0.0);
  for (const auto& c : clients) {
    for (ModalityId m : c.modalities) totals.at(index_of(m)) += static_cast<double>(c.size());
  }
  return totals;
}

}  // namespace

LossParts global_loss(const MultimodalModel& model, std::span<const ClientDataset> clients,
                      const TrainingConfig& cfg) {
  double all = 0.0;
  for (const auto& c : clients) all += static_cast<double>(c.size());
  if (!(all > 0.0)) throw ConfigError("global loss needs at least one sample");
  const auto owners = owner_totals(clients, model.modality_count());

  LossParts parts;
  for (const auto& c : clients) {
    const double dk = static_cast<double>(c.size());
    parts.multimodal += (dk / all) * multimodal_loss(model, c);
    for (ModalityId m : c.modalities) {
      const double v = cfg.modal_weight(m);
      if (v == 0.0) continue;
      parts.unimodal += (dk / owners[index_of(m)]) * v * unimodal_loss(model, c, m);
    }
  }
  return parts;
}

Gradient global_gradient(const MultimodalModel& model, std::span<const ClientDataset> clients,
                         const TrainingConfig& cfg) {
  const auto owners = owner_totals(clients, model.modality_count());
  Gradient g = MultimodalModel::zeros_like(model);
  for (const auto& c : clients) {
    const Gradient local = local_gradient(model, c, cfg);
    for (ModalityId m : c.modalities) {
      g.axpy_block(m, static_cast<double>(c.size()) / owners[index_of(m)], local[m]);
    }
  }
  return g;
}

EvalMetrics evaluate(const MultimodalModel& model, const ClientDataset& test,
                     const TrainingConfig& cfg) {
  if (test.size() == 0) throw ConfigError("empty test set");
  if (test.modalities.size() != model.modality_count()) {
    throw ConfigError("test set must carry every modality");
  }
  auto argmax = [](std::span<const double> z) {
    return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
  };

  EvalMetrics out;
  out.unimodal_accuracy.assign(model.modality_count(), 0.0);
  std::size_t mm_correct = 0;
  std::vector<std::size_t> uni_correct(model.modality_count(), 0);
  ForwardScratch fw(model, test);
  for (std::size_t j = 0; j < test.size(); ++j) {
    fw.run(model, test, j);
    if (argmax(fw.fused) == test.labels[j]) ++mm_correct;
    for (std::size_t i = 0; i < test.modalities.size(); ++i) {
      if (argmax(fw.logits[i]) == test.labels[j]) ++uni_correct[index_of(test.modalities[i])];
    }
  }
  const double n = static_cast<double>(test.size());
  out.multimodal_accuracy = static_cast<double>(mm_correct) / n;
  for (std::size_t m = 0; m < uni_correct.size(); ++m) {
    out.unimodal_accuracy[m] = static_cast<double>(uni_correct[m]) / n;
  }
  out.loss = global_loss(model, std::span<const ClientDataset>(&test, 1), cfg);
  return out;
}

}  // namespace mfl
