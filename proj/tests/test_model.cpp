#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "mfl/error.hpp"
#include "mfl/synthetic.hpp"
#include "support.hpp"

using namespace mfl;
using mfl::test::random_dataset;
using mfl::test::random_model;
using mfl::test::rel_err;
using mfl::test::training;

namespace {

// Plain-loop reference arithmetic, independent of the kernel tables.
std::vector<long double> naive_logits(const Submodel& s, std::span<const double> x) {
  std::vector<long double> z(s.classes);
  for (std::size_t c = 0; c < s.classes; ++c) {
    long double acc = s.bias[c];
    for (std::size_t i = 0; i < s.dim; ++i) acc += static_cast<long double>(s.weights[c * s.dim + i]) * x[i];
    z[c] = acc;
  }
  return z;
}

long double naive_ce(const std::vector<long double>& z, int y) {
  long double mx = z[0];
  for (auto v : z) mx = std::max(mx, v);
  long double s = 0;
  for (auto v : z) s += std::exp(v - mx);
  return mx + std::log(s) - z[static_cast<std::size_t>(y)];
}

std::vector<long double> naive_fused(const MultimodalModel& m, const ClientDataset& d, std::size_t j) {
  std::vector<long double> f(m.classes(), 0);
  for (std::size_t i = 0; i < d.modalities.size(); ++i) {
    const auto z = naive_logits(m[d.modalities[i]], d.blocks[i].row(j));
    for (std::size_t c = 0; c < f.size(); ++c) f[c] += z[c];
  }
  for (auto& v : f) v /= static_cast<long double>(d.modalities.size());
  return f;
}

double objective(const MultimodalModel& m, const ClientDataset& d, const TrainingConfig& cfg) {
  return multimodal_loss(m, d) + unimodal_loss_sum(m, d, cfg);
}

}  // namespace

TEST_CASE("predict averages logits over present modalities") {
  const std::vector<std::size_t> dims{2, 2};
  auto model = MultimodalModel::zeros(2, dims);
  Sample s{{{modality(0), {1.0, 2.0}}, {modality(1), {-1.0, 0.5}}}, 0};
  auto out = predict(model, view_of(s));
  CHECK(out == std::vector<double>{0.0, 0.0});

  model[modality(0)].weights = {1, 2, 3, 4};
  model[modality(0)].bias = {0.5, -0.5};
  model[modality(1)].weights = {-1, 0, 2, 1};
  model[modality(1)].bias = {0, 1};
  out = predict(model, view_of(s));
  // [1*1+2*2+0.5, 3*1+4*2-0.5] = [5.5, 10.5]; [-1*-1+0, 2*-1+0.5+1] = [1, -0.5]
  CHECK(out[0] == doctest::Approx((5.5 + 1.0) / 2));
  CHECK(out[1] == doctest::Approx((10.5 - 0.5) / 2));

  Sample one{{{modality(1), {-1.0, 0.5}}}, 1};
  const auto single = predict(model, view_of(one));
  CHECK(single == submodel_logits(model[modality(1)], one.features[0].second));

  Sample bad{{{modality(0), {1.0, 2.0, 3.0}}}, 0};
  CHECK_THROWS_AS(predict(model, view_of(bad)), ConfigError);
}

TEST_CASE("multimodal loss: uniform, saturated and oracle cases") {
  Rng rng(3);
  const std::vector<std::size_t> dims{3, 4};
  auto data = random_dataset(rng, 0, {modality(0), modality(1)}, dims, 6, 3);
  auto zero = MultimodalModel::zeros(6, dims);
  CHECK(multimodal_loss(zero, data) == doctest::Approx(std::log(6.0)).epsilon(1e-14));

  std::vector<double> logits(6, 0.0);
  logits[2] = 50.0;
  CHECK(cross_entropy(logits, 2) < 1e-20);
  std::vector<double> huge{1000.0, -1000.0};
  CHECK(std::isfinite(cross_entropy(huge, 1)));
  CHECK(cross_entropy(huge, 1) == doctest::Approx(2000.0));

  auto model = random_model(rng, 6, dims, 1.0);
  long double ref = 0;
  for (std::size_t j = 0; j < data.size(); ++j) ref += naive_ce(naive_fused(model, data, j), data.labels[j]);
  ref /= 3;
  CHECK(multimodal_loss(model, data) == doctest::Approx(static_cast<double>(ref)).epsilon(1e-13));

  ClientDataset empty;
  empty.modalities = {modality(0)};
  empty.blocks.push_back(FeatureBlock{modality(0), 3, {}});
  CHECK_THROWS(multimodal_loss(model, empty));
}

TEST_CASE("unimodal loss sum: zero weights, single modality, per-term oracle") {
  Rng rng(5);
  const std::vector<std::size_t> dims{3, 4};
  auto model = random_model(rng, 4, dims);
  auto both = random_dataset(rng, 0, {modality(0), modality(1)}, dims, 4, 7);
  auto cfg = training(2, 0.1, 0.0, 4);
  CHECK(unimodal_loss_sum(model, both, cfg) == 0.0);

  auto only = random_dataset(rng, 1, {modality(1)}, dims, 4, 9);
  cfg.modal_weights = {1.0, 1.0};
  CHECK(unimodal_loss_sum(model, only, cfg) == doctest::Approx(multimodal_loss(model, only)).epsilon(1e-14));

  cfg.modal_weights = {1.0, 2.0};
  long double l1 = 0, l2 = 0;
  for (std::size_t j = 0; j < both.size(); ++j) {
    l1 += naive_ce(naive_logits(model[modality(0)], both.blocks[0].row(j)), both.labels[j]);
    l2 += naive_ce(naive_logits(model[modality(1)], both.blocks[1].row(j)), both.labels[j]);
  }
  const double expect = static_cast<double>((l1 + 2 * l2) / 7);
  CHECK(unimodal_loss_sum(model, both, cfg) == doctest::Approx(expect).epsilon(1e-13));
}

TEST_CASE("local gradient matches central finite differences") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    Rng rng = substream(seed, Stream::Instance);
    std::uniform_int_distribution<std::size_t> small(2, 5);
    const std::size_t mcount = 1 + seed % 3;
    std::vector<std::size_t> dims(mcount);
    for (auto& d : dims) d = small(rng);
    const std::size_t classes = small(rng);
    std::vector<ModalityId> mods;
    for (std::size_t m = 0; m < mcount; ++m) {
      if (m == 0 || rng() % 2) mods.push_back(modality(m));
    }
    auto model = random_model(rng, classes, dims);
    auto data = random_dataset(rng, 0, mods, dims, classes, 4 + seed % 7);
    auto cfg = training(mcount, 0.1, 1.0, classes);
    for (auto& v : cfg.modal_weights) v = 0.5 + static_cast<double>(rng() % 100) / 100.0;

    const auto grad = local_gradient(model, data, cfg).flatten();
    auto flat = model.flatten();
    double worst = 0.0;
    for (std::size_t i = 0; i < flat.size(); ++i) {
      const double h = 1e-5;
      auto plus = model, minus = model;
      flat[i] += h;
      plus.assign_flat(flat);
      flat[i] -= 2 * h;
      minus.assign_flat(flat);
      flat[i] += h;
      const double fd = (objective(plus, data, cfg) - objective(minus, data, cfg)) / (2 * h);
      worst = std::max(worst, rel_err(grad[i], fd, 1e-4));
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("missing-modality blocks are exactly zero and untouched by local update") {
  Rng rng(17);
  const std::vector<std::size_t> dims{3, 5};
  auto model = random_model(rng, 4, dims);
  auto data = random_dataset(rng, 2, {modality(1)}, dims, 4, 10);
  auto cfg = training(2, 0.3, 1.0, 4);
  const auto g = local_gradient(model, data, cfg);
  for (double w : g[modality(0)].weights) CHECK(w == 0.0);
  for (double b : g[modality(0)].bias) CHECK(b == 0.0);

  const auto upd = local_update(model, data, cfg);
  CHECK(upd[modality(0)] == model[modality(0)]);

  cfg.learning_rate = 0.0;
  CHECK(local_update(model, data, cfg) == model);
}

TEST_CASE("local update composes the gradient with an axpy") {
  Rng rng(23);
  const std::vector<std::size_t> dims{4, 2};
  auto model = random_model(rng, 3, dims);
  auto data = random_dataset(rng, 0, {modality(0), modality(1)}, dims, 3, 12);
  auto cfg = training(2, 0.1, 1.0, 3);
  auto expect = model;
  expect.axpy(-0.1, local_gradient(model, data, cfg));
  const auto got = local_update(model, data, cfg);
  const auto a = got.flatten(), b = expect.flatten();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-15));
}

TEST_CASE("stationary point: zero unimodal weight and a saturated fit") {
  // One sample per class along orthogonal axes; huge margins make softmax one-hot.
  const std::vector<std::size_t> dims{3};
  auto model = MultimodalModel::zeros(3, dims);
  model[modality(0)].weights = {40, 0, 0, 0, 40, 0, 0, 0, 40};
  ClientDataset d;
  d.modalities = {modality(0)};
  d.blocks.push_back(FeatureBlock{modality(0), 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}});
  d.labels = {0, 1, 2};
  auto cfg = training(1, 0.1, 0.0, 3);
  CHECK(std::sqrt(local_gradient(model, d, cfg).squared_norm()) < 1e-8);
}

TEST_CASE("aggregate: copy, carry-over and weighting") {
  Rng rng(29);
  const std::vector<std::size_t> dims{2, 3};
  auto prev = random_model(rng, 3, dims);
  auto local = random_model(rng, 3, dims);
  std::vector<LocalResult> ups{{4, {modality(1)}, 50, local}};
  const auto next = aggregate(ups, prev);
  CHECK(next[modality(1)] == local[modality(1)]);
  CHECK(next[modality(0)] == prev[modality(0)]);

  auto other = random_model(rng, 3, dims);
  ups.push_back({1, {modality(1)}, 150, other});
  const auto mix = aggregate(ups, prev);
  for (std::size_t i = 0; i < mix[modality(1)].weights.size(); ++i) {
    const double e = 0.25 * local[modality(1)].weights[i] + 0.75 * other[modality(1)].weights[i];
    CHECK(mix[modality(1)].weights[i] == doctest::Approx(e).epsilon(1e-15));
  }
  std::vector<LocalResult> zero{{0, {modality(0)}, 0, local}};
  CHECK_THROWS_AS(aggregate(zero, prev), NumericalError);

  // Input order must not matter.
  std::vector<LocalResult> swapped{ups[1], ups[0]};
  CHECK(aggregate(swapped, prev) == mix);
}

TEST_CASE("full participation equals a pooled-data gradient step") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng = substream(seed, Stream::Instance, {1});
    const std::vector<std::size_t> dims{3, 4};
    const std::size_t classes = 4;
    std::vector<ClientDataset> clients;
    const std::vector<std::vector<ModalityId>> sets{
        {modality(0), modality(1)}, {modality(0)}, {modality(1)}, {modality(0), modality(1)}};
    for (std::size_t k = 0; k < sets.size(); ++k) {
      clients.push_back(random_dataset(rng, k, sets[k], dims, classes, 6 + 3 * k));
    }
    auto model = random_model(rng, classes, dims);
    auto cfg = training(2, 0.2, 1.0, classes);

    std::vector<LocalResult> ups;
    for (const auto& c : clients) ups.push_back({c.owner, c.modalities, c.size(), local_update(model, c, cfg)});
    const auto agg = aggregate(ups, model);

    // Oracle: per-sample gradients pooled over the owners of each modality.
    auto step = model;
    for (std::size_t mi = 0; mi < 2; ++mi) {
      const ModalityId m = modality(mi);
      std::vector<long double> acc(model[m].weights.size() + classes, 0);
      long double owners = 0;
      for (const auto& c : clients) {
        if (!c.has(m)) continue;
        owners += c.size();
        const std::size_t pos = static_cast<std::size_t>(
            std::find(c.modalities.begin(), c.modalities.end(), m) - c.modalities.begin());
        for (std::size_t j = 0; j < c.size(); ++j) {
          const auto fused = naive_fused(model, c, j);
          const auto z = naive_logits(model[m], c.blocks[pos].row(j));
          auto soft = [](std::vector<long double> v) {
            long double mx = *std::max_element(v.begin(), v.end()), s = 0;
            for (auto& x : v) s += (x = std::exp(x - mx));
            for (auto& x : v) x /= s;
            return v;
          };
          auto pf = soft(fused), pz = soft(z);
          const auto y = static_cast<std::size_t>(c.labels[j]);
          pf[y] -= 1;
          pz[y] -= 1;
          const auto x = c.blocks[pos].row(j);
          for (std::size_t cl = 0; cl < classes; ++cl) {
            const long double r = pf[cl] / c.modalities.size() + pz[cl];
            for (std::size_t i = 0; i < dims[mi]; ++i) acc[cl * dims[mi] + i] += r * x[i];
            acc[model[m].weights.size() + cl] += r;
          }
        }
      }
      for (std::size_t i = 0; i < model[m].weights.size(); ++i) {
        step[m].weights[i] -= static_cast<double>(0.2L * acc[i] / owners);
      }
      for (std::size_t cl = 0; cl < classes; ++cl) {
        step[m].bias[cl] -= static_cast<double>(0.2L * acc[model[m].weights.size() + cl] / owners);
      }
    }
    const auto a = agg.flatten(), b = step.flatten();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-10);
  }
}

TEST_CASE("global loss is additive: pooled sums equal weighted client sums") {
  Rng rng(31);
  const std::vector<std::size_t> dims{2, 3};
  std::vector<ClientDataset> clients{
      random_dataset(rng, 0, {modality(0), modality(1)}, dims, 3, 5),
      random_dataset(rng, 1, {modality(1)}, dims, 3, 8),
      random_dataset(rng, 2, {modality(0)}, dims, 3, 11)};
  auto model = random_model(rng, 3, dims);
  auto cfg = training(2, 0.1, 1.0, 3);
  cfg.modal_weights = {0.7, 1.3};
  const auto parts = global_loss(model, clients, cfg);

  long double f = 0, g0 = 0, g1 = 0, n = 0, n0 = 0, n1 = 0;
  for (const auto& c : clients) {
    for (std::size_t j = 0; j < c.size(); ++j) {
      f += naive_ce(naive_fused(model, c, j), c.labels[j]);
      for (std::size_t i = 0; i < c.modalities.size(); ++i) {
        const auto l = naive_ce(naive_logits(model[c.modalities[i]], c.blocks[i].row(j)), c.labels[j]);
        (index_of(c.modalities[i]) == 0 ? g0 : g1) += l;
      }
    }
    n += c.size();
    if (c.has(modality(0))) n0 += c.size();
    if (c.has(modality(1))) n1 += c.size();
  }
  CHECK(std::abs(parts.multimodal - static_cast<double>(f / n)) <= 1e-12);
  CHECK(std::abs(parts.unimodal - static_cast<double>(0.7L * g0 / n0 + 1.3L * g1 / n1)) <= 1e-12);
  CHECK(parts.total() == parts.multimodal + parts.unimodal);
}

TEST_CASE("evaluate: chance level, separable data, monotone loss") {
  SyntheticConfig sc;
  sc.clients = 4;
  sc.modalities = {ModalitySpec{8, 0.0, 1.0}, ModalitySpec{12, 0.0, 1.0}};
  sc.test_samples = 600;
  sc.class_separation = 3.0;
  sc.min_samples = sc.max_samples = 150;
  auto fed = generate_federation(sc, 4);
  Rng rng(2);
  auto cfg = training(2, 0.5, 1.0, 6);
  const std::vector<std::size_t> dims{8, 12};

  // Labels independent of the features: any fixed model sits at chance.
  auto rnd = random_model(rng, 6, dims, 1.0);
  auto noise = random_dataset(rng, 9, {modality(0), modality(1)}, dims, 6, 6000);
  const auto chance = evaluate(rnd, noise, cfg);
  CHECK(std::abs(chance.multimodal_accuracy - 1.0 / 6.0) <= 0.05);

  auto model = MultimodalModel::zeros(6, dims);
  double prev = global_loss(model, fed.clients, cfg).total();
  bool monotone = true;
  for (int t = 0; t < 200; ++t) {
    std::vector<LocalResult> ups;
    for (const auto& c : fed.clients) ups.push_back({c.owner, c.modalities, c.size(), local_update(model, c, cfg)});
    model = aggregate(ups, model);
    const double h = global_loss(model, fed.clients, cfg).total();
    monotone = monotone && h <= prev + 1e-12;
    prev = h;
  }
  CHECK(monotone);
  const auto m = evaluate(model, fed.test, cfg);
  CHECK(m.multimodal_accuracy == 1.0);
  for (double u : m.unimodal_accuracy) CHECK(u > 0.9);

  ClientDataset empty;
  CHECK_THROWS(evaluate(model, empty, cfg));
}

TEST_CASE("synthetic federation honours missing ratios and ownership") {
  SyntheticConfig sc;
  sc.clients = 10;
  sc.modalities = {ModalitySpec{8, 0.3, 1.0}, ModalitySpec{12, 0.3, 1.0}};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto fed = generate_federation(sc, seed);
    std::size_t miss0 = 0, miss1 = 0;
    for (const auto& c : fed.clients) {
      CHECK(!c.modalities.empty());
      CHECK(c.size() >= 300);
      CHECK(c.size() <= 900);
      miss0 += !c.has(modality(0));
      miss1 += !c.has(modality(1));
    }
    CHECK(miss0 == 3);
    CHECK(miss1 == 3);
  }
  const auto a = generate_federation(sc, 9), b = generate_federation(sc, 9);
  CHECK(a.clients[3].blocks[0].values == b.clients[3].blocks[0].values);
  sc.modalities[0].missing_ratio = 0.95;
  sc.modalities[1].missing_ratio = 0.95;
  CHECK_THROWS_AS(generate_federation(sc, 1), ConfigError);
}
