#include "vpr/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "vpr/encoder.hpp"
#include "vpr/proto.hpp"
#include "vpr/rng.hpp"
#include "vpr/tensor.hpp"

namespace vpr {

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> data(numel(shape));
  for (auto& v : data) v = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(data), true);
}

// Values kept at least `gap` away from zero, for ops with a kink there.
Tensor away_from_zero(Rng& rng, Shape shape, double gap) {
  std::vector<double> data(numel(shape));
  for (auto& v : data) {
    const double mag = rng.uniform(gap, 1.0);
    v = rng.uniform(0.0, 1.0) < 0.5 ? -mag : mag;
  }
  return Tensor(std::move(shape), std::move(data), true);
}

// Distinct values so that max-pool windows have a unique winner.
Tensor distinct_values(Rng& rng, Shape shape) {
  const auto n = numel(shape);
  auto order = rng.permutation(n);
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = -1.0 + 2.0 * (static_cast<double>(order[i]) + 0.5) / static_cast<double>(n);
  return Tensor(std::move(shape), std::move(data), true);
}

// Weighted sum with fixed random coefficients so every output coordinate
// gets a distinct upstream gradient.
std::function<Tensor(const Tensor&)> probe(Rng& rng, const Shape& out_shape) {
  auto w = random_tensor(rng, out_shape).detach();
  return [w](const Tensor& y) { return sum(mul(y, w)); };
}

struct Suite {
  Rng rng;
  double tol;
  double eps;
  std::vector<GradCheckResult> results;

  void add(std::string name, double err) { results.push_back({std::move(name), err, err < tol}); }

  void unary(std::string name, const std::function<Tensor(const Tensor&)>& op, const Tensor& point) {
    const auto out = op(point.detach());
    const auto weigh = probe(rng, out.shape());
    add(std::move(name), grad_check([&](const Tensor& x) { return weigh(op(x)); }, point, eps));
  }

  void binary(std::string name, const std::function<Tensor(const Tensor&, const Tensor&)>& op, Tensor a,
              Tensor b) {
    const auto weigh = probe(rng, op(a.detach(), b.detach()).shape());
    std::vector<Tensor> params{a, b};
    add(std::move(name), grad_check([&] { return weigh(op(a, b)); }, params, eps));
  }
};

VariationalEmbedding toy_embedding(Rng& rng, std::size_t n, std::size_t d) {
  return {random_tensor(rng, {n, d}), random_tensor(rng, {n, d}, -0.5, 0.5)};
}

std::vector<double> gaussian(Rng& rng, std::size_t count) {
  std::vector<double> out(count);
  for (auto& v : out) v = rng.normal();
  return out;
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, double tolerance, double epsilon) {
  Suite s{Rng::derive(seed, "gradcheck"), tolerance, epsilon, {}};
  auto& rng = s.rng;

  s.binary("matmul", [](const Tensor& a, const Tensor& b) { return matmul(a, b); }, random_tensor(rng, {3, 4}),
           random_tensor(rng, {4, 2}));
  {
    auto input = random_tensor(rng, {1, 2, 4, 4});
    auto kernel = random_tensor(rng, {3, 2, 3, 3});
    auto bias = random_tensor(rng, {3});
    const auto weigh = probe(rng, {1, 3, 4, 4});
    std::vector<Tensor> params{input, kernel, bias};
    s.add("conv2d", grad_check([&] { return weigh(conv2d(input, kernel, bias, 1)); }, params, epsilon));
  }
  s.unary("maxpool2x2", [](const Tensor& x) { return maxpool2x2(x); }, distinct_values(rng, {1, 2, 4, 4}));
  s.unary("relu", [](const Tensor& x) { return relu(x); }, away_from_zero(rng, {3, 5}, 0.05));
  s.binary("add", [](const Tensor& a, const Tensor& b) { return add(a, b); }, random_tensor(rng, {3, 4}),
           random_tensor(rng, {3, 4}));
  s.binary("add_broadcast", [](const Tensor& a, const Tensor& b) { return add(a, b); }, random_tensor(rng, {3, 4}),
           random_tensor(rng, {1, 4}));
  s.binary("sub", [](const Tensor& a, const Tensor& b) { return sub(a, b); }, random_tensor(rng, {3, 4}),
           random_tensor(rng, {1, 4}));
  s.binary("elementwise_mul", [](const Tensor& a, const Tensor& b) { return mul(a, b); },
           random_tensor(rng, {3, 4}), random_tensor(rng, {3, 4}));
  s.unary("exp", [](const Tensor& x) { return exp(x); }, random_tensor(rng, {2, 5}));
  s.unary("log", [](const Tensor& x) { return log(x); }, random_tensor(rng, {2, 5}, 0.2, 1.0));
  s.unary("scale", [](const Tensor& x) { return scale(x, -2.5); }, random_tensor(rng, {2, 5}));
  s.unary("sum", [](const Tensor& x) { return sum(x); }, random_tensor(rng, {2, 5}));
  s.unary("sum_over_axis", [](const Tensor& x) { return sum_over_axis(x, 1); }, random_tensor(rng, {3, 4}));
  s.unary("mean_over_axis", [](const Tensor& x) { return mean_over_axis(x, 0); }, random_tensor(rng, {3, 4}));
  s.unary("square", [](const Tensor& x) { return square(x); }, random_tensor(rng, {2, 5}));
  s.unary("sqrt", [](const Tensor& x) { return sqrt(x); }, random_tensor(rng, {2, 5}, 0.2, 1.0));
  s.unary("log_softmax_rows", [](const Tensor& x) { return log_softmax_rows(x); }, random_tensor(rng, {3, 4}));
  s.unary("clamp", [](const Tensor& x) { return clamp(x, -0.5, 0.5); }, random_tensor(rng, {3, 4}));

  {
    // Encoder forward on a 2-image batch, all parameters.
    auto spec = reference_architecture(Architecture::synthetic_vector, {.latent_dim = 3, .input_dim = 5, .hidden = 6});
    auto enc = EncoderParams::initialize(spec, 3, seed);
    std::vector<Image> images(2);
    for (auto& img : images) {
      img.shape = spec.input;
      img.pixels.resize(spec.input.size());
      for (auto& p : img.pixels) p = rng.uniform(0.0, 1.0);
    }
    const auto weigh = probe(rng, {2, 6});
    s.add("encoder", grad_check(
                         [&] {
                           const auto e = encode_batch(enc, images);
                           return weigh(concat(std::vector<Tensor>{e.mean, e.logvar}, 1));
                         },
                         enc.parameters(), epsilon));

    // Classification loss, 2 classes, 4 images, through encoder parameters.
    std::vector<Image> batch(4);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      batch[i].shape = spec.input;
      batch[i].label = static_cast<int>(i % 2);
      batch[i].pixels.resize(spec.input.size());
      for (auto& p : batch[i].pixels) p = rng.uniform(0.0, 1.0);
    }
    const SamplingConfig cfg{.samples = 3, .temperature = 1.0, .latent_dim = 3, .weighted = true};
    const auto noise = gaussian(rng, 64);
    s.add("classification_loss", grad_check(
                                     [&] {
                                       auto stream = NoiseStream::fixed(noise);
                                       const std::vector<std::size_t> support{0, 1}, query{2, 3};
                                       const auto e = encode_batch(enc, batch);
                                       const auto se = e.rows(support);
                                       std::vector<VariationalPrototype> protos{
                                           compute_prototype(se.rows(std::vector<std::size_t>{0}), 1, 0),
                                           compute_prototype(se.rows(std::vector<std::size_t>{1}), 1, 1)};
                                       const std::vector<int> labels{0, 1};
                                       return classification_loss(e.rows(query), labels, protos, cfg, stream);
                                     },
                                     enc.parameters(), epsilon));

    // Replay loss against constant weighted prototypes.
    std::vector<VariationalPrototype> stored;
    for (int c = 0; c < 2; ++c) {
      stored.push_back({1, c, random_tensor(rng, {1, 3}).detach(), random_tensor(rng, {1, 3}).detach()});
    }
    s.add("replay_loss", grad_check(
                             [&] {
                               auto stream = NoiseStream::fixed(noise);
                               const auto e = encode_batch(enc, batch);
                               const std::vector<int> labels{0, 1, 0, 1};
                               return replay_loss(e, labels, stored, cfg, stream);
                             },
                             enc.parameters(), epsilon));
  }

  {
    // Loss-level checks directly on embedding tensors (D = 8, Z = 4).
    const SamplingConfig cfg{.samples = 4, .temperature = 0.7, .latent_dim = 8, .weighted = true};
    auto q = toy_embedding(rng, 3, 8);
    auto p0 = toy_embedding(rng, 2, 8);
    auto p1 = toy_embedding(rng, 2, 8);
    const auto noise = gaussian(rng, 4 * 8 * 5);
    std::vector<Tensor> params{q.mean, q.logvar, p0.mean, p0.logvar, p1.mean, p1.logvar};
    s.add("classification_loss_embeddings",
          grad_check(
              [&] {
                auto stream = NoiseStream::fixed(noise);
                std::vector<VariationalPrototype> protos{compute_prototype(p0, 2, 0), compute_prototype(p1, 2, 1)};
                const std::vector<int> labels{0, 1, 1};
                const bool weighted[] = {true, false};
                return classification_loss(q, labels, protos, cfg, stream, weighted);
              },
              params, epsilon));
  }

  {
    auto s1 = random_tensor(rng, {2, 4});
    const auto s2 = random_tensor(rng, {2, 4}).detach();
    const auto lv = random_tensor(rng, {1, 4}).detach();
    s.unary("weighted_distance", [&](const Tensor& x) { return weighted_distance(x, s2, lv); }, s1);
  }
  return s.results;
}

}  // namespace vpr
