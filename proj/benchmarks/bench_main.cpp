#include <algorithm>
#include <iterator>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "vpr/encoder.hpp"
#include "vpr/proto.hpp"
#include "vpr/tensor.hpp"

using namespace vpr;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(gen);
  return v;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a({n, n}, random_values(n * n, 1));
  const Tensor b({n, n}, random_values(n * n, 2));
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  Tensor kernel({c, 3, 5, 5}, random_values(c * 75, 3), true);
  const Tensor input({8, 3, 32, 32}, random_values(8 * 3 * 32 * 32, 4));
  for (auto _ : state) {
    kernel.zero_grad();
    backward(sum(conv2d(input, kernel, Tensor{}, 2)));
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(8)->Arg(20);

void BM_EncodeBatch(benchmark::State& state) {
  const auto arch = static_cast<Architecture>(state.range(0));
  const auto spec = reference_architecture(arch, {.latent_dim = 500});
  const auto enc = EncoderParams::initialize(spec, 500, 5);
  const InputShape shape = arch == Architecture::cifar_like_32 ? InputShape{3, 32, 32} : InputShape{1, 28, 28};
  std::vector<Image> images;
  for (int i = 0; i < 16; ++i) images.push_back({shape, random_values(shape.size(), 10 + i), 0, 1, i});
  for (auto _ : state) benchmark::DoNotOptimize(encode_batch(enc, images));
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_EncodeBatch)->Arg(static_cast<int>(Architecture::mnist_like_28))->Arg(static_cast<int>(Architecture::cifar_like_32));

void BM_ClassificationLoss(benchmark::State& state) {
  const auto z = static_cast<std::size_t>(state.range(0));
  constexpr std::size_t d = 64, classes = 10, queries = 32;
  std::vector<VariationalPrototype> protos;
  for (std::size_t c = 0; c < classes; ++c) {
    protos.push_back({1, static_cast<int>(c), Tensor::row(random_values(d, 100 + c)),
                      Tensor::row(random_values(d, 200 + c))});
  }
  std::vector<int> labels(queries);
  for (std::size_t i = 0; i < queries; ++i) labels[i] = static_cast<int>(i % classes);
  VariationalEmbedding q{Tensor({queries, d}, random_values(queries * d, 6), true),
                               Tensor({queries, d}, random_values(queries * d, 7), true)};
  bool weighted[classes];
  std::fill(std::begin(weighted), std::end(weighted), true);
  const SamplingConfig cfg{.samples = z, .temperature = 1.0, .latent_dim = d, .weighted = true};
  NoiseStream noise(8);
  for (auto _ : state) {
    q.mean.zero_grad();
    q.logvar.zero_grad();
    backward(classification_loss(q, labels, protos, cfg, noise, weighted));
  }
}
BENCHMARK(BM_ClassificationLoss)->Arg(10)->Arg(50);

}  // namespace

BENCHMARK_MAIN();
