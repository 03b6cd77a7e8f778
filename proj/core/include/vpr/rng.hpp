#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace vpr {

// Seeded pseudo-random stream. Independent consumers should use derive()
// so that adding draws to one stream never shifts another.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Stream keyed by (seed, name), decorrelated through splitmix64.
  static Rng derive(std::uint64_t seed, std::string_view name);

  double uniform(double lo, double hi);
  double normal();
  std::size_t index(std::size_t n);
  // k distinct indices from [0, n), in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);
  std::vector<std::size_t> permutation(std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[index(i)]);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// Source of standard-normal noise for latent sampling. A seeded stream for
// training, or a fixed buffer that is replayed cyclically (for oracles and
// finite-difference checks, where every evaluation must see the same noise).
class NoiseStream {
 public:
  explicit NoiseStream(std::uint64_t seed) : rng_(seed) {}
  static NoiseStream fixed(std::vector<double> values);

  std::vector<double> draw(std::size_t count);

 private:
  NoiseStream() : rng_(0) {}

  Rng rng_;
  std::vector<double> fixed_;
  std::size_t cursor_ = 0;
  bool is_fixed_ = false;
};

}  // namespace vpr
