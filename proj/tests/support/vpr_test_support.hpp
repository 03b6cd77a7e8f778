#pragma once

// Fixtures and straight-line oracles shared by the unit, invariant and
// acceptance binaries. Oracles here use plain loops over std::vector and
// never call into the library's math.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "vpr/data.hpp"
#include "vpr/encoder.hpp"
#include "vpr/proto.hpp"
#include "vpr/tensor.hpp"
#include "vpr/trainer.hpp"

namespace vpr::testing {

inline std::filesystem::path data_dir() { return VPR_TEST_DATA_DIR; }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("vpr-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<double> uniform_values(std::size_t n, std::mt19937_64& gen, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(gen);
  return v;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Brute-force posterior for one query sample: softmax over classes of
// -d / tau, each d an explicit loop over coordinates.
inline std::vector<double> oracle_posterior(const std::vector<double>& query,
                                            const std::vector<std::vector<double>>& proto_samples,
                                            const std::vector<std::vector<double>>& logvars, double tau) {
  std::vector<double> logits;
  for (std::size_t c = 0; c < proto_samples.size(); ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < query.size(); ++i) {
      double diff = query[i] - proto_samples[c][i];
      if (!logvars.empty() && !logvars[c].empty()) diff /= std::sqrt(std::exp(logvars[c][i]));
      acc += diff * diff;
    }
    logits.push_back(-std::sqrt(acc) / tau);
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - top);
  std::vector<double> p;
  for (double l : logits) p.push_back(std::exp(l - top) / z);
  return p;
}

// Plain-vector view of a problem for classification_loss: noise is consumed
// Z*D per prototype in list order, then Z*D per query row.
struct LossProblem {
  std::size_t d = 0;
  std::size_t z = 0;
  double tau = 1.0;
  std::vector<std::vector<double>> query_mean, query_logvar;
  std::vector<int> labels;
  std::vector<std::vector<double>> proto_mean, proto_logvar;
  std::vector<int> proto_class;
  std::vector<bool> proto_weighted;
  std::vector<double> noise;
};

inline double oracle_loss(const LossProblem& p) {
  std::size_t cursor = 0;
  auto next = [&] { return p.noise[cursor++ % p.noise.size()]; };
  // samples[c][z][i]
  std::vector<std::vector<std::vector<double>>> ps(p.proto_mean.size());
  for (std::size_t c = 0; c < p.proto_mean.size(); ++c) {
    for (std::size_t s = 0; s < p.z; ++s) {
      std::vector<double> v(p.d);
      for (std::size_t i = 0; i < p.d; ++i) v[i] = p.proto_mean[c][i] + std::sqrt(std::exp(p.proto_logvar[c][i])) * next();
      ps[c].push_back(v);
    }
  }
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t q = 0; q < p.query_mean.size(); ++q) {
    std::size_t col = 0;
    while (p.proto_class[col] != p.labels[q]) ++col;
    for (std::size_t s = 0; s < p.z; ++s) {
      std::vector<double> v(p.d);
      for (std::size_t i = 0; i < p.d; ++i) v[i] = p.query_mean[q][i] + std::sqrt(std::exp(p.query_logvar[q][i])) * next();
      std::vector<std::vector<double>> paired, weights;
      for (std::size_t c = 0; c < ps.size(); ++c) {
        paired.push_back(ps[c][s]);
        weights.push_back(p.proto_weighted.empty() || !p.proto_weighted[c] ? std::vector<double>{} : p.proto_logvar[c]);
      }
      total += -std::log(oracle_posterior(v, paired, weights, p.tau)[col]);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

inline Tensor rows_tensor(const std::vector<std::vector<double>>& rows) {
  std::vector<double> flat;
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return Tensor({rows.size(), rows.front().size()}, std::move(flat));
}

// Library-side evaluation of the same problem.
inline double library_loss(const LossProblem& p) {
  VariationalEmbedding q{rows_tensor(p.query_mean), rows_tensor(p.query_logvar)};
  std::vector<VariationalPrototype> protos;
  for (std::size_t c = 0; c < p.proto_mean.size(); ++c) {
    protos.push_back({1, p.proto_class[c], Tensor::row(p.proto_mean[c]), Tensor::row(p.proto_logvar[c])});
  }
  SamplingConfig cfg{p.z, p.tau, p.d, true};
  auto noise = NoiseStream::fixed(p.noise);
  auto mask = std::make_unique<bool[]>(protos.size());
  for (std::size_t c = 0; c < protos.size(); ++c) mask[c] = !p.proto_weighted.empty() && p.proto_weighted[c];
  const std::span<const bool> weighted = p.proto_weighted.empty() ? std::span<const bool>{}
                                                                  : std::span<const bool>(mask.get(), protos.size());
  return classification_loss(q, p.labels, protos, cfg, noise, weighted).item();
}

inline LossProblem random_problem(std::mt19937_64& gen, std::size_t c, std::size_t z, std::size_t d, std::size_t queries) {
  LossProblem p;
  p.d = d;
  p.z = z;
  p.tau = std::uniform_real_distribution<double>(0.3, 2.0)(gen);
  std::uniform_int_distribution<int> label(0, static_cast<int>(c) - 1);
  for (std::size_t k = 0; k < c; ++k) {
    p.proto_mean.push_back(uniform_values(d, gen, -2.0, 2.0));
    p.proto_logvar.push_back(uniform_values(d, gen, -1.0, 1.0));
    p.proto_class.push_back(static_cast<int>(k) * 3);
    p.proto_weighted.push_back(gen() % 2 == 0);
  }
  for (std::size_t q = 0; q < queries; ++q) {
    p.query_mean.push_back(uniform_values(d, gen, -2.0, 2.0));
    p.query_logvar.push_back(uniform_values(d, gen, -1.0, 1.0));
    p.labels.push_back(p.proto_class[static_cast<std::size_t>(label(gen))]);
  }
  std::normal_distribution<double> normal;
  const auto needed = (c + queries) * z * d;
  for (std::size_t i = 0; i < needed; ++i) p.noise.push_back(normal(gen));
  return p;
}

// Cyclic Jacobi eigendecomposition of a symmetric matrix; returns
// eigenvalues (unsorted) and eigenvectors as columns of `v`.
inline void jacobi_eigen(std::vector<std::vector<double>> a, std::vector<double>& values, std::vector<std::vector<double>>& v) {
  const std::size_t n = a.size();
  v.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    }
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  values.resize(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = a[i][i];
}

// Sample Pearson correlation from its defining sums.
inline double direct_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double cov = 0, vx = 0, vy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    cov += (x[i] - mx) * (y[i] - my);
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
  }
  return cov / std::sqrt(vx * vy);
}

// Desk-scale incremental-class setup: 5 blob classes in 20 dimensions,
// tasks of 2+1+1+1 classes, 10 training images per class.
struct DeskSetup {
  Dataset dataset;
  ProtocolSchedule schedule;
  EncoderParams encoder;
  TrainerConfig cfg;
};

inline DeskSetup desk_class_setup(std::uint64_t seed, std::size_t latent_dim = 16, std::size_t samples = 10,
                                  std::size_t epochs = 50) {
  auto dataset = synthetic_blobs(5, 20, 10, 50, 10.0, seed);
  SplitOptions split;
  split.kind = SplitKind::custom;
  split.classes_per_task = {2, 1, 1, 1};
  auto schedule = split_protocol(dataset, split, seed);
  auto spec = reference_architecture(Architecture::synthetic_vector,
                                     {.latent_dim = latent_dim, .input_dim = 20, .hidden = 64});
  TrainerConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.epochs_per_task = epochs;
  cfg.sampling.samples = samples;
  cfg.sampling.latent_dim = latent_dim;
  cfg.sampling.temperature = 1.0;
  cfg.seed = seed;
  return {std::move(dataset), std::move(schedule), EncoderParams::initialize(spec, latent_dim, seed), cfg};
}

// Incremental-domain setup on the 500-image 8x8 digits subset: 5 permuted
// tasks, 10 test images per class held out.
inline DeskSetup desk_domain_setup(std::uint64_t seed) {
  auto dataset = holdout(load_idx(data_dir() / "digits500-images-idx3-ubyte", data_dir() / "digits500-labels-idx1-ubyte"),
                         10, seed);
  auto schedule = permuted_protocol(dataset, 5, seed);
  auto spec = reference_architecture(Architecture::synthetic_vector,
                                     {.latent_dim = 16, .input_dim = dataset.shape.size(), .hidden = 64});
  TrainerConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.epochs_per_task = 60;
  cfg.sampling.samples = 10;
  cfg.sampling.latent_dim = 16;
  cfg.exemplars_per_class = 5;
  cfg.seed = seed;
  return {std::move(dataset), std::move(schedule), EncoderParams::initialize(spec, 16, seed), cfg};
}

}  // namespace vpr::testing
