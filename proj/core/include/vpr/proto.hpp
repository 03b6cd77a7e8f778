#pragma once

// Variational prototype mathematics.
//
// Embeddings and prototypes are Gaussians in a D-dimensional latent space,
// stored as (mean, log-variance) row tensors. Classification compares
// reparameterized samples through a softmax over negative distances; the
// replay loss does the same against frozen prototypes from an earlier task
// with each coordinate weighted by exp(-0.5 * stored log-variance).
//
// Sample pairing: the z-th sample of a query is compared with the z-th
// sample of every class prototype, and losses average over z.

#include <cstddef>
#include <span>
#include <vector>

#include "vpr/rng.hpp"
#include "vpr/tensor.hpp"

namespace vpr {

// One row per image: mean [n, D], logvar [n, D].
struct VariationalEmbedding {
  Tensor mean;
  Tensor logvar;

  std::size_t count() const { return mean.dim(0); }
  std::size_t dim() const { return mean.dim(1); }
  VariationalEmbedding rows(std::span<const std::size_t> indices) const;
  void validate() const;
};

struct VariationalPrototype {
  int task_id = 0;
  int class_id = 0;
  Tensor mean;    // [1, D]
  Tensor logvar;  // [1, D]

  std::size_t dim() const { return mean.dim(1); }
  // Constant copy, cut from the graph that produced it.
  VariationalPrototype detached() const;
};

struct SamplingConfig {
  std::size_t samples = 50;   // Z
  double temperature = 1.0;   // tau
  std::size_t latent_dim = 0; // D; 0 skips the dimension check
  bool weighted = true;       // variance-weighted distances for stored prototypes

  void validate() const;
};

// Z samples per item, rows ordered item-major (row = item * Z + z).
struct LatentSamples {
  Tensor values;
  std::size_t items = 0;
  std::size_t per_item = 0;
};

// Elementwise mean of the means and of the log-variances.
VariationalPrototype compute_prototype(const VariationalEmbedding& embeddings, int task_id, int class_id);
VariationalPrototype compute_prototype(std::span<const VariationalEmbedding> embeddings, int task_id, int class_id);

// values = mean + exp(0.5 * logvar) * noise, with `noise` of shape
// [items * Z, D] and mean/logvar of shape [items, D].
LatentSamples sample_latent(const Tensor& mean, const Tensor& logvar, const Tensor& noise, std::size_t samples);
LatentSamples sample_latent(const VariationalEmbedding& e, NoiseStream& noise, std::size_t samples);
LatentSamples sample_latent(const VariationalPrototype& p, NoiseStream& noise, std::size_t samples);

// Row-wise || exp(-0.5 * logvar) * (s1 - s2) ||_2 as an [n, 1] tensor.
// `logvar` is a [1, D] row shared by all rows, or undefined for plain L2.
Tensor weighted_distance(const Tensor& s1, const Tensor& s2, const Tensor& logvar);
double weighted_distance(std::span<const double> s1, std::span<const double> s2, std::span<const double> logvar);

// log p(c | s^z) for each query sample row against every class: [items*Z, C].
// `weights[c]` is the log-variance weighting class c's distances, or an
// undefined tensor for plain L2; it is ignored unless cfg.weighted.
Tensor class_log_posterior(const LatentSamples& query, std::span<const LatentSamples> class_samples,
                           std::span<const Tensor> weights, const SamplingConfig& cfg);
Tensor class_posterior(const LatentSamples& query, std::span<const LatentSamples> class_samples,
                       std::span<const Tensor> weights, const SamplingConfig& cfg);

// Mean over queries and samples of -log p(label | s^z).
//
// Noise is drawn in a fixed order: Z x D per prototype in list order, then
// Z x D per query row. `weighted[c]`, when given, marks prototypes whose
// distances use their own log-variance as weights (only under cfg.weighted).
Tensor classification_loss(const VariationalEmbedding& queries, std::span<const int> labels,
                           std::span<const VariationalPrototype> prototypes, const SamplingConfig& cfg,
                           NoiseStream& noise, std::span<const bool> weighted = {});

// Cross-entropy of re-encoded exemplars against the prototypes stored for
// one earlier task. Stored prototypes are treated as constants.
Tensor replay_loss(const VariationalEmbedding& exemplars, std::span<const int> labels,
                   std::span<const VariationalPrototype> stored, const SamplingConfig& cfg, NoiseStream& noise);

// Squared-error matching of predicted log-variances to the stored ones,
// ignoring means. Used by the variance-only recall ablation.
Tensor variance_recall_loss(const VariationalEmbedding& exemplars, std::span<const int> labels,
                            std::span<const VariationalPrototype> stored);

}  // namespace vpr
