#include "vpr/proto.hpp"

#include <cmath>
#include <algorithm>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>

namespace vpr {

namespace {

void require_row_vector(const char* what, const Tensor& t, std::size_t d) {
  if (t.rank() != 2 || t.dim(0) != 1 || (d != 0 && t.dim(1) != d)) {
    throw std::invalid_argument(std::string(what) + ": expected a [1, " + std::to_string(d) + "] row, got " +
                                to_string(t.shape()));
  }
}

// Row r of the tiled result takes source row index(r).
template <typename F>
std::vector<std::size_t> tile_indices(std::size_t rows, F index) {
  std::vector<std::size_t> idx(rows);
  for (std::size_t r = 0; r < rows; ++r) idx[r] = index(r);
  return idx;
}

}  // namespace

VariationalEmbedding VariationalEmbedding::rows(std::span<const std::size_t> indices) const {
  return {select_rows(mean, indices), select_rows(logvar, indices)};
}

void VariationalEmbedding::validate() const {
  if (!mean.defined() || !logvar.defined()) throw std::invalid_argument("embedding is missing mean or logvar");
  if (mean.rank() != 2 || mean.shape() != logvar.shape()) {
    throw std::invalid_argument("embedding mean " + to_string(mean.shape()) + " and logvar " +
                                to_string(logvar.shape()) + " must be matching [n, D] tensors");
  }
  for (double v : mean.data()) {
    if (!std::isfinite(v)) throw std::invalid_argument("embedding mean has a non-finite entry");
  }
  for (double v : logvar.data()) {
    if (!std::isfinite(v)) throw std::invalid_argument("embedding logvar has a non-finite entry");
  }
}

VariationalPrototype VariationalPrototype::detached() const {
  return {task_id, class_id, mean.detach(), logvar.detach()};
}

void SamplingConfig::validate() const {
  if (samples < 1) throw std::invalid_argument("sampling: Z must be at least 1");
  if (!(temperature > 0.0)) throw std::invalid_argument("sampling: temperature must be positive");
}

VariationalPrototype compute_prototype(const VariationalEmbedding& embeddings, int task_id, int class_id) {
  embeddings.validate();
  if (embeddings.count() == 0) throw std::invalid_argument("compute_prototype: no embeddings");
  return {task_id, class_id, mean_over_axis(embeddings.mean, 0), mean_over_axis(embeddings.logvar, 0)};
}

VariationalPrototype compute_prototype(std::span<const VariationalEmbedding> embeddings, int task_id, int class_id) {
  if (embeddings.empty()) throw std::invalid_argument("compute_prototype: empty embedding list");
  std::vector<Tensor> means, logvars;
  for (const auto& e : embeddings) {
    e.validate();
    if (e.dim() != embeddings.front().dim()) throw std::invalid_argument("compute_prototype: mixed latent dimensions");
    means.push_back(e.mean);
    logvars.push_back(e.logvar);
  }
  return compute_prototype(VariationalEmbedding{concat(means, 0), concat(logvars, 0)}, task_id, class_id);
}

LatentSamples sample_latent(const Tensor& mean, const Tensor& logvar, const Tensor& noise, std::size_t samples) {
  if (samples < 1) throw std::invalid_argument("sample_latent: need at least one sample");
  if (mean.rank() != 2 || mean.shape() != logvar.shape()) {
    throw std::invalid_argument("sample_latent: mean " + to_string(mean.shape()) + " vs logvar " +
                                to_string(logvar.shape()));
  }
  const auto items = mean.dim(0);
  const Shape expected{items * samples, mean.dim(1)};
  if (noise.shape() != expected) {
    throw std::invalid_argument("sample_latent: noise shape " + to_string(noise.shape()) + ", expected " +
                                to_string(expected));
  }
  Tensor mu = mean;
  Tensor lv = logvar;
  if (samples > 1 || items > 1) {
    const auto idx = tile_indices(items * samples, [samples](std::size_t r) { return r / samples; });
    mu = select_rows(mean, idx);
    lv = select_rows(logvar, idx);
  }
  return {mu + exp(scale(lv, 0.5)) * noise, items, samples};
}

LatentSamples sample_latent(const VariationalEmbedding& e, NoiseStream& noise, std::size_t samples) {
  const Shape shape{e.count() * samples, e.dim()};
  return sample_latent(e.mean, e.logvar, Tensor(shape, noise.draw(numel(shape))), samples);
}

LatentSamples sample_latent(const VariationalPrototype& p, NoiseStream& noise, std::size_t samples) {
  require_row_vector("sample_latent", p.mean, 0);
  const Shape shape{samples, p.dim()};
  return sample_latent(p.mean, p.logvar, Tensor(shape, noise.draw(numel(shape))), samples);
}

Tensor weighted_distance(const Tensor& s1, const Tensor& s2, const Tensor& logvar) {
  if (s1.rank() != 2) throw std::invalid_argument("weighted_distance: expected [n, D] samples, got " + to_string(s1.shape()));
  Tensor diff = s1 - s2;
  if (logvar.defined()) {
    require_row_vector("weighted_distance", logvar, s1.dim(1));
    diff = diff * exp(scale(logvar, -0.5));
  }
  return sqrt(sum_over_axis(square(diff), 1));
}

double weighted_distance(std::span<const double> s1, std::span<const double> s2, std::span<const double> logvar) {
  if (s1.size() != s2.size() || (!logvar.empty() && logvar.size() != s1.size())) {
    throw std::invalid_argument("weighted_distance: length mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < s1.size(); ++i) {
    double d = s1[i] - s2[i];
    if (!logvar.empty()) d *= std::exp(-0.5 * logvar[i]);
    acc += d * d;
  }
  return std::sqrt(acc);
}

Tensor class_log_posterior(const LatentSamples& query, std::span<const LatentSamples> class_samples,
                           std::span<const Tensor> weights, const SamplingConfig& cfg) {
  cfg.validate();
  if (class_samples.empty()) throw std::invalid_argument("class_posterior: no classes");
  if (!weights.empty() && weights.size() != class_samples.size()) {
    throw std::invalid_argument("class_posterior: one weight entry per class required");
  }
  const auto z = cfg.samples;
  if (query.per_item != z || query.values.dim(0) != query.items * z) {
    throw std::invalid_argument("class_posterior: query carries " + std::to_string(query.per_item) +
                                " samples per item, expected Z = " + std::to_string(z));
  }
  const auto rows = query.values.dim(0);
  const auto pair = tile_indices(rows, [z](std::size_t r) { return r % z; });

  std::vector<Tensor> distances;
  distances.reserve(class_samples.size());
  for (std::size_t c = 0; c < class_samples.size(); ++c) {
    const auto& cs = class_samples[c];
    if (cs.values.dim(0) != z) {
      throw std::invalid_argument("class_posterior: class " + std::to_string(c) + " supplies " +
                                  std::to_string(cs.values.dim(0)) + " samples, expected Z = " + std::to_string(z));
    }
    const Tensor w = (cfg.weighted && !weights.empty()) ? weights[c] : Tensor{};
    distances.push_back(weighted_distance(query.values, select_rows(cs.values, pair), w));
  }
  return log_softmax_rows(scale(concat(distances, 1), -1.0 / cfg.temperature));
}

Tensor class_posterior(const LatentSamples& query, std::span<const LatentSamples> class_samples,
                       std::span<const Tensor> weights, const SamplingConfig& cfg) {
  return exp(class_log_posterior(query, class_samples, weights, cfg));
}

namespace {

// Column index for each label, in prototype order.
std::vector<std::size_t> label_columns(std::span<const int> labels, std::span<const VariationalPrototype> prototypes,
                                       const char* who) {
  std::map<int, std::size_t> column;
  for (std::size_t c = 0; c < prototypes.size(); ++c) {
    if (!column.emplace(prototypes[c].class_id, c).second) {
      throw std::invalid_argument(std::string(who) + ": duplicate prototype for class " +
                                  std::to_string(prototypes[c].class_id));
    }
  }
  std::vector<std::size_t> cols;
  cols.reserve(labels.size());
  for (int label : labels) {
    auto it = column.find(label);
    if (it == column.end()) {
      throw std::invalid_argument(std::string(who) + ": no prototype for class " + std::to_string(label));
    }
    cols.push_back(it->second);
  }
  return cols;
}

Tensor posterior_cross_entropy(const VariationalEmbedding& queries, std::span<const int> labels,
                               std::span<const VariationalPrototype> prototypes, const SamplingConfig& cfg,
                               NoiseStream& noise, std::span<const bool> weighted, const char* who) {
  cfg.validate();
  queries.validate();
  if (prototypes.empty()) throw std::invalid_argument(std::string(who) + ": no prototypes");
  if (labels.size() != queries.count()) {
    throw std::invalid_argument(std::string(who) + ": " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(queries.count()) + " embeddings");
  }
  if (cfg.latent_dim != 0 && queries.dim() != cfg.latent_dim) {
    throw std::invalid_argument(std::string(who) + ": embedding dimension " + std::to_string(queries.dim()) +
                                " != configured D " + std::to_string(cfg.latent_dim));
  }
  if (!weighted.empty() && weighted.size() != prototypes.size()) {
    throw std::invalid_argument(std::string(who) + ": weighted mask length differs from prototype count");
  }
  const auto cols = label_columns(labels, prototypes, who);

  std::vector<LatentSamples> proto_samples;
  std::vector<Tensor> weights;
  proto_samples.reserve(prototypes.size());
  for (std::size_t c = 0; c < prototypes.size(); ++c) {
    const auto& p = prototypes[c];
    require_row_vector(who, p.mean, queries.dim());
    require_row_vector(who, p.logvar, queries.dim());
    proto_samples.push_back(sample_latent(p, noise, cfg.samples));
    weights.push_back(!weighted.empty() && weighted[c] ? p.logvar : Tensor{});
  }
  const auto query_samples = sample_latent(queries, noise, cfg.samples);
  const Tensor log_p = class_log_posterior(query_samples, proto_samples, weights, cfg);

  const auto rows = log_p.dim(0);
  const auto ncls = log_p.dim(1);
  std::vector<double> onehot(rows * ncls, 0.0);
  for (std::size_t r = 0; r < rows; ++r) onehot[r * ncls + cols[r / cfg.samples]] = 1.0;
  const Tensor picked = sum(log_p * Tensor({rows, ncls}, std::move(onehot)));
  return scale(picked, -1.0 / static_cast<double>(rows));
}

}  // namespace

Tensor classification_loss(const VariationalEmbedding& queries, std::span<const int> labels,
                           std::span<const VariationalPrototype> prototypes, const SamplingConfig& cfg,
                           NoiseStream& noise, std::span<const bool> weighted) {
  return posterior_cross_entropy(queries, labels, prototypes, cfg, noise, weighted, "classification_loss");
}

Tensor replay_loss(const VariationalEmbedding& exemplars, std::span<const int> labels,
                   std::span<const VariationalPrototype> stored, const SamplingConfig& cfg, NoiseStream& noise) {
  if (stored.empty()) throw std::invalid_argument("replay_loss: no stored prototypes");
  std::vector<VariationalPrototype> frozen;
  frozen.reserve(stored.size());
  for (const auto& p : stored) {
    if (p.task_id != stored.front().task_id) {
      throw std::invalid_argument("replay_loss: stored prototypes span tasks " + std::to_string(stored.front().task_id) +
                                  " and " + std::to_string(p.task_id));
    }
    frozen.push_back(p.detached());
  }
  // std::vector<bool> is not contiguous, hence the array.
  auto all = std::make_unique<bool[]>(frozen.size());
  std::fill_n(all.get(), frozen.size(), true);
  return posterior_cross_entropy(exemplars, labels, frozen, cfg, noise,
                                 std::span<const bool>(all.get(), frozen.size()), "replay_loss");
}

Tensor variance_recall_loss(const VariationalEmbedding& exemplars, std::span<const int> labels,
                            std::span<const VariationalPrototype> stored) {
  exemplars.validate();
  if (labels.size() != exemplars.count()) throw std::invalid_argument("variance_recall_loss: label count mismatch");
  const auto cols = label_columns(labels, stored, "variance_recall_loss");
  const auto d = exemplars.dim();
  std::vector<double> target;
  target.reserve(labels.size() * d);
  for (auto c : cols) {
    require_row_vector("variance_recall_loss", stored[c].logvar, d);
    auto lv = stored[c].logvar.data();
    target.insert(target.end(), lv.begin(), lv.end());
  }
  const Tensor t({labels.size(), d}, std::move(target));
  return scale(sum(square(exemplars.logvar - t)), 1.0 / static_cast<double>(labels.size() * d));
}

}  // namespace vpr
