#pragma once

// Episodic memory: stored exemplar images per class, the prototype stored
// for every (task, class) pair, and footprint accounting.
//
// Snapshot file layout (all integers and reals little-endian, 8 bytes):
//
//   magic              "VPRMEM1\0"
//   u64 D              latent dimension (0 when no prototypes are stored)
//   u64 budget         exemplar budget in reals, 2^64-1 when unlimited
//   u64 n_exemplars
//   u64 n_prototypes
//   u64 channels, height, width   exemplar image shape (0s when none)
//   n_exemplars  x (i64 class_id, i64 task_id, i64 sample_index)
//   n_prototypes x (i64 task_id, i64 class_id)
//   f64 exemplar pixels, n_exemplars * channels * height * width, in
//       record order
//   f64 prototype values, per prototype D means then D log-variances
//
// Exemplars are listed by ascending class id, each class's images in
// storage order; prototypes by ascending (task_id, class_id).

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "vpr/encoder.hpp"
#include "vpr/image.hpp"
#include "vpr/proto.hpp"
#include "vpr/rng.hpp"

namespace vpr {

class EpisodicMemory {
 public:
  using ExemplarMap = std::map<int, std::vector<Image>>;
  using PrototypeKey = std::pair<int, int>;  // (task_id, class_id)
  using PrototypeMap = std::map<PrototypeKey, VariationalPrototype>;

  // Budget in stored reals for exemplars; nullopt means unlimited.
  explicit EpisodicMemory(std::optional<std::size_t> budget_elements = std::nullopt);

  // Keep up to `per_class_quota` images of each class, drawn uniformly
  // without replacement; classes already present gain the new images.
  // Over budget, the store is followed by rebalance().
  void store_exemplars(const ExemplarMap& images_per_class, std::size_t per_class_quota, Rng& rng);

  // Throws on a duplicate (task, class) key; nothing is inserted then.
  void store_prototypes(std::span<const VariationalPrototype> prototypes);

  // Quota per class = floor(budget / (classes_seen * elements_per_image)),
  // evicting surplus exemplars uniformly at random.
  void rebalance(std::size_t classes_seen, Rng& rng);

  // Per-class quota the budget allows for `classes_seen` classes of
  // `elements_per_image` reals each. Throws when it is below 1.
  std::size_t quota_for(std::size_t classes_seen, std::size_t elements_per_image) const;

  const ExemplarMap& exemplars() const { return exemplars_; }
  const PrototypeMap& prototype_history() const { return prototypes_; }
  std::optional<std::size_t> budget_elements() const { return budget_; }

  std::vector<VariationalPrototype> prototypes_for_task(int task_id) const;
  std::optional<VariationalPrototype> latest_prototype(int class_id) const;
  std::optional<VariationalPrototype> prototype(int task_id, int class_id) const;
  // Tasks with at least one stored prototype, ascending.
  std::vector<int> tasks() const;
  // Classes with any exemplar or prototype, ascending.
  std::vector<int> classes() const;

  std::size_t exemplar_count() const;
  std::size_t exemplar_elements() const;
  std::size_t latent_dim() const;

  void save(const std::filesystem::path& path) const;
  static EpisodicMemory load(const std::filesystem::path& path);

  // Values compared bitwise.
  bool operator==(const EpisodicMemory& other) const;

 private:
  std::optional<std::size_t> budget_;
  ExemplarMap exemplars_;
  PrototypeMap prototypes_;
};

enum class FootprintMode { ours, baseline_regularizer, baseline_sgd };

struct FootprintReport {
  std::size_t network_params = 0;
  std::size_t regularizer_params = 0;
  std::size_t exemplar_elements = 0;
  // 2 * D per class, counting only the most recent prototype of each class.
  std::size_t prototype_elements = 0;
  // 2 * D for every stored (task, class) entry.
  std::size_t prototype_history_elements = 0;
  std::size_t total = 0;
};

// Counts in stored reals. `network` is the encoder (ours) or the baseline
// classifier. Weights only; biases are not counted.
FootprintReport memory_footprint(const NetworkSpec& network, const EpisodicMemory& memory, FootprintMode mode);

}  // namespace vpr
