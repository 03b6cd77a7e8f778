#pragma once

// Datasets and task protocols.
//
// IDX files (big-endian):
//   images: u32 magic 0x00000803, u32 count, u32 rows, u32 cols, count*rows*cols u8
//   labels: u32 magic 0x00000801, u32 count, count u8
//
// Dataset CSV: header "label,p0,p1,...", one row per image.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "vpr/image.hpp"

namespace vpr {

struct Dataset {
  std::vector<Image> train;
  std::vector<Image> test;
  std::size_t num_classes = 0;
  InputShape shape;

  // Labels in [0, num_classes), each class present in train and in test,
  // uniform shapes, pixels in [0, 1].
  void validate() const;
};

// All images go to `train`; pair with holdout() or a second file pair.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);
// Train and test from separate file pairs.
Dataset load_idx(const std::filesystem::path& train_images, const std::filesystem::path& train_labels,
                 const std::filesystem::path& test_images, const std::filesystem::path& test_labels);
// Single-channel images only; pixels are stored as round(255 * p).
void write_idx(std::span<const Image> images, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);

// Move `per_class_test` random train images of every class to test.
Dataset holdout(Dataset dataset, std::size_t per_class_test, std::uint64_t seed);

// Class c is drawn from N(separation * u_c, noise^2 I) with unit directions
// u_c (orthonormal when num_classes <= dimension), then mapped affinely to
// pixels: clamp(0.5 + x / (2 * (separation * peak + 4 * noise)), 0, 1),
// where peak is the largest |u_c[i]| over all classes and coordinates.
Dataset synthetic_blobs(std::size_t num_classes, InputShape shape, std::size_t per_class_train,
                        std::size_t per_class_test, double separation, std::uint64_t seed, double noise = 1.0);
Dataset synthetic_blobs(std::size_t num_classes, std::size_t dim, std::size_t per_class_train,
                        std::size_t per_class_test, double separation, std::uint64_t seed, double noise = 1.0);

void export_csv(std::span<const Image> images, const std::filesystem::path& path);
std::vector<Image> import_csv(const std::filesystem::path& path, InputShape shape);

// Fraction of `test` classified correctly by the nearest class mean of
// `train`, computed on raw pixels.
double nearest_class_mean_accuracy(std::span<const Image> train, std::span<const Image> test);

enum class ProtocolKind { incremental_domain, incremental_class };

struct TaskSpec {
  int task_id = 1;
  std::vector<int> class_ids;
  // Train images per class; 0 keeps all. Subsampled without replacement.
  std::size_t train_quota = 0;
  // Pixel permutation over h*w positions, shared by all channels:
  // out[c, i] = in[c, permutation[i]].
  std::optional<std::vector<std::size_t>> permutation;
};

struct ProtocolSchedule {
  ProtocolKind kind = ProtocolKind::incremental_class;
  std::vector<TaskSpec> tasks;

  // Disjoint class sets (class), identical class sets (domain).
  void validate() const;
};

// Task 1 is the identity; tasks 2.. each get an independent permutation.
ProtocolSchedule permuted_protocol(const Dataset& base, std::size_t num_tasks, std::uint64_t seed,
                                   std::size_t train_quota = 0);

enum class SplitKind { cifar_like, imagenet_like, custom };

struct SplitOptions {
  SplitKind kind = SplitKind::cifar_like;
  // Classes per task, custom schedules only.
  std::vector<std::size_t> classes_per_task;
  // Per-class train quotas; nullopt selects the kind default
  // (cifar_like 10 and 10, imagenet_like 480 and 10, custom all and all).
  std::optional<std::size_t> first_task_quota;
  std::optional<std::size_t> quota;
  bool shuffle_classes = false;
};

// cifar_like: 2 classes then one more per task until classes run out.
// imagenet_like: 10 tasks of 10 classes.
ProtocolSchedule split_protocol(const Dataset& base, const SplitOptions& options, std::uint64_t seed);

std::optional<ProtocolKind> parse_protocol_kind(std::string_view name);
std::optional<SplitKind> parse_split_kind(std::string_view name);

Image apply_permutation(const Image& image, std::span<const std::size_t> permutation);
std::vector<std::size_t> invert_permutation(std::span<const std::size_t> permutation);
bool is_permutation(std::span<const std::size_t> indices);

// Train and test images of one task with its transform applied and
// Image::task set to the task id. Test covers the task's classes only.
struct TaskData {
  int task_id = 1;
  std::vector<int> class_ids;
  std::vector<Image> train;
  std::vector<Image> test;
};

TaskData materialize_task(const Dataset& dataset, const ProtocolSchedule& schedule, std::size_t task_index,
                          std::uint64_t seed);

}  // namespace vpr
