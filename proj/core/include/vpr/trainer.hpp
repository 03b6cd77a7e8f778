#pragma once

// Per-task training with prototype replay, nearest-prototype evaluation,
// and the softmax baselines.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "vpr/analysis.hpp"
#include "vpr/data.hpp"
#include "vpr/encoder.hpp"
#include "vpr/memory.hpp"
#include "vpr/proto.hpp"
#include "vpr/rng.hpp"

namespace vpr {

// Order in which earlier tasks' stored prototypes are replayed.
enum class ReplayOrder { forward, backward, current_only };
// What a replayed exemplar is asked to recall.
//   mean_and_var  distance softmax against stored prototypes, variance-weighted
//   mean_only     same softmax with the variance weights switched off
//   var_only      squared error between predicted and stored log-variances
enum class RecallMode { mean_and_var, mean_only, var_only };
// Old-class prototypes placed in the posterior of new-class queries:
//   previous_task  those stored at task T-1
//   all_previous   one loss term per earlier task t, each using task t's
//                  stored prototypes, averaged over t
enum class OldPrototypeSource { previous_task, all_previous };
// Prototype each class is evaluated against:
//   latest        the most recent stored prototype
//   introduction  the prototype stored when the class was first trained
enum class EvalPrototypes { latest, introduction };

std::optional<ReplayOrder> parse_replay_order(std::string_view name);
std::optional<RecallMode> parse_recall_mode(std::string_view name);
std::optional<OldPrototypeSource> parse_old_prototype_source(std::string_view name);
std::optional<EvalPrototypes> parse_eval_prototypes(std::string_view name);
std::string_view to_string(ReplayOrder v);
std::string_view to_string(RecallMode v);
std::string_view to_string(OldPrototypeSource v);
std::string_view to_string(EvalPrototypes v);

struct TrainerConfig {
  double learning_rate = 0.01;
  std::size_t epochs_per_task = 20;
  // Images drawn per class for one batch, split into support and query.
  std::size_t batch_per_class = 10;
  double support_fraction = 0.5;
  // sampling.weighted = false is the unweighted-distance ablation.
  SamplingConfig sampling;
  double replay_weight = 1.0;  // lambda
  std::uint64_t seed = 0;
  ReplayOrder replay_order = ReplayOrder::forward;
  RecallMode recall = RecallMode::mean_and_var;
  OldPrototypeSource old_prototypes = OldPrototypeSource::previous_task;
  std::size_t exemplars_per_class = 1;
  // Exemplar budget in stored reals; replaces exemplars_per_class when set.
  std::optional<std::size_t> memory_budget;
  bool stochastic_eval = false;
  EvalPrototypes eval_prototypes = EvalPrototypes::latest;
  // Only classes present in the test set compete in evaluation.
  bool eval_test_classes_only = false;

  void validate() const;
};

struct TrainingState {
  EncoderParams encoder;
  EpisodicMemory memory;
  int current_task = 0;  // last completed task, 0 before training
  ProtocolKind kind = ProtocolKind::incremental_class;
  std::set<int> classes_seen;
  std::map<int, int> introduced;               // class -> first task
  std::map<int, std::vector<int>> task_classes;  // task -> trained classes
  Rng batch_rng;
  Rng memory_rng;
  NoiseStream noise;

  static TrainingState create(EncoderParams encoder, const TrainerConfig& cfg,
                              ProtocolKind kind = ProtocolKind::incremental_class);
};

struct TaskLog {
  int task_id = 0;
  std::vector<double> batch_losses;
  std::vector<double> classification_losses;
  // Earlier tasks replayed in each batch, in replay order.
  std::vector<std::vector<int>> replayed_tasks;
};

// Floor of fraction * n support images, at least one in each part.
std::pair<std::vector<Image>, std::vector<Image>> split_support_query(std::span<const Image> class_batch,
                                                                      double support_fraction, Rng& rng);

// w <- w - lr * grad, then clears gradients. Throws if any gradient is
// missing.
void sgd_step(std::span<Tensor> params, double learning_rate);
void sgd_step(EncoderParams& params, double learning_rate);

// Trains one task, then stores its prototypes and exemplars. Queries of
// classes seen before this task compete against stored prototypes rather
// than online ones. At task end, new classes get prototypes from all their
// training data and earlier classes are re-stored from their exemplars.
TaskLog train_task(TrainingState& state, const TaskData& task, const TrainerConfig& cfg);

struct EvalResult {
  double accuracy = 0.0;
  std::map<int, double> per_class;
  std::vector<int> predictions;
};

// Nearest prototype per test image. Distances to classes introduced before
// the latest task are weighted by the stored log-variance when
// cfg.sampling.weighted. Ties go to the lowest class id.
EvalResult evaluate(const TrainingState& state, std::span<const Image> test, const TrainerConfig& cfg);

struct RunResult {
  AccuracyMatrix accuracy;
  PrototypeHistoryLog history;
  std::vector<TaskLog> logs;
  TrainingState state;
};

using TaskEndHook = std::function<void(const TrainingState&, const TaskData&, std::size_t task_index)>;

RunResult run_protocol(const Dataset& dataset, const ProtocolSchedule& schedule, EncoderParams encoder,
                       const TrainerConfig& cfg, const TaskEndHook& on_task_end = {});

enum class BaselineKind { sgd_naive, l2 };
std::optional<BaselineKind> parse_baseline_kind(std::string_view name);

struct BaselineConfig {
  BaselineKind kind = BaselineKind::sgd_naive;
  double l2_weight = 0.0;
};

struct BaselineResult {
  AccuracyMatrix accuracy;
  BaselineClassifier classifier;
  std::vector<std::size_t> parameter_counts;  // after each task
};

// Softmax classifier fine-tuned task by task. Incremental-class protocols
// grow the head to the classes seen so far. The l2 kind anchors every
// parameter present at the previous task's end; the quadratic term is
// applied as an exact proximal step after each gradient step.
BaselineResult train_baseline(const Dataset& dataset, const ProtocolSchedule& schedule, const EncoderParams& encoder,
                              const TrainerConfig& cfg, const BaselineConfig& baseline);

}  // namespace vpr
