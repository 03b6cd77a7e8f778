#include "vpr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>

#include "batching.hpp"

namespace vpr {

namespace {

template <typename E>
struct NamedValue {
  std::string_view name;
  E value;
};

constexpr NamedValue<ReplayOrder> kReplayOrders[] = {
    {"forward", ReplayOrder::forward}, {"backward", ReplayOrder::backward}, {"current_only", ReplayOrder::current_only}};
constexpr NamedValue<RecallMode> kRecallModes[] = {{"mean_and_var", RecallMode::mean_and_var},
                                                   {"mean_only", RecallMode::mean_only},
                                                   {"var_only", RecallMode::var_only}};
constexpr NamedValue<OldPrototypeSource> kOldSources[] = {{"previous_task", OldPrototypeSource::previous_task},
                                                          {"all_previous", OldPrototypeSource::all_previous}};
constexpr NamedValue<EvalPrototypes> kEvalPrototypes[] = {{"latest", EvalPrototypes::latest},
                                                          {"introduction", EvalPrototypes::introduction}};

template <typename E, std::size_t N>
std::optional<E> parse_named(const NamedValue<E> (&table)[N], std::string_view name) {
  for (const auto& entry : table) {
    if (entry.name == name) return entry.value;
  }
  return std::nullopt;
}

template <typename E, std::size_t N>
std::string_view name_of(const NamedValue<E> (&table)[N], E value) {
  for (const auto& entry : table) {
    if (entry.value == value) return entry.name;
  }
  return "?";
}

// Copy whose parameters are constants, so forward passes record no graph.
EncoderParams constant_copy(const EncoderParams& params) {
  auto copy = params.clone();
  for (auto& t : copy.parameters()) t = t.detach();
  return copy;
}

std::vector<bool> mask(std::size_t unweighted, std::size_t weighted) {
  std::vector<bool> m(unweighted, false);
  m.resize(unweighted + weighted, true);
  return m;
}

// std::vector<bool> has no contiguous storage to view as a span.
Tensor classification_with_mask(const VariationalEmbedding& queries, std::span<const int> labels,
                                std::span<const VariationalPrototype> prototypes, const SamplingConfig& cfg,
                                NoiseStream& noise, const std::vector<bool>& weighted) {
  auto flags = std::make_unique<bool[]>(weighted.size());
  std::copy(weighted.begin(), weighted.end(), flags.get());
  return classification_loss(queries, labels, prototypes, cfg, noise,
                             std::span<const bool>(flags.get(), weighted.size()));
}

}  // namespace

std::optional<ReplayOrder> parse_replay_order(std::string_view name) { return parse_named(kReplayOrders, name); }
std::optional<RecallMode> parse_recall_mode(std::string_view name) { return parse_named(kRecallModes, name); }
std::optional<OldPrototypeSource> parse_old_prototype_source(std::string_view name) {
  return parse_named(kOldSources, name);
}
std::optional<EvalPrototypes> parse_eval_prototypes(std::string_view name) {
  return parse_named(kEvalPrototypes, name);
}
std::string_view to_string(ReplayOrder v) { return name_of(kReplayOrders, v); }
std::string_view to_string(RecallMode v) { return name_of(kRecallModes, v); }
std::string_view to_string(OldPrototypeSource v) { return name_of(kOldSources, v); }
std::string_view to_string(EvalPrototypes v) { return name_of(kEvalPrototypes, v); }

void TrainerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (epochs_per_task < 1) throw std::invalid_argument("epochs_per_task must be at least 1");
  if (batch_per_class < 2) throw std::invalid_argument("batch_per_class must be at least 2 (support + query)");
  if (!(support_fraction > 0.0 && support_fraction < 1.0)) {
    throw std::invalid_argument("support_fraction must lie in (0, 1)");
  }
  if (!(replay_weight >= 0.0)) throw std::invalid_argument("replay_weight must be non-negative");
  if (!memory_budget && exemplars_per_class < 1) throw std::invalid_argument("exemplars_per_class must be at least 1");
  sampling.validate();
}

TrainingState TrainingState::create(EncoderParams encoder, const TrainerConfig& cfg, ProtocolKind kind) {
  if (cfg.sampling.latent_dim != 0 && encoder.latent_dim() != cfg.sampling.latent_dim) {
    throw std::invalid_argument("encoder latent dimension " + std::to_string(encoder.latent_dim()) +
                                " != configured D " + std::to_string(cfg.sampling.latent_dim));
  }
  // Parameters are shared handles; training must not reach the caller's.
  return TrainingState{encoder.clone(),
                       EpisodicMemory(cfg.memory_budget),
                       0,
                       kind,
                       {},
                       {},
                       {},
                       Rng::derive(cfg.seed, "batches"),
                       Rng::derive(cfg.seed, "memory"),
                       NoiseStream(Rng::derive(cfg.seed, "noise").engine()())};
}

std::pair<std::vector<Image>, std::vector<Image>> split_support_query(std::span<const Image> class_batch,
                                                                      double support_fraction, Rng& rng) {
  const auto n = class_batch.size();
  if (n < 2) {
    throw std::invalid_argument("split_support_query: a class batch of " + std::to_string(n) +
                                " image(s) cannot be split into support and query");
  }
  if (!(support_fraction > 0.0 && support_fraction < 1.0)) {
    throw std::invalid_argument("split_support_query: support_fraction must lie in (0, 1)");
  }
  auto n_support = static_cast<std::size_t>(std::floor(support_fraction * static_cast<double>(n)));
  n_support = std::clamp<std::size_t>(n_support, 1, n - 1);
  const auto order = rng.permutation(n);
  std::pair<std::vector<Image>, std::vector<Image>> out;
  for (std::size_t k = 0; k < n; ++k) (k < n_support ? out.first : out.second).push_back(class_batch[order[k]]);
  return out;
}

void sgd_step(std::span<Tensor> params, double learning_rate) {
  for (auto& p : params) {
    if (!p.has_grad()) throw std::logic_error("sgd_step: parameter without gradient; run backward first");
  }
  for (auto& p : params) {
    auto w = p.mutable_data();
    const auto g = p.grad();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= learning_rate * g[i];
    p.zero_grad();
  }
}

void sgd_step(EncoderParams& params, double learning_rate) { sgd_step(params.parameters(), learning_rate); }

TaskLog train_task(TrainingState& state, const TaskData& task, const TrainerConfig& cfg) {
  cfg.validate();
  const int t_now = task.task_id;
  if (t_now <= state.current_task) {
    throw std::invalid_argument("task " + std::to_string(t_now) + " does not follow task " +
                                std::to_string(state.current_task));
  }
  if (state.kind == ProtocolKind::incremental_class) {
    for (int c : task.class_ids) {
      if (state.classes_seen.count(c)) {
        throw std::invalid_argument("class " + std::to_string(c) + " was already introduced; incremental-class tasks "
                                    "must bring new classes");
      }
    }
  }
  std::map<int, std::vector<const Image*>> by_class;
  for (int c : task.class_ids) by_class[c];
  for (const auto& im : task.train) {
    auto it = by_class.find(im.label);
    if (it == by_class.end()) {
      throw std::invalid_argument("train image label " + std::to_string(im.label) + " is not a class of task " +
                                  std::to_string(t_now));
    }
    it->second.push_back(&im);
  }
  for (const auto& [cls, images] : by_class) {
    if (images.size() < 2) {
      throw std::invalid_argument("class " + std::to_string(cls) + " in task " + std::to_string(t_now) + " has " +
                                  std::to_string(images.size()) + " train image(s); need 2 for support and query");
    }
  }

  TaskLog log;
  log.task_id = t_now;
  const auto& sampling = cfg.sampling;
  auto replay_sampling = sampling;
  if (cfg.recall == RecallMode::mean_only) replay_sampling.weighted = false;

  // Earlier tasks in replay order, and which exemplars each may replay. The
  // (t, c) prototype came from task t's data when c was introduced in t, and
  // then only task-t exemplars replay against it; otherwise it was rebuilt
  // from exemplars and any exemplar of c no newer than t replays.
  std::vector<int> earlier = state.memory.tasks();
  switch (cfg.replay_order) {
    case ReplayOrder::forward:
      break;
    case ReplayOrder::backward:
      std::reverse(earlier.begin(), earlier.end());
      break;
    case ReplayOrder::current_only:
      if (earlier.size() > 1) earlier = {earlier.back()};
      break;
  }
  std::vector<Image> exemplars;
  for (const auto& [cls, images] : state.memory.exemplars()) exemplars.insert(exemplars.end(), images.begin(), images.end());
  std::vector<int> exemplar_labels;
  for (const auto& im : exemplars) exemplar_labels.push_back(im.label);
  std::map<int, std::vector<std::size_t>> replay_rows;
  for (int t : earlier) {
    for (std::size_t i = 0; i < exemplars.size(); ++i) {
      const auto& im = exemplars[i];
      if (!state.memory.prototype(t, im.label)) continue;
      const bool from_data = state.introduced.at(im.label) == t;
      if (from_data ? im.task == t : im.task <= t) replay_rows[t].push_back(i);
    }
  }
  const bool replay = cfg.replay_weight > 0.0 && !replay_rows.empty();

  // Stored prototypes in the posterior. Classes seen before this task are
  // classified against them instead of online support prototypes, which in
  // the domain protocol means every class after task 1.
  std::vector<std::vector<VariationalPrototype>> old_sets;
  if (state.current_task > 0) {
    if (cfg.old_prototypes == OldPrototypeSource::previous_task) {
      old_sets.push_back(state.memory.prototypes_for_task(state.current_task));
    } else {
      for (int t : state.memory.tasks()) old_sets.push_back(state.memory.prototypes_for_task(t));
    }
  }

  for (std::size_t epoch = 0; epoch < cfg.epochs_per_task; ++epoch) {
    for (const auto& batch : detail::epoch_batches(by_class, cfg.batch_per_class, state.batch_rng)) {
      std::vector<Image> support, query;
      std::vector<std::size_t> support_counts;
      std::vector<int> query_labels;
      for (const auto& [cls, images] : batch) {
        if (state.classes_seen.count(cls)) {
          support_counts.push_back(0);
          for (const auto& im : images) query_labels.push_back(im.label);
          query.insert(query.end(), images.begin(), images.end());
          continue;
        }
        auto [s, q] = split_support_query(images, cfg.support_fraction, state.batch_rng);
        support_counts.push_back(s.size());
        support.insert(support.end(), s.begin(), s.end());
        for (const auto& im : q) query_labels.push_back(im.label);
        query.insert(query.end(), q.begin(), q.end());
      }
      std::vector<VariationalPrototype> online;
      const auto support_emb = support.empty() ? VariationalEmbedding{} : encode_batch(state.encoder, support);
      std::size_t offset = 0, k = 0;
      for (const auto& [cls, images] : batch) {
        if (support_counts[k] == 0) {
          ++k;
          continue;
        }
        std::vector<std::size_t> rows(support_counts[k]);
        for (std::size_t r = 0; r < rows.size(); ++r) rows[r] = offset + r;
        online.push_back(compute_prototype(support_emb.rows(rows), t_now, cls));
        offset += support_counts[k++];
      }
      const auto query_emb = encode_batch(state.encoder, query);

      Tensor loss;
      if (old_sets.empty()) {
        loss = classification_loss(query_emb, query_labels, online, sampling, state.noise);
      } else {
        for (const auto& old : old_sets) {
          auto protos = online;
          protos.insert(protos.end(), old.begin(), old.end());
          const auto term =
              classification_with_mask(query_emb, query_labels, protos, sampling, state.noise, mask(online.size(), old.size()));
          loss = loss.defined() ? loss + term : term;
        }
        if (old_sets.size() > 1) loss = scale(loss, 1.0 / static_cast<double>(old_sets.size()));
      }
      log.classification_losses.push_back(loss.item());

      std::vector<int> visited;
      if (replay) {
        const auto all = encode_batch(state.encoder, exemplars);
        for (int t : earlier) {
          auto it = replay_rows.find(t);
          if (it == replay_rows.end()) continue;
          const auto emb = all.rows(it->second);
          std::vector<int> labels;
          for (auto i : it->second) labels.push_back(exemplar_labels[i]);
          const auto stored = state.memory.prototypes_for_task(t);
          const Tensor term = cfg.recall == RecallMode::var_only
                                  ? variance_recall_loss(emb, labels, stored)
                                  : replay_loss(emb, labels, stored, replay_sampling, state.noise);
          loss = loss + scale(term, cfg.replay_weight);
          visited.push_back(t);
        }
      }
      log.replayed_tasks.push_back(std::move(visited));
      log.batch_losses.push_back(loss.item());
      backward(loss);
      sgd_step(state.encoder, cfg.learning_rate);
    }
  }

  // Task end: prototypes for classes new in this task from all their
  // training data, for earlier classes from stored exemplars, all under
  // task t_now. In the domain protocol every class is earlier after task 1.
  const auto frozen = constant_copy(state.encoder);
  std::vector<VariationalPrototype> fresh;
  for (const auto& [cls, images] : by_class) {
    if (state.classes_seen.count(cls)) continue;
    std::vector<Image> all;
    for (const auto* im : images) all.push_back(*im);
    fresh.push_back(compute_prototype(encode_batch(frozen, all), t_now, cls).detached());
  }
  for (int c : state.classes_seen) {
    auto it = state.memory.exemplars().find(c);
    if (it == state.memory.exemplars().end() || it->second.empty()) {
      throw std::logic_error("class " + std::to_string(c) + " has no stored exemplar to rebuild its prototype");
    }
    fresh.push_back(compute_prototype(encode_batch(frozen, it->second), t_now, c).detached());
  }
  std::sort(fresh.begin(), fresh.end(), [](const auto& a, const auto& b) { return a.class_id < b.class_id; });
  state.memory.store_prototypes(fresh);

  EpisodicMemory::ExemplarMap incoming;
  for (const auto& [cls, images] : by_class) {
    auto& slot = incoming[cls];
    for (const auto* im : images) slot.push_back(*im);
  }
  auto seen_after = state.classes_seen;
  for (int c : task.class_ids) seen_after.insert(c);
  const auto quota = cfg.memory_budget
                         ? state.memory.quota_for(seen_after.size(), task.train.front().pixels.size())
                         : cfg.exemplars_per_class;
  state.memory.store_exemplars(incoming, quota, state.memory_rng);

  for (int c : task.class_ids) state.introduced.emplace(c, t_now);
  state.classes_seen = std::move(seen_after);
  state.task_classes[t_now] = task.class_ids;
  state.current_task = t_now;
  return log;
}

EvalResult evaluate(const TrainingState& state, std::span<const Image> test, const TrainerConfig& cfg) {
  if (test.empty()) throw std::invalid_argument("evaluate: empty test set");
  struct Entry {
    int class_id;
    VariationalPrototype proto;
    bool weighted;
  };
  std::set<int> test_labels;
  for (const auto& im : test) test_labels.insert(im.label);
  std::vector<Entry> entries;
  for (int c : state.classes_seen) {
    if (cfg.eval_test_classes_only && !test_labels.count(c)) continue;
    const int intro = state.introduced.at(c);
    auto p = cfg.eval_prototypes == EvalPrototypes::latest ? state.memory.latest_prototype(c)
                                                           : state.memory.prototype(intro, c);
    if (!p) throw std::logic_error("evaluate: class " + std::to_string(c) + " has no stored prototype");
    entries.push_back({c, *p, cfg.sampling.weighted && intro < state.current_task});
  }
  std::map<int, std::size_t> column;
  for (std::size_t i = 0; i < entries.size(); ++i) column[entries[i].class_id] = i;
  for (const auto& im : test) {
    if (!column.count(im.label)) {
      throw std::invalid_argument("evaluate: test label " + std::to_string(im.label) + " has not been trained");
    }
  }

  const auto encoder = constant_copy(state.encoder);
  const auto d = encoder.latent_dim();
  EvalResult result;
  result.predictions.reserve(test.size());
  constexpr std::size_t kChunk = 256;
  auto noise = NoiseStream(Rng::derive(cfg.seed, "eval-noise").engine()());

  for (std::size_t start = 0; start < test.size(); start += kChunk) {
    const auto chunk = test.subspan(start, std::min(kChunk, test.size() - start));
    const auto emb = encode_batch(encoder, chunk);
    const auto means = emb.mean.data();
    if (!cfg.stochastic_eval) {
      for (std::size_t i = 0; i < chunk.size(); ++i) {
        const std::span<const double> q(means.data() + i * d, d);
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (const auto& e : entries) {  // ascending class id, so strict < keeps the lowest on ties
          const auto lv = e.weighted ? e.proto.logvar.data() : std::span<const double>{};
          const double dist = weighted_distance(q, e.proto.mean.data(), lv);
          if (dist < best_d) {
            best_d = dist;
            best = e.class_id;
          }
        }
        result.predictions.push_back(best);
      }
    } else {
      // Average the Z-sample posterior per image, then take the argmax.
      std::vector<LatentSamples> proto_samples;
      std::vector<Tensor> weights;
      for (const auto& e : entries) {
        proto_samples.push_back(sample_latent(e.proto, noise, cfg.sampling.samples));
        weights.push_back(e.weighted ? e.proto.logvar : Tensor{});
      }
      const auto q = sample_latent(emb, noise, cfg.sampling.samples);
      const auto post = class_posterior(q, proto_samples, weights, cfg.sampling).data();
      const auto z = cfg.sampling.samples;
      const auto ncls = entries.size();
      for (std::size_t i = 0; i < chunk.size(); ++i) {
        std::size_t best = 0;
        double best_p = -1.0;
        for (std::size_t c = 0; c < ncls; ++c) {
          double p = 0.0;
          for (std::size_t s = 0; s < z; ++s) p += post[(i * z + s) * ncls + c];
          if (p > best_p) {
            best_p = p;
            best = c;
          }
        }
        result.predictions.push_back(entries[best].class_id);
      }
    }
  }

  std::map<int, std::pair<std::size_t, std::size_t>> tally;  // correct, total
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const bool hit = result.predictions[i] == test[i].label;
    correct += hit;
    auto& t = tally[test[i].label];
    t.first += hit;
    ++t.second;
  }
  result.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
  for (const auto& [cls, t] : tally) result.per_class[cls] = static_cast<double>(t.first) / static_cast<double>(t.second);
  return result;
}

RunResult run_protocol(const Dataset& dataset, const ProtocolSchedule& schedule, EncoderParams encoder,
                       const TrainerConfig& cfg, const TaskEndHook& on_task_end) {
  cfg.validate();
  schedule.validate();
  RunResult run{AccuracyMatrix(schedule.tasks.size()), {}, {}, TrainingState::create(std::move(encoder), cfg, schedule.kind)};
  std::vector<TaskData> tasks;
  for (std::size_t i = 0; i < schedule.tasks.size(); ++i) tasks.push_back(materialize_task(dataset, schedule, i, cfg.seed));

  for (std::size_t i = 0; i < tasks.size(); ++i) {
    run.logs.push_back(train_task(run.state, tasks[i], cfg));
    for (const auto& p : run.state.memory.prototypes_for_task(tasks[i].task_id)) {
      auto mean = p.mean.data();
      run.history.add({p.task_id, p.class_id, {mean.begin(), mean.end()}});
    }
    for (std::size_t j = 0; j <= i; ++j) run.accuracy.set(i, j, evaluate(run.state, tasks[j].test, cfg).accuracy);
    if (on_task_end) on_task_end(run.state, tasks[i], i);
  }
  return run;
}

}  // namespace vpr
