#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

#include <doctest.h>

#include "vpr/trainer.hpp"
#include "vpr_test_support.hpp"

using namespace vpr;
using namespace vpr::testing;

namespace {

std::vector<Image> numbered(std::size_t n) {
  std::vector<Image> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({{1, 1, 1}, {0.0}, 0, 1, static_cast<int>(i)});
  return out;
}

std::set<int> indices(const std::vector<Image>& images) {
  std::set<int> s;
  for (const auto& im : images) s.insert(im.index);
  return s;
}

// State whose encoder maps every image to the origin, with hand-placed
// task-1 prototypes.
TrainingState origin_state(const std::vector<std::pair<int, std::vector<double>>>& protos, const TrainerConfig& cfg) {
  const auto spec = reference_architecture(Architecture::synthetic_vector, {.latent_dim = 2, .input_dim = 3, .hidden = 4});
  auto enc = EncoderParams::initialize(spec, 2, 1);
  for (auto& t : enc.parameters()) {
    for (auto& v : t.mutable_data()) v = 0.0;
  }
  auto state = TrainingState::create(enc, cfg);
  std::vector<VariationalPrototype> list;
  for (const auto& [cls, mean] : protos) {
    list.push_back({1, cls, Tensor::row(mean), Tensor::row({0.0, 0.0})});
    state.classes_seen.insert(cls);
    state.introduced[cls] = 1;
  }
  state.memory.store_prototypes(list);
  state.current_task = 1;
  return state;
}

}  // namespace

TEST_CASE("split_support_query partitions by the floor rule") {
  Rng rng(1);
  const auto ten = numbered(10);
  auto [s, q] = split_support_query(ten, 0.5, rng);
  CHECK(s.size() == 5);
  CHECK(q.size() == 5);
  auto all = indices(s);
  for (int i : indices(q)) CHECK(all.insert(i).second);
  CHECK(all.size() == 10);

  // Enumerate small sizes: support = max(1, min(n - 1, floor(f * n))).
  for (std::size_t n = 2; n <= 7; ++n) {
    for (double f : {0.1, 0.5, 0.9}) {
      auto [sn, qn] = split_support_query(numbered(n), f, rng);
      const auto want = std::max<std::size_t>(1, std::min<std::size_t>(n - 1, static_cast<std::size_t>(std::floor(f * n))));
      CHECK(sn.size() == want);
      CHECK(qn.size() == n - want);
    }
  }
  auto [s3, q3] = split_support_query(numbered(3), 0.5, rng);
  CHECK(s3.size() == 1);
  CHECK(q3.size() == 2);

  Rng a(9), b(9);
  CHECK(indices(split_support_query(ten, 0.5, a).first) == indices(split_support_query(ten, 0.5, b).first));
  CHECK_THROWS_AS(split_support_query(numbered(1), 0.5, rng), std::invalid_argument);
}

TEST_CASE("sgd_step on the scalar quadratic and degenerate cases") {
  Tensor w = Tensor::row({1.0}, true);
  backward(sum(square(w)));
  Tensor params[] = {w};
  sgd_step(params, 0.1);
  CHECK(w.item() == doctest::Approx(0.8).epsilon(1e-15));
  CHECK_FALSE(w.has_grad());

  backward(sum(scale(w, 0.0)));
  sgd_step(params, 0.1);
  CHECK(w.item() == doctest::Approx(0.8).epsilon(1e-15));

  backward(sum(square(w)));
  sgd_step(params, 0.0);
  CHECK(w.item() == doctest::Approx(0.8).epsilon(1e-15));

  Tensor fresh[] = {Tensor::row({2.0}, true)};
  CHECK_THROWS(sgd_step(fresh, 0.1));
}

TEST_CASE("evaluate predicts the coinciding prototype and breaks ties by lowest id") {
  TrainerConfig cfg;
  cfg.sampling.latent_dim = 2;
  const std::vector<Image> test{{{1, 1, 3}, {0.1, 0.2, 0.3}, 5, 1, 0}};

  const auto exact = origin_state({{2, {1.0, 1.0}}, {5, {0.0, 0.0}}, {9, {-3.0, 0.0}}}, cfg);
  CHECK(evaluate(exact, test, cfg).predictions == std::vector<int>{5});

  const auto tie = origin_state({{3, {1.0, 0.0}}, {5, {-1.0, 0.0}}}, cfg);
  const auto r = evaluate(tie, test, cfg);
  CHECK(r.predictions == std::vector<int>{3});
  CHECK(r.accuracy == 0.0);

  std::vector<Image> unseen = test;
  unseen[0].label = 4;
  CHECK_THROWS_AS(evaluate(tie, unseen, cfg), std::invalid_argument);
}

TEST_CASE("first task trains without replay and second task replays exactly task 1") {
  auto setup = desk_class_setup(2, 8, 4, 3);
  auto state = TrainingState::create(setup.encoder, setup.cfg);
  const auto t1 = materialize_task(setup.dataset, setup.schedule, 0, setup.cfg.seed);
  const auto log1 = train_task(state, t1, setup.cfg);
  CHECK(log1.task_id == 1);
  CHECK_FALSE(log1.batch_losses.empty());
  for (const auto& r : log1.replayed_tasks) CHECK(r.empty());
  CHECK(state.memory.prototype_history().size() == 2);
  CHECK(state.memory.exemplar_count() == 2);

  const auto t2 = materialize_task(setup.dataset, setup.schedule, 1, setup.cfg.seed);
  const auto log2 = train_task(state, t2, setup.cfg);
  for (const auto& r : log2.replayed_tasks) CHECK(r == std::vector<int>{1});
  // Two prototypes from task 1, then the new class plus both old ones re-stored.
  CHECK(state.memory.prototype_history().size() == 5);
  CHECK(state.memory.prototypes_for_task(2).size() == 3);
  CHECK(state.current_task == 2);

  // Repeating a class in the incremental-class protocol is rejected.
  CHECK_THROWS_AS(train_task(state, t1, setup.cfg), std::invalid_argument);
}

TEST_CASE("replay order changes the visiting order only") {
  auto setup = desk_class_setup(3, 8, 4, 2);
  auto replayed = [&](ReplayOrder order) {
    auto cfg = setup.cfg;
    cfg.replay_order = order;
    return run_protocol(setup.dataset, setup.schedule, setup.encoder, cfg).logs.back().replayed_tasks.front();
  };
  CHECK(replayed(ReplayOrder::forward) == std::vector<int>{1, 2, 3});
  CHECK(replayed(ReplayOrder::backward) == std::vector<int>{3, 2, 1});
  CHECK(replayed(ReplayOrder::current_only) == std::vector<int>{3});
}

TEST_CASE("desk-scale task 1 exceeds 0.9 where the raw-input oracle separates the classes") {
  auto setup = desk_class_setup(1);
  const auto t1 = materialize_task(setup.dataset, setup.schedule, 0, setup.cfg.seed);
  REQUIRE(nearest_class_mean_accuracy(t1.train, t1.test) > 0.99);
  auto state = TrainingState::create(setup.encoder, setup.cfg);
  train_task(state, t1, setup.cfg);
  CHECK(evaluate(state, t1.test, setup.cfg).accuracy > 0.9);
}

TEST_CASE("encoder parameter count is constant across tasks") {
  auto setup = desk_class_setup(4, 8, 4, 2);
  std::vector<std::size_t> counts;
  run_protocol(setup.dataset, setup.schedule, setup.encoder, setup.cfg,
               [&](const TrainingState& s, const TaskData&, std::size_t) {
                 std::size_t n = 0;
                 for (const auto& t : s.encoder.parameters()) n += t.numel();
                 counts.push_back(n);
               });
  REQUIRE(counts.size() == 4);
  for (auto c : counts) CHECK(c == counts.front());
}

TEST_CASE("training leaves the caller's encoder untouched") {
  auto setup = desk_class_setup(5, 8, 4, 2);
  const auto before = setup.encoder.parameters()[0].to_vector();
  run_protocol(setup.dataset, setup.schedule, setup.encoder, setup.cfg);
  CHECK(setup.encoder.parameters()[0].to_vector() == before);
}

TEST_CASE("baselines: head grows by hidden width per class and l2 at zero equals sgd") {
  auto setup = desk_class_setup(1, 16, 10, 20);
  const auto sgd = train_baseline(setup.dataset, setup.schedule, setup.encoder, setup.cfg, {BaselineKind::sgd_naive, 0.0});
  REQUIRE(sgd.parameter_counts.size() == 4);
  for (std::size_t i = 1; i < 4; ++i) CHECK(sgd.parameter_counts[i] == sgd.parameter_counts[i - 1] + 64);

  const auto l2_zero = train_baseline(setup.dataset, setup.schedule, setup.encoder, setup.cfg, {BaselineKind::l2, 0.0});
  CHECK(l2_zero.accuracy == sgd.accuracy);
}

TEST_CASE("l2 with a huge weight freezes task-1 accuracy on the permuted protocol") {
  // The head is shared across permuted tasks, so every parameter is anchored.
  const auto ds = synthetic_blobs(4, InputShape{1, 4, 5}, 10, 50, 10.0, 2);
  const auto schedule = permuted_protocol(ds, 3, 2);
  auto cfg = desk_class_setup(2).cfg;
  cfg.epochs_per_task = 100;
  cfg.learning_rate = 0.05;
  const auto spec = reference_architecture(Architecture::synthetic_vector, {.latent_dim = 16, .input_dim = 20, .hidden = 64});
  const auto enc = EncoderParams::initialize(spec, 16, 2);
  const auto frozen = train_baseline(ds, schedule, enc, cfg, {BaselineKind::l2, 1e6});
  CHECK(frozen.accuracy.at(0, 0) > 0.5);
  CHECK(std::abs(frozen.accuracy.at(1, 0) - frozen.accuracy.at(0, 0)) <= 0.02);
  CHECK(std::abs(frozen.accuracy.at(2, 0) - frozen.accuracy.at(0, 0)) <= 0.02);
}

TEST_CASE("config validation and enum names") {
  TrainerConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.learning_rate = -1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.support_fraction = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.sampling.temperature = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  for (auto o : {ReplayOrder::forward, ReplayOrder::backward, ReplayOrder::current_only}) {
    CHECK(parse_replay_order(to_string(o)) == o);
  }
  for (auto r : {RecallMode::mean_and_var, RecallMode::mean_only, RecallMode::var_only}) {
    CHECK(parse_recall_mode(to_string(r)) == r);
  }
  CHECK_FALSE(parse_replay_order("sideways").has_value());
  CHECK(parse_baseline_kind("l2") == BaselineKind::l2);
}
