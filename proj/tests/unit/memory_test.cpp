#include <fstream>
#include <stdexcept>
#include <vector>

#include <doctest.h>

#include "vpr/memory.hpp"
#include "vpr_test_support.hpp"

using namespace vpr;
using vpr::testing::TempDir;

namespace {

std::vector<Image> images_of(int cls, std::size_t n, InputShape shape = {1, 2, 2}) {
  std::vector<Image> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({shape, std::vector<double>(shape.size(), 0.01 * static_cast<double>(i)), cls, 1, static_cast<int>(i)});
  }
  return out;
}

VariationalPrototype proto(int task, int cls, std::size_t d = 3) {
  std::vector<double> m(d), lv(d);
  for (std::size_t i = 0; i < d; ++i) {
    m[i] = task + 0.1 * cls + 0.01 * static_cast<double>(i);
    lv[i] = -0.5 * static_cast<double>(i);
  }
  return {task, cls, Tensor::row(m), Tensor::row(lv)};
}

}  // namespace

TEST_CASE("store_exemplars keeps the quota or everything available") {
  EpisodicMemory mem;
  Rng rng(1);
  mem.store_exemplars({{0, images_of(0, 10)}}, 1, rng);
  CHECK(mem.exemplars().at(0).size() == 1);

  mem.store_exemplars({{1, images_of(1, 2)}}, 3, rng);
  CHECK(mem.exemplars().at(1).size() == 2);
  CHECK(mem.exemplar_count() == 3);
  CHECK(mem.exemplar_elements() == 12);
}

TEST_CASE("store_exemplars is reproducible under a fixed seed") {
  EpisodicMemory a, b;
  Rng ra(42), rb(42);
  a.store_exemplars({{0, images_of(0, 20)}, {1, images_of(1, 20)}}, 4, ra);
  b.store_exemplars({{0, images_of(0, 20)}, {1, images_of(1, 20)}}, 4, rb);
  CHECK(a == b);
}

TEST_CASE("store_prototypes inserts under (task, class) and rejects duplicates") {
  EpisodicMemory mem;
  const std::vector<VariationalPrototype> task1{proto(1, 0), proto(1, 1)};
  mem.store_prototypes(task1);
  CHECK(mem.prototype_history().size() == 2);

  const std::vector<VariationalPrototype> task2{proto(2, 0), proto(2, 1), proto(2, 2)};
  mem.store_prototypes(task2);
  CHECK(mem.prototype_history().size() == 5);
  CHECK(mem.prototype(1, 0)->mean.to_vector() == proto(1, 0).mean.to_vector());
  CHECK(mem.latest_prototype(0)->task_id == 2);
  CHECK(mem.tasks() == std::vector<int>{1, 2});
  CHECK(mem.prototypes_for_task(2).size() == 3);

  const std::vector<VariationalPrototype> again{proto(1, 0)};
  CHECK_THROWS_AS(mem.store_prototypes(again), std::invalid_argument);
  CHECK(mem.prototype_history().size() == 5);
}

TEST_CASE("rebalance applies the floor quota and keeps at least one per class") {
  EpisodicMemory mem(20 * 4);  // 20 images of 4 reals
  Rng rng(3);
  mem.store_exemplars({{0, images_of(0, 15)}, {1, images_of(1, 15)}}, 15, rng);
  CHECK(mem.exemplars().at(0).size() == 10);
  CHECK(mem.exemplars().at(1).size() == 10);

  for (int c = 2; c < 10; ++c) mem.store_exemplars({{c, images_of(c, 15)}}, 15, rng);
  for (const auto& [cls, list] : mem.exemplars()) CHECK(list.size() == 2);
  CHECK(mem.exemplar_elements() <= 80);

  EpisodicMemory tiny(3);
  CHECK_THROWS_AS(tiny.store_exemplars({{0, images_of(0, 2)}}, 1, rng), std::invalid_argument);
  CHECK(mem.quota_for(20, 4) == 1);
  CHECK_THROWS_AS(mem.quota_for(21, 4), std::invalid_argument);
}

TEST_CASE("rebalance with equal seeds evicts identically") {
  auto build = [] {
    EpisodicMemory mem(12 * 4);
    Rng rng(8);
    mem.store_exemplars({{0, images_of(0, 12)}}, 12, rng);
    mem.store_exemplars({{1, images_of(1, 12)}, {2, images_of(2, 12)}}, 12, rng);
    return mem;
  };
  CHECK(build() == build());
}

TEST_CASE("footprint reproduces the reference figures") {
  const auto cifar = reference_architecture(Architecture::cifar_like_32);
  const auto enc = EncoderParams::initialize(cifar, 500, 1);
  const auto baseline = baseline_head(enc, 10, 1).spec();

  const EpisodicMemory empty;
  CHECK(memory_footprint(baseline, empty, FootprintMode::baseline_sgd).total == 1'631'500);
  const auto reg = memory_footprint(baseline, empty, FootprintMode::baseline_regularizer);
  CHECK(reg.regularizer_params == 1'631'500);
  CHECK(reg.total == 3'263'000);
  CHECK(memory_footprint(cifar, empty, FootprintMode::ours).total == 2'126'500);

  EpisodicMemory mem;
  Rng rng(1);
  std::vector<VariationalPrototype> protos;
  for (int c = 0; c < 10; ++c) {
    mem.store_exemplars({{c, images_of(c, 3, {3, 32, 32})}}, 1, rng);
    protos.push_back(proto(1, c, 500));
  }
  mem.store_prototypes(protos);
  const auto ours = memory_footprint(cifar, mem, FootprintMode::ours);
  CHECK(ours.exemplar_elements == 30'720);
  CHECK(ours.prototype_elements == 10'000);
  CHECK(ours.total == 2'167'220);
  CHECK(ours.total == ours.network_params + ours.exemplar_elements + ours.prototype_elements);
}

TEST_CASE("footprint reports the full prototype history separately") {
  const auto net = reference_architecture(Architecture::synthetic_vector, {.latent_dim = 4, .input_dim = 4});
  EpisodicMemory mem;
  const std::vector<VariationalPrototype> t1{proto(1, 0, 4), proto(1, 1, 4)};
  const std::vector<VariationalPrototype> t2{proto(2, 0, 4), proto(2, 1, 4), proto(2, 2, 4)};
  mem.store_prototypes(t1);
  mem.store_prototypes(t2);
  const auto r = memory_footprint(net, mem, FootprintMode::ours);
  CHECK(r.prototype_elements == 3 * 8);
  CHECK(r.prototype_history_elements == 5 * 8);
}

TEST_CASE("snapshot save and load is bitwise") {
  TempDir dir("memory");
  EpisodicMemory mem(1000);
  Rng rng(2);
  mem.store_exemplars({{0, images_of(0, 4)}, {3, images_of(3, 4)}}, 2, rng);
  const std::vector<VariationalPrototype> protos{proto(1, 0), proto(1, 3), proto(2, 0)};
  mem.store_prototypes(protos);
  mem.save(dir / "mem.bin");
  const auto back = EpisodicMemory::load(dir / "mem.bin");
  CHECK(back == mem);
  CHECK(back.budget_elements() == std::optional<std::size_t>(1000));

  std::ifstream in(dir / "mem.bin", std::ios::binary);
  char magic[8];
  in.read(magic, 8);
  CHECK(std::string(magic, 7) == "VPRMEM1");
}

TEST_CASE("snapshot load rejects a bad magic") {
  TempDir dir("memory-bad");
  std::ofstream(dir / "bad.bin", std::ios::binary) << "NOTMEM1\0xxxxxxxxxxxxxxxx";
  CHECK_THROWS(EpisodicMemory::load(dir / "bad.bin"));
}
