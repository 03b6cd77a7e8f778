// Acceptance run: one [PASS]/[FAIL] line per criterion, exit status 1 if
// any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "vpr/analysis.hpp"
#include "vpr/gradcheck.hpp"
#include "vpr/memory.hpp"
#include "vpr/trainer.hpp"
#include "vpr_test_support.hpp"

using namespace vpr;
using namespace vpr::testing;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " FAILED(" << what << ")";
    }
  }
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

void criterion_footprint(Verdict& v) {
  const auto cifar = reference_architecture(Architecture::cifar_like_32);
  const auto enc = EncoderParams::initialize(cifar, 500, 1);
  const auto head = baseline_head(enc, 10, 1).spec();
  const EpisodicMemory empty;
  const auto base = memory_footprint(head, empty, FootprintMode::baseline_sgd).total;
  const auto reg = memory_footprint(head, empty, FootprintMode::baseline_regularizer).total;
  const auto net = memory_footprint(cifar, empty, FootprintMode::ours).total;

  EpisodicMemory mem;
  Rng rng(1);
  std::vector<VariationalPrototype> protos;
  for (int c = 0; c < 10; ++c) {
    mem.store_exemplars({{c, {Image{cifar.input, std::vector<double>(cifar.input.size(), 0.5), c, 1, 0}}}}, 1, rng);
    protos.push_back({1, c, Tensor::zeros({1, 500}), Tensor::zeros({1, 500})});
  }
  mem.store_prototypes(protos);
  const auto ours = memory_footprint(cifar, mem, FootprintMode::ours).total;

  v.detail << "baseline " << base << ", regularizer " << reg << ", ours net " << net << ", ours total " << ours;
  v.require(base == 1'631'500, "baseline net");
  v.require(reg == 3'263'000, "regularizer total");
  v.require(net == 2'126'500, "ours net");
  v.require(ours == 2'167'220, "ours total");
}

void criterion_gradients(Verdict& v) {
  const auto start = Clock::now();
  double worst = 0.0;
  std::size_t checks = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    for (const auto& r : run_gradcheck_suite(seed, 1e-4, 1e-5)) {
      worst = std::max(worst, r.max_rel_error);
      ++checks;
      v.require(r.passed, r.name);
    }
  }
  const double t = seconds_since(start);
  v.detail << checks << " checks, max relative error " << worst << ", " << t << " s";
  v.require(worst < 1e-4, "tolerance");
  v.require(t < 30.0, "runtime");
}

void criterion_oracle(Verdict& v) {
  std::mt19937_64 gen(2024);
  std::uniform_int_distribution<std::size_t> cdist(1, 3), zdist(1, 4), ddist(1, 4), qdist(1, 3);
  double worst_loss = 0.0, worst_post = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = random_problem(gen, cdist(gen), zdist(gen), ddist(gen), qdist(gen));
    worst_loss = std::max(worst_loss, std::abs(library_loss(p) - oracle_loss(p)));

    // Posterior of the first query's samples against fixed prototype samples.
    const std::size_t c = p.proto_mean.size();
    std::vector<LatentSamples> classes;
    std::vector<Tensor> weights;
    std::vector<std::vector<std::vector<double>>> per_class(c);
    for (std::size_t k = 0; k < c; ++k) {
      std::vector<std::vector<double>> rows;
      for (std::size_t s = 0; s < p.z; ++s) rows.push_back(uniform_values(p.d, gen, -2, 2));
      per_class[k] = rows;
      classes.push_back({rows_tensor(rows), 1, p.z});
      weights.push_back(p.proto_weighted[k] ? Tensor::row(p.proto_logvar[k]) : Tensor{});
    }
    std::vector<std::vector<double>> qrows;
    for (std::size_t s = 0; s < p.z; ++s) qrows.push_back(uniform_values(p.d, gen, -2, 2));
    const auto got = class_posterior({rows_tensor(qrows), 1, p.z}, classes, weights, {p.z, p.tau, p.d, true}).to_vector();
    for (std::size_t s = 0; s < p.z; ++s) {
      std::vector<std::vector<double>> paired, lv;
      for (std::size_t k = 0; k < c; ++k) {
        paired.push_back(per_class[k][s]);
        lv.push_back(p.proto_weighted[k] ? p.proto_logvar[k] : std::vector<double>{});
      }
      const auto want = oracle_posterior(qrows[s], paired, lv, p.tau);
      for (std::size_t k = 0; k < c; ++k) worst_post = std::max(worst_post, std::abs(got[s * c + k] - want[k]));
    }
  }
  v.detail << "100 instances, max |loss diff| " << worst_loss << ", max |posterior diff| " << worst_post;
  v.require(worst_loss <= 1e-12, "loss");
  v.require(worst_post <= 1e-12, "posterior");
}

// Task-1 retention measured against the prototypes stored when task 1 was
// trained, competing only among task-1 classes.
double frozen_task1_retention(const TrainingState& state, const TaskData& task1, TrainerConfig cfg) {
  cfg.eval_prototypes = EvalPrototypes::introduction;
  cfg.eval_test_classes_only = true;
  return evaluate(state, task1.test, cfg).accuracy;
}

void criterion_incremental_class(Verdict& v) {
  const auto start = Clock::now();
  std::vector<double> ours, sgd, ours_task1, keep1, keep0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto setup = desk_class_setup(seed);
    const auto task1 = materialize_task(setup.dataset, setup.schedule, 0, seed);
    const auto run1 = run_protocol(setup.dataset, setup.schedule, setup.encoder, setup.cfg);
    auto cfg0 = setup.cfg;
    cfg0.replay_weight = 0.0;
    const auto run0 = run_protocol(setup.dataset, setup.schedule, setup.encoder, cfg0);
    const auto base = train_baseline(setup.dataset, setup.schedule, setup.encoder, setup.cfg, {BaselineKind::sgd_naive, 0.0});

    const auto last = run1.accuracy.tasks() - 1;
    ours.push_back(summarize(run1.accuracy).final_average);
    sgd.push_back(summarize(base.accuracy).final_average);
    ours_task1.push_back(run1.accuracy.at(last, 0));
    keep1.push_back(frozen_task1_retention(run1.state, task1, setup.cfg));
    keep0.push_back(frozen_task1_retention(run0.state, task1, cfg0));
  }
  const double t = seconds_since(start);
  v.detail << "5 paired seeds: ours final " << mean(ours) << " vs sgd " << mean(sgd) << "; ours task-1 after last "
           << mean(ours_task1) << "; frozen task-1 retention lambda=1 " << mean(keep1) << " vs lambda=0 " << mean(keep0)
           << "; " << t << " s";
  v.require(mean(ours) >= mean(sgd) + 0.15, "(a) margin over sgd");
  v.require(mean(ours_task1) > 0.2 + 0.2, "(b) above chance");
  v.require(mean(keep0) < mean(keep1), "(c) lambda=0 degrades");
  v.require(t < 120.0, "runtime");
}

void criterion_incremental_domain(Verdict& v) {
  const auto start = Clock::now();
  auto setup = desk_domain_setup(1);
  const auto run = run_protocol(setup.dataset, setup.schedule, setup.encoder, setup.cfg);
  const auto base = train_baseline(setup.dataset, setup.schedule, setup.encoder, setup.cfg, {BaselineKind::sgd_naive, 0.0});
  const double ours = summarize(run.accuracy).final_average;
  const double sgd = summarize(base.accuracy).final_average;
  const double first = run.accuracy.at(0, 0);
  const double final_row1 = run.accuracy.at(run.accuracy.tasks() - 1, 0);
  const double t = seconds_since(start);
  v.detail << "digits, 5 permuted tasks: ours final " << ours << " vs sgd " << sgd << "; task 1 " << first
           << " after task 1, " << final_row1 << " after task 5; " << t << " s";
  v.require(ours >= sgd, "ours >= sgd");
  v.require(std::abs(first - final_row1) <= 0.25, "task-1 drift");
  v.require(t < 300.0, "runtime");
}

void criterion_invariants(Verdict& v) {
  std::mt19937_64 gen(6);
  int failures = 0;
  auto check = [&](bool ok, const char* what) {
    if (!ok && failures++ < 5) v.require(false, what);
  };

  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t c = 1 + gen() % 5, z = 1 + gen() % 4, d = 1 + gen() % 6;
    const double tau = std::uniform_real_distribution<double>(0.1, 4.0)(gen);
    const double shift = std::uniform_real_distribution<double>(-9, 9)(gen);
    const auto q = uniform_values(z * d, gen, -3, 3);
    std::vector<std::vector<double>> cls;
    for (std::size_t k = 0; k < c; ++k) cls.push_back(uniform_values(z * d, gen, -3, 3));
    auto post = [&](double s, double t) {
      auto moved = [&](std::vector<double> x) {
        for (auto& e : x) e += s;
        return x;
      };
      std::vector<LatentSamples> classes;
      for (const auto& k : cls) classes.push_back({Tensor({z, d}, moved(k)), 1, z});
      return class_posterior({Tensor({z, d}, moved(q)), 1, z}, classes, {}, {z, t, d, true}).to_vector();
    };
    const auto p = post(0.0, tau);
    const auto pt = post(shift, tau);
    const auto p2 = post(0.0, tau * 3.0);
    check(max_abs_diff(p, pt) <= 1e-12, "translation");
    for (std::size_t r = 0; r < z; ++r) {
      const double s = std::accumulate(p.begin() + r * c, p.begin() + (r + 1) * c, 0.0);
      check(std::abs(s - 1.0) <= 1e-12, "normalization");
      check(std::max_element(p.begin() + r * c, p.begin() + (r + 1) * c) - p.begin() ==
                std::max_element(p2.begin() + r * c, p2.begin() + (r + 1) * c) - p2.begin(),
            "tau argmax");
    }

    const auto s1 = uniform_values(d, gen), s2 = uniform_values(d, gen);
    const std::vector<double> zero(d, 0.0);
    check(weighted_distance(s1, s2, zero) == weighted_distance(s1, s2, std::vector<double>{}), "distance at logvar 0");
    check(weighted_distance(s1, s1, uniform_values(d, gen)) == 0.0, "distance to self");

    const std::size_t n = 1 + gen() % 6;
    const auto m = uniform_values(d, gen), lv = uniform_values(d, gen);
    const auto proto = compute_prototype(
        VariationalEmbedding{rows_tensor(std::vector(n, m)), rows_tensor(std::vector(n, lv))}, 1, 0);
    check(proto.mean.to_vector() == m && proto.logvar.to_vector() == lv, "prototype idempotence");
  }

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EpisodicMemory mem(4 * (8 + seed));
    Rng rng(seed);
    for (int cls = 0; cls < 8; ++cls) {
      std::vector<Image> imgs(1 + (seed + cls) % 9, Image{{1, 2, 2}, std::vector<double>(4, 0.1), cls, 1, 0});
      mem.store_exemplars({{cls, imgs}}, 5, rng);
      check(mem.exemplar_elements() <= *mem.budget_elements(), "memory budget");
    }
  }

  auto setup = desk_class_setup(9, 8, 4, 5);
  const auto a = run_protocol(setup.dataset, setup.schedule, setup.encoder, setup.cfg);
  const auto b = run_protocol(setup.dataset, setup.schedule, setup.encoder, setup.cfg);
  check(a.accuracy == b.accuracy && a.state.memory == b.state.memory, "run determinism");

  v.detail << "normalization, tau argmax, translation, distance degenerations, idempotence, memory budget, determinism; "
           << failures << " violations (full suites: vpr_invariants)";
}

void criterion_ablations(Verdict& v) {
  const auto start = Clock::now();
  struct Variant {
    std::string name;
    std::function<void(TrainerConfig&)> tweak;
    std::size_t d = 16;
    std::size_t z = 10;
  };
  std::vector<Variant> variants{
      {"unweighted_distance", [](TrainerConfig& c) { c.sampling.weighted = false; }},
      {"replay_order=forward", [](TrainerConfig& c) { c.replay_order = ReplayOrder::forward; }},
      {"replay_order=backward", [](TrainerConfig& c) { c.replay_order = ReplayOrder::backward; }},
      {"replay_order=current_only", [](TrainerConfig& c) { c.replay_order = ReplayOrder::current_only; }},
      {"recall=mean_and_var", [](TrainerConfig& c) { c.recall = RecallMode::mean_and_var; }},
      {"recall=mean_only", [](TrainerConfig& c) { c.recall = RecallMode::mean_only; }},
      {"recall=var_only", [](TrainerConfig& c) { c.recall = RecallMode::var_only; }},
  };
  for (std::size_t z : {2, 50, 100}) variants.push_back({"Z=" + std::to_string(z), [](TrainerConfig&) {}, 16, z});
  for (std::size_t d : {10, 500, 1000}) variants.push_back({"D=" + std::to_string(d), [](TrainerConfig&) {}, d, 10});

  std::size_t completed = 0;
  for (const auto& var : variants) {
    auto setup = desk_class_setup(1, var.d, var.z);
    var.tweak(setup.cfg);
    try {
      const auto run = run_protocol(setup.dataset, setup.schedule, setup.encoder, setup.cfg);
      bool ok = run.accuracy.tasks() == setup.schedule.tasks.size();
      for (std::size_t i = 0; i < run.accuracy.tasks(); ++i) {
        for (double x : run.accuracy.row(i)) ok = ok && std::isfinite(x) && x >= 0.0 && x <= 1.0;
      }
      v.require(ok, var.name);
      completed += ok;
      v.detail << var.name << " " << summarize(run.accuracy).final_average << "; ";
    } catch (const std::exception& e) {
      v.require(false, var.name + ": " + e.what());
    }
  }
  v.detail << completed << "/" << variants.size() << " completed, " << seconds_since(start) << " s";
}

void criterion_pca_pearson(Verdict& v) {
  std::mt19937_64 gen(8);
  const std::size_t rows = 20, cols = 6;
  const Matrix data{rows, cols, uniform_values(rows * cols, gen)};
  const auto basis = pca_fit(data, 3);

  std::vector<double> mu(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) mu[c] += data(r, c) / static_cast<double>(rows);
  }
  std::vector<std::vector<double>> scatter(cols, std::vector<double>(cols, 0.0));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < cols; ++i) {
      for (std::size_t j = 0; j < cols; ++j) scatter[i][j] += (data(r, i) - mu[i]) * (data(r, j) - mu[j]);
    }
  }
  std::vector<double> eig;
  std::vector<std::vector<double>> vecs;
  jacobi_eigen(scatter, eig, vecs);
  std::sort(eig.begin(), eig.end(), std::greater<>());
  // Rank-3 reconstruction error equals the sum of the discarded eigenvalues.
  const double oracle = eig[3] + eig[4] + eig[5];
  double err = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<double> x(data.values.begin() + r * cols, data.values.begin() + (r + 1) * cols);
    const auto coords = pca_project(basis, x);
    for (std::size_t c = 0; c < cols; ++c) {
      double rec = basis.mean[c];
      for (std::size_t k = 0; k < 3; ++k) rec += coords[k] * basis.components[k][c];
      err += (x[c] - rec) * (x[c] - rec);
    }
  }

  PrototypeHistoryLog log;
  const double motions[4][3] = {{1, 0, 0.5}, {0, 2, -1}, {-1, -1, 0}, {3, 1, 2}};
  for (int c = 0; c < 4; ++c) {
    log.add({1, c, {0.5 * c, -0.25 * c, 1.0}});
    log.add({2, c, {0.0, 0.0, 0.0}});
    log.add({4, c, {0.5 * c + motions[c][0], -0.25 * c + motions[c][1], 1.0 + motions[c][2]}});
  }
  const Matrix feature{4, 4, {0, 0.9, 0.2, 0.4, 0.9, 0, 0.7, 0.1, 0.2, 0.7, 0, 0.5, 0.4, 0.1, 0.5, 0}};
  std::vector<double> x, y;
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += (motions[i][k] - motions[j][k]) * (motions[i][k] - motions[j][k]);
      x.push_back(std::sqrt(s));
      y.push_back(feature(i, j));
    }
  }
  const auto ms = motion_similarity(log, feature);
  const double r_diff = std::abs(*ms.pearson_r - direct_pearson(x, y));
  const double self = motion_similarity(log, ms.motion_distance).pearson_r.value();

  v.detail << "PCA residual |diff| " << std::abs(err - oracle) << "; pearson " << *ms.pearson_r << " |diff| " << r_diff
           << "; self-correlation " << self;
  v.require(std::abs(err - oracle) <= 1e-8, "pca");
  v.require(r_diff <= 1e-10, "pearson");
  v.require(std::abs(self - 1.0) <= 1e-12, "self-correlation");
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, void (*)(Verdict&)>> criteria{
      {"1 footprint parity", criterion_footprint},
      {"2 gradient suite", criterion_gradients},
      {"3 brute-force oracle equivalence", criterion_oracle},
      {"4 desk-scale incremental-class run", criterion_incremental_class},
      {"5 desk-scale incremental-domain run", criterion_incremental_domain},
      {"6 invariant suites", criterion_invariants},
      {"7 ablation switches", criterion_ablations},
      {"8 pearson and PCA oracles", criterion_pca_pearson},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Verdict v;
    try {
      fn(v);
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    std::printf("[%s] %s: %s\n", v.pass ? "PASS" : "FAIL", name, v.detail.str().c_str());
    std::fflush(stdout);
    failed += !v.pass;
  }
  return failed == 0 ? 0 : 1;
}
