#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include "CLI11.hpp"
#include "json.hpp"
#include "vpr/analysis.hpp"
#include "vpr/gradcheck.hpp"
#include "vpr/memory.hpp"

namespace vpr::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

void check_keys(const json& obj, const std::string& where, std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw std::invalid_argument("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument(std::string("key '") + key + "' has the wrong type");
  }
}

std::size_t as_count(const json& v, const char* key) {
  if (!v.is_number_unsigned()) throw std::invalid_argument(std::string("key '") + key + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

std::size_t count_or(const json& obj, const char* key, std::size_t fallback) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  return as_count(*it, key);
}

double real_or(const json& obj, const char* key, double fallback) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  if (!it->is_number()) throw std::invalid_argument(std::string("key '") + key + "' must be a number");
  return it->get<double>();
}

template <typename E>
E enum_or(const json& obj, const char* key, E fallback, std::optional<E> (*parse)(std::string_view)) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  if (!it->is_string()) throw std::invalid_argument(std::string("key '") + key + "' must be a string");
  const auto name = it->get<std::string>();
  const auto v = parse(name);
  if (!v) throw std::invalid_argument("unknown value '" + name + "' for key '" + key + "'");
  return *v;
}

fs::path resolve(const fs::path& base, const json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) throw std::invalid_argument(std::string("data.") + key + " must be a path string");
  const fs::path p = it->get<std::string>();
  return p.is_absolute() ? p : base / p;
}

Dataset load_dataset(const json& j, const fs::path& base, std::uint64_t seed) {
  check_keys(j, "data",
             {"source", "num_classes", "dim", "shape", "train_per_class", "test_per_class", "separation", "noise",
              "seed", "images", "labels", "test_images", "test_labels", "holdout_per_class"});
  const auto source = get_or<std::string>(j, "source", "synthetic");
  if (source == "synthetic") {
    InputShape shape{1, 1, count_or(j, "dim", 20)};
    if (j.contains("shape")) {
      const auto& s = j.at("shape");
      if (!s.is_array() || s.size() != 3) throw std::invalid_argument("data.shape must be [channels, height, width]");
      shape = {as_count(s[0], "shape"), as_count(s[1], "shape"), as_count(s[2], "shape")};
    }
    return synthetic_blobs(count_or(j, "num_classes", 5), shape, count_or(j, "train_per_class", 10),
                           count_or(j, "test_per_class", 50), real_or(j, "separation", 10.0),
                           count_or(j, "seed", seed), real_or(j, "noise", 1.0));
  }
  if (source == "idx") {
    if (j.contains("test_images") != j.contains("test_labels")) {
      throw std::invalid_argument("data.test_images and data.test_labels go together");
    }
    if (j.contains("test_images")) {
      return load_idx(resolve(base, j, "images"), resolve(base, j, "labels"), resolve(base, j, "test_images"),
                      resolve(base, j, "test_labels"));
    }
    return holdout(load_idx(resolve(base, j, "images"), resolve(base, j, "labels")),
                   count_or(j, "holdout_per_class", 10), seed);
  }
  throw std::invalid_argument("data.source must be 'synthetic' or 'idx', got '" + source + "'");
}

ProtocolSchedule make_schedule(const json& j, const Dataset& ds, std::uint64_t seed) {
  const json obj = j.is_string() ? json{{"kind", j}} : j;
  check_keys(obj, "protocol",
             {"kind", "tasks", "train_quota", "split", "classes_per_task", "first_task_quota", "quota",
              "shuffle_classes"});
  const auto kind = get_or<std::string>(obj, "kind", "split");
  if (kind == "permuted") return permuted_protocol(ds, count_or(obj, "tasks", 5), seed, count_or(obj, "train_quota", 0));
  if (kind != "split") throw std::invalid_argument("protocol.kind must be 'split' or 'permuted', got '" + kind + "'");
  SplitOptions o;
  o.kind = enum_or(obj, "split", SplitKind::cifar_like, &parse_split_kind);
  if (const auto it = obj.find("classes_per_task"); it != obj.end()) {
    if (!it->is_array()) throw std::invalid_argument("protocol.classes_per_task must be an array");
    for (const auto& v : *it) o.classes_per_task.push_back(as_count(v, "classes_per_task"));
  }
  if (obj.contains("first_task_quota")) o.first_task_quota = count_or(obj, "first_task_quota", 0);
  if (obj.contains("quota")) o.quota = count_or(obj, "quota", 0);
  o.shuffle_classes = get_or<bool>(obj, "shuffle_classes", false);
  return split_protocol(ds, o, seed);
}

NetworkSpec make_network(const json& j, std::size_t latent_dim, const InputShape& input) {
  const json obj = j.is_string() ? json{{"name", j}} : j;
  check_keys(obj, "architecture", {"name", "hidden"});
  ArchitectureOptions o;
  o.latent_dim = latent_dim;
  o.input_dim = input.size();
  o.hidden = count_or(obj, "hidden", 0);
  const auto arch = enum_or(obj, "name", Architecture::synthetic_vector, &parse_architecture);
  auto spec = reference_architecture(arch, o);
  if (spec.input.size() != input.size()) {
    throw std::invalid_argument("architecture " + std::string(to_string(arch)) + " takes " +
                                std::to_string(spec.input.size()) + " input values; the data has " +
                                std::to_string(input.size()));
  }
  return spec;
}

std::optional<BaselineConfig> make_baseline(const json& top) {
  const auto it = top.find("baseline");
  if (it == top.end() || it->is_null()) return std::nullopt;
  const json obj = it->is_string() ? json{{"kind", *it}} : *it;
  check_keys(obj, "baseline", {"kind", "l2_weight"});
  if (get_or<std::string>(obj, "kind", "") == "none") return std::nullopt;
  BaselineConfig b;
  b.kind = enum_or(obj, "kind", BaselineKind::sgd_naive, &parse_baseline_kind);
  b.l2_weight = real_or(obj, "l2_weight", 0.0);
  return b;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

ordered_json footprint_json(const FootprintReport& r) {
  return {{"network_params", r.network_params},
          {"regularizer_params", r.regularizer_params},
          {"exemplar_elements", r.exemplar_elements},
          {"prototype_elements", r.prototype_elements},
          {"prototype_history_elements", r.prototype_history_elements},
          {"total", r.total}};
}

ordered_json summary_json(const AccuracySummary& s) {
  return {{"average_accuracy", s.average_accuracy}, {"final_average", s.final_average}, {"forgetting", s.forgetting}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_latents(const VariationalEmbedding& e, std::span<const Image> images, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.precision(17);
  const auto d = e.dim();
  for (std::size_t k = 0; k < d; ++k) out << (k ? "," : "") << 'z' << k;
  out << '\n';
  const auto means = e.mean.data();
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (std::size_t k = 0; k < d; ++k) out << (k ? "," : "") << means[i * d + k];
    out << '\n';
  }
}

struct RunArgs {
  std::string config;
  std::string out_dir = "vpr_run";
  bool checkpoints = true;
};

int cmd_run(const RunArgs& a, std::ostream& out) {
  const auto setup = load_run_setup(a.config);
  const auto start = std::chrono::steady_clock::now();
  const fs::path dir = a.out_dir;
  fs::create_directories(dir);

  const auto encoder =
      EncoderParams::initialize(setup.network, setup.trainer.sampling.latent_dim, setup.trainer.seed);
  std::vector<std::string> files;
  auto hook = [&](const TrainingState& state, const TaskData& task, std::size_t index) {
    if (index == 0) {
      write_latents(encode_batch(state.encoder, task.test), task.test, dir / "task1_latents.csv");
      files.push_back("task1_latents.csv");
    }
    if (a.checkpoints) {
      const auto sub = fs::path("checkpoints") / ("task_" + std::to_string(task.task_id));
      fs::create_directories(dir / sub);
      state.encoder.save(dir / sub / "encoder.bin");
      state.memory.save(dir / sub / "memory.bin");
      files.push_back((sub / "encoder.bin").string());
      files.push_back((sub / "memory.bin").string());
    }
  };
  const auto run = run_protocol(setup.dataset, setup.schedule, encoder, setup.trainer, hook);
  run.accuracy.write_csv(dir / "accuracy.csv");
  run.history.write_csv(dir / "prototype_history.csv");
  files.insert(files.begin(), {"accuracy.csv", "prototype_history.csv"});

  const auto summary = summarize(run.accuracy);
  ordered_json manifest;
  manifest["config"] = ordered_json::parse(read_json(a.config).dump());
  manifest["seed"] = setup.trainer.seed;
  manifest["tasks"] = setup.schedule.tasks.size();
  manifest["summary"] = summary_json(summary);
  manifest["footprint"] = footprint_json(memory_footprint(setup.network, run.state.memory, FootprintMode::ours));
  if (setup.baseline) {
    const auto b = train_baseline(setup.dataset, setup.schedule, encoder, setup.trainer, *setup.baseline);
    b.accuracy.write_csv(dir / "baseline_accuracy.csv");
    files.push_back("baseline_accuracy.csv");
    const auto mode = setup.baseline->kind == BaselineKind::l2 ? FootprintMode::baseline_regularizer
                                                                : FootprintMode::baseline_sgd;
    manifest["baseline"] = {{"kind", setup.baseline->kind == BaselineKind::l2 ? "l2" : "sgd_naive"},
                            {"summary", summary_json(summarize(b.accuracy))},
                            {"footprint", footprint_json(memory_footprint(b.classifier.spec(), EpisodicMemory{}, mode))}};
    out << "baseline final average accuracy " << std::fixed << std::setprecision(4)
        << summarize(b.accuracy).final_average << '\n';
  }
  manifest["files"] = files;
  manifest["wall_time_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");

  out << "final average accuracy " << std::fixed << std::setprecision(4) << summary.final_average << '\n';
  out << "outputs in " << dir.string() << '\n';
  return kExitOk;
}

int cmd_report(const std::string& path, bool as_json, std::ostream& out) {
  const auto a = AccuracyMatrix::read_csv(path);
  const auto s = summarize(a);
  if (as_json) {
    out << summary_json(s).dump(2) << '\n';
    return kExitOk;
  }
  out << std::fixed << std::setprecision(4);
  for (std::size_t i = 0; i < s.average_accuracy.size(); ++i) {
    out << "after task " << i + 1 << ": average " << s.average_accuracy[i] << '\n';
  }
  out << "final average " << s.final_average << '\n';
  for (std::size_t j = 0; j < s.forgetting.size(); ++j) out << "forgetting task " << j + 1 << ": " << s.forgetting[j] << '\n';
  return kExitOk;
}

struct FootprintArgs {
  std::string arch;
  std::string mode = "ours";
  std::size_t classes = 10;
  std::size_t exemplars_per_class = 1;
  std::size_t latent_dim = 500;
  std::size_t input_dim = 0;
  std::size_t hidden = 0;
  bool json = false;
};

int cmd_footprint(const FootprintArgs& a, std::ostream& out, std::ostream& err) {
  const auto arch = parse_architecture(a.arch);
  if (!arch) {
    err << "error: unknown architecture '" << a.arch << "'\n";
    return kExitUsage;
  }
  std::optional<FootprintMode> mode;
  if (a.mode == "ours") mode = FootprintMode::ours;
  if (a.mode == "baseline_regularizer" || a.mode == "regularizer") mode = FootprintMode::baseline_regularizer;
  if (a.mode == "baseline_sgd" || a.mode == "sgd") mode = FootprintMode::baseline_sgd;
  if (!mode) {
    err << "error: unknown mode '" << a.mode << "' (ours, baseline_regularizer, baseline_sgd)\n";
    return kExitUsage;
  }
  if (a.classes < 1 || a.latent_dim < 1) {
    err << "error: --classes and --latent-dim must be positive\n";
    return kExitUsage;
  }
  auto spec = reference_architecture(*arch, {a.latent_dim, a.input_dim, a.hidden});
  EpisodicMemory memory;
  if (*mode == FootprintMode::ours) {
    if (a.exemplars_per_class > 0) {
      EpisodicMemory::ExemplarMap exemplars;
      for (std::size_t c = 0; c < a.classes; ++c) {
        const int cls = static_cast<int>(c);
        for (std::size_t k = 0; k < a.exemplars_per_class; ++k) {
          exemplars[cls].push_back(Image{spec.input, std::vector<double>(spec.input.size(), 0.0), cls, 1, 0});
        }
      }
      Rng rng(0);
      memory.store_exemplars(exemplars, a.exemplars_per_class, rng);
    }
    std::vector<VariationalPrototype> protos;
    for (std::size_t c = 0; c < a.classes; ++c) {
      protos.push_back({1, static_cast<int>(c), Tensor::zeros({1, a.latent_dim}), Tensor::zeros({1, a.latent_dim})});
    }
    memory.store_prototypes(protos);
  } else {
    spec.layers.back().out = a.classes;  // softmax head over the classes
  }
  const auto r = memory_footprint(spec, memory, *mode);
  if (a.json) {
    auto j = footprint_json(r);
    j["architecture"] = a.arch;
    j["mode"] = a.mode;
    out << j.dump(2) << '\n';
    return kExitOk;
  }
  const auto row = [&](const char* name, const std::string& v) { out << std::left << std::setw(24) << name << v << '\n'; };
  row("architecture", a.arch);
  row("mode", a.mode);
  row("network parameters", with_commas(r.network_params));
  row("regularizer parameters", with_commas(r.regularizer_params));
  row("exemplar elements", with_commas(r.exemplar_elements));
  row("prototype elements", with_commas(r.prototype_elements));
  row("total", with_commas(r.total));
  return kExitOk;
}

struct DynamicsArgs {
  std::string history;
  std::string latents;
  std::string features;
  std::string out_dir;
  bool json = false;
};

int cmd_dynamics(const DynamicsArgs& a, std::ostream& out) {
  const auto log = PrototypeHistoryLog::read_csv(a.history);
  std::optional<Matrix> features;
  if (!a.features.empty()) features = read_matrix_csv(a.features);
  const auto motion = motion_similarity(log, features);
  if (!a.out_dir.empty()) {
    fs::create_directories(a.out_dir);
    write_matrix_csv(motion.motion_distance, fs::path(a.out_dir) / "motion_distance.csv");
  }

  ordered_json j;
  j["classes"] = motion.class_ids;
  std::vector<double> norms;
  for (const auto& m : motion.motion) {
    double s = 0.0;
    for (double v : m) s += v * v;
    norms.push_back(std::sqrt(s));
  }
  j["motion_norm"] = norms;
  if (motion.pearson_r) j["pearson_r"] = *motion.pearson_r;

  if (!a.latents.empty()) {
    const auto basis = pca_fit(read_matrix_csv(a.latents), 3);
    j["explained_variance"] = basis.explained_variance;
    const auto traj = prototype_trajectories(log, basis);
    if (!a.out_dir.empty()) {
      std::ofstream csv(fs::path(a.out_dir) / "trajectories.csv");
      if (!csv) throw std::runtime_error("cannot write trajectories.csv in " + a.out_dir);
      csv.precision(17);
      csv << "class_id,task_id,pc1,pc2,pc3\n";
      const auto records = log.by_class();
      for (const auto& [cls, points] : traj) {
        const auto& recs = records.at(cls);
        for (std::size_t i = 0; i < points.size(); ++i) {
          csv << cls << ',' << recs[i]->task_id;
          for (double v : points[i]) csv << ',' << v;
          csv << '\n';
        }
      }
    }
  }

  if (a.json) {
    out << j.dump(2) << '\n';
    return kExitOk;
  }
  out << std::fixed << std::setprecision(6);
  for (std::size_t i = 0; i < motion.class_ids.size(); ++i) {
    out << "class " << motion.class_ids[i] << ": motion " << norms[i] << '\n';
  }
  if (motion.pearson_r) out << "pearson_r " << *motion.pearson_r << '\n';
  if (j.contains("explained_variance")) {
    out << "pca explained variance";
    for (double v : j["explained_variance"]) out << ' ' << v;
    out << '\n';
  }
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, double tolerance, double epsilon, std::ostream& out) {
  const auto results = run_gradcheck_suite(seed, tolerance, epsilon);
  bool ok = true;
  for (const auto& r : results) {
    out << std::left << std::setw(34) << r.name << std::scientific << std::setprecision(3) << r.max_rel_error << "  "
        << (r.passed ? "ok" : "FAIL") << '\n';
    ok = ok && r.passed;
  }
  out << (ok ? "all checks passed" : "gradient check failed") << '\n';
  return ok ? kExitOk : kExitFailed;
}

}  // namespace

std::string with_commas(std::size_t value) {
  auto digits = std::to_string(value);
  for (auto i = static_cast<std::ptrdiff_t>(digits.size()) - 3; i > 0; i -= 3) digits.insert(static_cast<std::size_t>(i), ",");
  return digits;
}

RunSetup load_run_setup(const fs::path& config_path) {
  const auto j = read_json(config_path);
  check_keys(j, "run configuration",
             {"data", "protocol", "architecture", "D", "Z", "tau", "lr", "epochs", "lambda", "budget",
              "exemplars_per_class", "batch_per_class", "support_fraction", "seed", "weighted", "replay_order",
              "recall", "old_prototypes", "eval_prototypes", "stochastic_eval", "baseline"});
  const auto base = config_path.parent_path();
  RunSetup s;
  auto& t = s.trainer;
  t.seed = count_or(j, "seed", 0);
  t.learning_rate = real_or(j, "lr", t.learning_rate);
  t.epochs_per_task = count_or(j, "epochs", t.epochs_per_task);
  t.replay_weight = real_or(j, "lambda", t.replay_weight);
  if (j.contains("budget") && !j.at("budget").is_null()) t.memory_budget = count_or(j, "budget", 0);
  t.exemplars_per_class = count_or(j, "exemplars_per_class", t.exemplars_per_class);
  t.batch_per_class = count_or(j, "batch_per_class", t.batch_per_class);
  t.support_fraction = real_or(j, "support_fraction", t.support_fraction);
  t.sampling.samples = count_or(j, "Z", t.sampling.samples);
  t.sampling.temperature = real_or(j, "tau", t.sampling.temperature);
  t.sampling.latent_dim = count_or(j, "D", 500);
  t.sampling.weighted = get_or<bool>(j, "weighted", true);
  t.replay_order = enum_or(j, "replay_order", t.replay_order, &parse_replay_order);
  t.recall = enum_or(j, "recall", t.recall, &parse_recall_mode);
  t.old_prototypes = enum_or(j, "old_prototypes", t.old_prototypes, &parse_old_prototype_source);
  t.eval_prototypes = enum_or(j, "eval_prototypes", t.eval_prototypes, &parse_eval_prototypes);
  t.stochastic_eval = get_or<bool>(j, "stochastic_eval", false);
  t.validate();

  if (!j.contains("data")) throw std::invalid_argument("run configuration needs a 'data' object");
  s.dataset = load_dataset(j.at("data"), base, t.seed);
  s.schedule = make_schedule(j.contains("protocol") ? j.at("protocol") : json("split"), s.dataset, t.seed);
  s.network = make_network(j.contains("architecture") ? j.at("architecture") : json("synthetic_vector"),
                           t.sampling.latent_dim, s.dataset.shape);
  s.baseline = make_baseline(j);
  return s;
}

int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Variational prototype replay: training, reports and analysis", "vpr"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Train a protocol from a JSON configuration");
  run->add_option("config", run_args.config, "Run configuration file")->required();
  run->add_option("-o,--out", run_args.out_dir, "Output directory");
  run->add_flag("!--no-checkpoints", run_args.checkpoints, "Skip per-task encoder and memory snapshots");

  std::string report_path;
  bool report_json = false;
  auto* report = app.add_subcommand("report", "Summarize an accuracy-matrix CSV");
  report->add_option("matrix", report_path, "Accuracy CSV")->required();
  report->add_flag("--json", report_json, "Print JSON");

  FootprintArgs fp;
  auto* footprint = app.add_subcommand("footprint", "Memory footprint in stored reals");
  footprint->add_option("--arch", fp.arch, "cifar_like_32, mnist_like_28 or synthetic_vector")->required();
  footprint->add_option("--mode", fp.mode, "ours, baseline_regularizer or baseline_sgd");
  footprint->add_option("--classes", fp.classes, "Classes seen");
  footprint->add_option("--exemplars-per-class", fp.exemplars_per_class, "Stored images per class (ours)");
  footprint->add_option("--latent-dim", fp.latent_dim, "Latent dimension D");
  footprint->add_option("--input-dim", fp.input_dim, "Input length (synthetic_vector)");
  footprint->add_option("--hidden", fp.hidden, "Hidden width of fully connected stacks");
  footprint->add_flag("--json", fp.json, "Print JSON");

  DynamicsArgs dyn;
  auto* dynamics = app.add_subcommand("dynamics", "Prototype motion, PCA trajectories and feature correlation");
  dynamics->add_option("--history", dyn.history, "Prototype-history CSV")->required();
  dynamics->add_option("--latents", dyn.latents, "Task-1 latent CSV for the PCA basis");
  dynamics->add_option("--features", dyn.features, "Class-by-class feature-similarity CSV");
  dynamics->add_option("-o,--out", dyn.out_dir, "Directory for motion_distance.csv and trajectories.csv");
  dynamics->add_flag("--json", dyn.json, "Print JSON");

  std::uint64_t gc_seed = 0;
  double gc_tol = 1e-4;
  double gc_eps = 1e-5;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gradcheck->add_option("--seed", gc_seed, "Seed for random inputs");
  gradcheck->add_option("--tolerance", gc_tol, "Maximum relative error");
  gradcheck->add_option("--epsilon", gc_eps, "Central-difference half width");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run) return cmd_run(run_args, out);
    if (*report) return cmd_report(report_path, report_json, out);
    if (*footprint) return cmd_footprint(fp, out, err);
    if (*dynamics) return cmd_dynamics(dyn, out);
    if (*gradcheck) return cmd_gradcheck(gc_seed, gc_tol, gc_eps, out);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::runtime_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "failed: " << e.what() << '\n';
    return kExitFailed;
  }
  return kExitUsage;
}

}  // namespace vpr::cli
