#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>

#include "batching.hpp"
#include "vpr/trainer.hpp"

namespace vpr {

namespace {

// Mean softmax cross-entropy of `logits` [n, C] against column indices.
Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& columns) {
  const auto n = logits.dim(0);
  const auto c = logits.dim(1);
  std::vector<double> onehot(n * c, 0.0);
  for (std::size_t i = 0; i < n; ++i) onehot[i * c + columns[i]] = 1.0;
  return scale(sum(log_softmax_rows(logits) * Tensor({n, c}, std::move(onehot))), -1.0 / static_cast<double>(n));
}

// Parameter values at the end of the previous task; NaN marks entries that
// did not exist then (new head columns).
std::vector<std::vector<double>> anchors_after_growth(std::span<const Tensor> before, std::span<const Tensor> after,
                                                      std::size_t old_classes, std::size_t new_classes) {
  std::vector<std::vector<double>> out;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < after.size(); ++i) {
    const auto prev = before[i].data();
    if (before[i].shape() == after[i].shape()) {
      out.emplace_back(prev.begin(), prev.end());
      continue;
    }
    // Head weight [H, C] or bias [1, C], widened along the last axis.
    std::vector<double> a(after[i].numel(), nan);
    const auto rows = after[i].dim(0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < old_classes; ++c) a[r * new_classes + c] = prev[r * old_classes + c];
    }
    out.push_back(std::move(a));
  }
  return out;
}

// Exact minimizer of lambda * (w - a)^2 + (w - w0)^2 / (2 * lr) around the
// plain gradient step w0.
void proximal_l2(std::span<Tensor> params, const std::vector<std::vector<double>>& anchors, double lr, double lambda) {
  const double k = 2.0 * lr * lambda;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].mutable_data();
    const auto& a = anchors[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      if (!std::isnan(a[j])) w[j] = (w[j] + k * a[j]) / (1.0 + k);
    }
  }
}

}  // namespace

std::optional<BaselineKind> parse_baseline_kind(std::string_view name) {
  if (name == "sgd_naive" || name == "sgd") return BaselineKind::sgd_naive;
  if (name == "l2") return BaselineKind::l2;
  return std::nullopt;
}

BaselineResult train_baseline(const Dataset& dataset, const ProtocolSchedule& schedule, const EncoderParams& encoder,
                              const TrainerConfig& cfg, const BaselineConfig& baseline) {
  cfg.validate();
  schedule.validate();
  if (!(baseline.l2_weight >= 0.0)) throw std::invalid_argument("l2_weight must be non-negative");
  const double lambda = baseline.kind == BaselineKind::l2 ? baseline.l2_weight : 0.0;

  std::vector<TaskData> tasks;
  for (std::size_t i = 0; i < schedule.tasks.size(); ++i) tasks.push_back(materialize_task(dataset, schedule, i, cfg.seed));

  // Head columns follow the order in which classes are introduced.
  std::map<int, std::size_t> column;
  std::vector<int> class_of_column;
  auto introduce = [&](const std::vector<int>& classes) {
    for (int c : classes) {
      if (column.emplace(c, class_of_column.size()).second) class_of_column.push_back(c);
    }
  };
  introduce(tasks.front().class_ids);

  BaselineResult result{AccuracyMatrix(tasks.size()),
                        baseline_head(encoder, std::max<std::size_t>(2, class_of_column.size()),
                                      Rng::derive(cfg.seed, "head-0").engine()()),
                        {}};
  auto& net = result.classifier;
  auto rng = Rng::derive(cfg.seed, "baseline-batches");

  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& task = tasks[i];
    std::vector<std::vector<double>> anchors;
    if (i > 0) {
      const auto before = net.clone();
      const auto old_width = net.num_classes();
      introduce(task.class_ids);
      net.grow(std::max(old_width, class_of_column.size()), Rng::derive(cfg.seed, "head-" + std::to_string(i)).engine()());
      if (lambda > 0.0) anchors = anchors_after_growth(before.parameters(), net.parameters(), old_width, net.num_classes());
    }

    std::map<int, std::vector<const Image*>> by_class;
    for (const auto& im : task.train) by_class[im.label].push_back(&im);
    for (std::size_t epoch = 0; epoch < cfg.epochs_per_task; ++epoch) {
      for (const auto& batch : detail::epoch_batches(by_class, cfg.batch_per_class, rng)) {
        std::vector<Image> images;
        std::vector<std::size_t> cols;
        for (const auto& [cls, list] : batch) {
          for (const auto& im : list) {
            images.push_back(im);
            cols.push_back(column.at(cls));
          }
        }
        backward(cross_entropy(net.logits(images_to_batch(images)), cols));
        sgd_step(net.parameters(), cfg.learning_rate);
        if (!anchors.empty()) proximal_l2(net.parameters(), anchors, cfg.learning_rate, lambda);
      }
    }
    result.parameter_counts.push_back(net.parameter_count());

    // Argmax over the columns of classes seen so far; ties to the lowest class id.
    auto frozen = net.clone();
    for (auto& t : frozen.parameters()) t = t.detach();
    for (std::size_t j = 0; j <= i; ++j) {
      const auto& test = tasks[j].test;
      const auto logits = frozen.logits(images_to_batch(test));
      const auto values = logits.data();
      const auto width = logits.dim(1);
      std::size_t correct = 0;
      for (std::size_t n = 0; n < test.size(); ++n) {
        int best = -1;
        double best_v = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < class_of_column.size(); ++c) {
          const double v = values[n * width + c];
          if (v > best_v || (v == best_v && class_of_column[c] < best)) {
            best_v = v;
            best = class_of_column[c];
          }
        }
        correct += best == test[n].label;
      }
      result.accuracy.set(i, j, static_cast<double>(correct) / static_cast<double>(test.size()));
    }
  }
  return result;
}

}  // namespace vpr
