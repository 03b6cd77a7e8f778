#pragma once

// Accuracy bookkeeping and prototype-dynamics analysis.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <vector>

namespace vpr {

// A(i, j): accuracy on task j's test set after training task i, j <= i.
// Indices are zero-based; entries above the diagonal are absent.
class AccuracyMatrix {
 public:
  AccuracyMatrix() = default;
  explicit AccuracyMatrix(std::size_t tasks);

  std::size_t tasks() const { return rows_.size(); }
  double at(std::size_t i, std::size_t j) const;
  void set(std::size_t i, std::size_t j, double accuracy);
  const std::vector<double>& row(std::size_t i) const { return rows_.at(i); }

  // Header "after_task,task_1,...,task_T"; empty cells above the diagonal.
  void write_csv(const std::filesystem::path& path) const;
  static AccuracyMatrix read_csv(const std::filesystem::path& path);

  bool operator==(const AccuracyMatrix&) const = default;

 private:
  std::vector<std::vector<double>> rows_;
};

struct AccuracySummary {
  std::vector<double> average_accuracy;  // per row i: mean of A(i, 0..i)
  double final_average = 0.0;
  std::vector<double> forgetting;        // per task j < T-1: max_i A(i, j) - A(T-1, j)
};

AccuracySummary summarize(const AccuracyMatrix& a);

struct PrototypeRecord {
  int task_id = 0;
  int class_id = 0;
  std::vector<double> mean;
};

class PrototypeHistoryLog {
 public:
  // Throws on a repeated (task, class) pair or a dimension change.
  void add(PrototypeRecord record);
  const std::vector<PrototypeRecord>& records() const { return records_; }
  std::size_t dim() const { return records_.empty() ? 0 : records_.front().mean.size(); }
  // Ascending class id; each class's records ordered by task.
  std::map<int, std::vector<const PrototypeRecord*>> by_class() const;

  // Header "task_id,class_id,m0,...,m{D-1}".
  void write_csv(const std::filesystem::path& path) const;
  static PrototypeHistoryLog read_csv(const std::filesystem::path& path);

  bool operator==(const PrototypeHistoryLog& other) const;

 private:
  std::vector<PrototypeRecord> records_;
};

// Row-major real matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
};

void write_matrix_csv(const Matrix& m, const std::filesystem::path& path);
// Optional header row is skipped when its first cell is not numeric.
Matrix read_matrix_csv(const std::filesystem::path& path);

struct PcaBasis {
  std::vector<double> mean;                     // length D
  std::vector<std::vector<double>> components;  // k rows of length D, orthonormal
  std::vector<double> explained_variance;       // descending
};

// Top-k principal directions of the rows of `data`. Sign convention: the
// largest-magnitude coordinate of each component is positive (first such
// coordinate on ties). Throws when the centered rank is below k.
PcaBasis pca_fit(const Matrix& data, std::size_t k = 3);
std::vector<double> pca_project(const PcaBasis& basis, const std::vector<double>& vector);

// Each class's prototype means, ordered by task, projected into `basis`.
std::map<int, std::vector<std::vector<double>>> prototype_trajectories(const PrototypeHistoryLog& log,
                                                                      const PcaBasis& basis);

struct MotionSimilarity {
  std::vector<int> class_ids;
  std::vector<std::vector<double>> motion;  // latest minus initial mean, per class
  Matrix motion_distance;                   // pairwise Euclidean distances
  std::optional<double> pearson_r;          // present when a feature matrix was given
};

// `feature_similarity` rows and columns follow ascending class id.
MotionSimilarity motion_similarity(const PrototypeHistoryLog& log,
                                   const std::optional<Matrix>& feature_similarity = std::nullopt);

// Pearson correlation of the strict upper triangles of two square matrices.
double pearson_upper_triangle(const Matrix& a, const Matrix& b);

}  // namespace vpr
