#include "vpr/analysis.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace vpr {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream row(line);
  while (std::getline(row, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_real(const std::string& cell, const std::filesystem::path& path, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": bad number '" + cell + "'");
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.precision(17);
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

}  // namespace

AccuracyMatrix::AccuracyMatrix(std::size_t tasks) {
  rows_.resize(tasks);
  for (std::size_t i = 0; i < tasks; ++i) rows_[i].assign(i + 1, 0.0);
}

double AccuracyMatrix::at(std::size_t i, std::size_t j) const {
  if (i >= rows_.size() || j > i) throw std::out_of_range("accuracy matrix index out of range");
  return rows_[i][j];
}

void AccuracyMatrix::set(std::size_t i, std::size_t j, double accuracy) {
  if (i >= rows_.size() || j > i) throw std::out_of_range("accuracy matrix index out of range");
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw std::invalid_argument("accuracy outside [0, 1]");
  rows_[i][j] = accuracy;
}

void AccuracyMatrix::write_csv(const std::filesystem::path& path) const {
  auto out = open_out(path);
  out << "after_task";
  for (std::size_t j = 0; j < tasks(); ++j) out << ",task_" << j + 1;
  out << '\n';
  for (std::size_t i = 0; i < tasks(); ++i) {
    out << i + 1;
    for (std::size_t j = 0; j < tasks(); ++j) {
      out << ',';
      if (j <= i) out << rows_[i][j];
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

AccuracyMatrix AccuracyMatrix::read_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("after_task", 0) != 0) {
    throw std::runtime_error(path.string() + ": missing 'after_task,...' header");
  }
  const auto tasks = split_csv_line(line).size() - 1;
  AccuracyMatrix a(tasks);
  std::size_t line_no = 1, row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (row >= tasks || cells.size() != tasks + 1) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": malformed accuracy row");
    }
    for (std::size_t j = 0; j <= row; ++j) a.set(row, j, parse_real(cells[j + 1], path, line_no));
    for (std::size_t j = row + 1; j < tasks; ++j) {
      if (!cells[j + 1].empty()) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": entry above the diagonal");
      }
    }
    ++row;
  }
  if (row != tasks) throw std::runtime_error(path.string() + ": expected " + std::to_string(tasks) + " rows");
  return a;
}

AccuracySummary summarize(const AccuracyMatrix& a) {
  AccuracySummary s;
  const auto t = a.tasks();
  for (std::size_t i = 0; i < t; ++i) {
    double total = 0.0;
    for (double v : a.row(i)) total += v;
    s.average_accuracy.push_back(total / static_cast<double>(i + 1));
  }
  if (t > 0) s.final_average = s.average_accuracy.back();
  for (std::size_t j = 0; j + 1 < t; ++j) {
    double best = 0.0;
    for (std::size_t i = j; i < t; ++i) best = std::max(best, a.at(i, j));
    s.forgetting.push_back(best - a.at(t - 1, j));
  }
  return s;
}

void PrototypeHistoryLog::add(PrototypeRecord record) {
  if (!records_.empty() && record.mean.size() != dim()) {
    throw std::invalid_argument("prototype log: dimension " + std::to_string(record.mean.size()) + " != " +
                                std::to_string(dim()));
  }
  for (const auto& r : records_) {
    if (r.task_id == record.task_id && r.class_id == record.class_id) {
      throw std::invalid_argument("prototype log: duplicate record for (task " + std::to_string(record.task_id) +
                                  ", class " + std::to_string(record.class_id) + ")");
    }
  }
  records_.push_back(std::move(record));
}

std::map<int, std::vector<const PrototypeRecord*>> PrototypeHistoryLog::by_class() const {
  std::map<int, std::vector<const PrototypeRecord*>> out;
  for (const auto& r : records_) out[r.class_id].push_back(&r);
  for (auto& [cls, list] : out) {
    std::stable_sort(list.begin(), list.end(), [](auto* a, auto* b) { return a->task_id < b->task_id; });
  }
  return out;
}

void PrototypeHistoryLog::write_csv(const std::filesystem::path& path) const {
  auto out = open_out(path);
  out << "task_id,class_id";
  for (std::size_t i = 0; i < dim(); ++i) out << ",m" << i;
  out << '\n';
  for (const auto& r : records_) {
    out << r.task_id << ',' << r.class_id;
    for (double v : r.mean) out << ',' << v;
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

PrototypeHistoryLog PrototypeHistoryLog::read_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("task_id,class_id", 0) != 0) {
    throw std::runtime_error(path.string() + ": missing 'task_id,class_id,...' header");
  }
  const auto d = split_csv_line(line).size() - 2;
  PrototypeHistoryLog log;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != d + 2) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(d + 2) + " columns");
    }
    PrototypeRecord r;
    r.task_id = static_cast<int>(parse_real(cells[0], path, line_no));
    r.class_id = static_cast<int>(parse_real(cells[1], path, line_no));
    for (std::size_t i = 0; i < d; ++i) r.mean.push_back(parse_real(cells[i + 2], path, line_no));
    log.add(std::move(r));
  }
  return log;
}

bool PrototypeHistoryLog::operator==(const PrototypeHistoryLog& other) const {
  if (records_.size() != other.records_.size()) return false;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& a = records_[i];
    const auto& b = other.records_[i];
    if (a.task_id != b.task_id || a.class_id != b.class_id || a.mean != b.mean) return false;
  }
  return true;
}

void write_matrix_csv(const Matrix& m, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) out << (c ? "," : "") << m(r, c);
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  Matrix m;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (m.rows == 0 && m.values.empty()) {
      try {
        (void)std::stod(cells.front());
      } catch (const std::exception&) {
        continue;  // header
      }
    }
    if (m.cols == 0) m.cols = cells.size();
    if (cells.size() != m.cols) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(m.cols) + " columns");
    }
    for (const auto& c : cells) m.values.push_back(parse_real(c, path, line_no));
    ++m.rows;
  }
  if (m.rows == 0) throw std::runtime_error(path.string() + ": empty matrix");
  return m;
}

PcaBasis pca_fit(const Matrix& data, std::size_t k) {
  if (k == 0 || data.cols < k) {
    throw std::invalid_argument("pca_fit: cannot take " + std::to_string(k) + " components of " +
                                std::to_string(data.cols) + "-dimensional data");
  }
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const Mat> x(data.values.data(), static_cast<Eigen::Index>(data.rows),
                                static_cast<Eigen::Index>(data.cols));
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  const double denom = data.rows > 1 ? static_cast<double>(data.rows - 1) : 1.0;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / denom;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw std::runtime_error("pca_fit: eigendecomposition failed");

  const auto& values = eig.eigenvalues();  // ascending
  const double top = std::max(values(values.size() - 1), 0.0);
  const double tol = 1e-10 * std::max(1.0, top);
  std::size_t rank = 0;
  for (Eigen::Index i = 0; i < values.size(); ++i) rank += values(i) > tol;
  if (rank < k) {
    throw std::invalid_argument("pca_fit: centered data has rank " + std::to_string(rank) + ", need " +
                                std::to_string(k));
  }

  PcaBasis basis;
  basis.mean.assign(mean.data(), mean.data() + mean.size());
  for (std::size_t c = 0; c < k; ++c) {
    const auto col = values.size() - 1 - static_cast<Eigen::Index>(c);
    std::vector<double> v(data.cols);
    for (std::size_t i = 0; i < data.cols; ++i) v[i] = eig.eigenvectors()(static_cast<Eigen::Index>(i), col);
    std::size_t pivot = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
      if (std::abs(v[i]) > std::abs(v[pivot]) + 1e-12) pivot = i;
    }
    if (v[pivot] < 0.0) {
      for (auto& e : v) e = -e;
    }
    basis.components.push_back(std::move(v));
    basis.explained_variance.push_back(values(col));
  }
  return basis;
}

std::vector<double> pca_project(const PcaBasis& basis, const std::vector<double>& vector) {
  if (vector.size() != basis.mean.size()) {
    throw std::invalid_argument("pca_project: vector length " + std::to_string(vector.size()) + " != basis dimension " +
                                std::to_string(basis.mean.size()));
  }
  std::vector<double> out;
  for (const auto& comp : basis.components) {
    double dot = 0.0;
    for (std::size_t i = 0; i < vector.size(); ++i) dot += (vector[i] - basis.mean[i]) * comp[i];
    out.push_back(dot);
  }
  return out;
}

std::map<int, std::vector<std::vector<double>>> prototype_trajectories(const PrototypeHistoryLog& log,
                                                                      const PcaBasis& basis) {
  std::map<int, std::vector<std::vector<double>>> out;
  for (const auto& [cls, records] : log.by_class()) {
    auto& path = out[cls];
    for (const auto* r : records) path.push_back(pca_project(basis, r->mean));
  }
  return out;
}

double pearson_upper_triangle(const Matrix& a, const Matrix& b) {
  if (a.rows != a.cols || b.rows != b.cols || a.rows != b.rows) {
    throw std::invalid_argument("pearson: need square matrices of equal size, got " + std::to_string(a.rows) + "x" +
                                std::to_string(a.cols) + " and " + std::to_string(b.rows) + "x" +
                                std::to_string(b.cols));
  }
  std::vector<double> x, y;
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = i + 1; j < a.cols; ++j) {
      x.push_back(a(i, j));
      y.push_back(b(i, j));
    }
  }
  if (x.size() < 2) throw std::invalid_argument("pearson: need at least 3 classes");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) throw std::domain_error("pearson: constant input has no correlation");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

MotionSimilarity motion_similarity(const PrototypeHistoryLog& log, const std::optional<Matrix>& feature_similarity) {
  MotionSimilarity out;
  for (const auto& [cls, records] : log.by_class()) {
    out.class_ids.push_back(cls);
    const auto& first = records.front()->mean;
    const auto& last = records.back()->mean;
    std::vector<double> m(first.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = last[i] - first[i];
    out.motion.push_back(std::move(m));
  }
  const auto n = out.class_ids.size();
  out.motion_distance = Matrix{n, n, std::vector<double>(n * n, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < out.motion[i].size(); ++k) {
        const double d = out.motion[i][k] - out.motion[j][k];
        acc += d * d;
      }
      out.motion_distance(i, j) = out.motion_distance(j, i) = std::sqrt(acc);
    }
  }
  if (feature_similarity) {
    const auto& f = *feature_similarity;
    if (f.rows != n || f.cols != n) {
      throw std::invalid_argument("feature similarity is " + std::to_string(f.rows) + "x" + std::to_string(f.cols) +
                                  " but the log holds " + std::to_string(n) + " classes");
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (std::abs(f(i, j) - f(j, i)) > 1e-9 * std::max(1.0, std::abs(f(i, j)))) {
          throw std::invalid_argument("feature similarity matrix is not symmetric");
        }
      }
    }
    out.pearson_r = pearson_upper_triangle(out.motion_distance, f);
  }
  return out;
}

}  // namespace vpr
