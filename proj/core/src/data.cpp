#include "vpr/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

#include "vpr/rng.hpp"

namespace vpr {

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw std::runtime_error(path.string() + ": truncated header (" + what + ")");
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  out.write(b, 4);
}

std::string hex(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

std::vector<unsigned char> read_payload(std::istream& in, std::size_t count, const std::filesystem::path& path) {
  std::vector<unsigned char> bytes(count);
  if (count > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(count))) {
    throw std::runtime_error(path.string() + ": truncated, expected " + std::to_string(count) + " data bytes");
  }
  return bytes;
}

std::vector<Image> read_idx_pair(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("cannot open " + images_path.string());
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("cannot open " + labels_path.string());

  const auto magic_i = read_be32(img, images_path, "magic");
  if (magic_i != kIdxImages) {
    throw std::runtime_error(images_path.string() + ": bad magic " + hex(magic_i) + ", expected " + hex(kIdxImages));
  }
  const auto n = read_be32(img, images_path, "count");
  const auto rows = read_be32(img, images_path, "rows");
  const auto cols = read_be32(img, images_path, "cols");
  const auto magic_l = read_be32(lab, labels_path, "magic");
  if (magic_l != kIdxLabels) {
    throw std::runtime_error(labels_path.string() + ": bad magic " + hex(magic_l) + ", expected " + hex(kIdxLabels));
  }
  const auto n_labels = read_be32(lab, labels_path, "count");
  if (n != n_labels) {
    throw std::runtime_error("count mismatch: " + std::to_string(n) + " images in " + images_path.string() + " but " +
                             std::to_string(n_labels) + " labels in " + labels_path.string());
  }
  if (rows == 0 || cols == 0) throw std::runtime_error(images_path.string() + ": zero image extent");

  const std::size_t per = std::size_t{rows} * cols;
  const auto file_size = std::filesystem::file_size(images_path);
  if (file_size < 16 || (file_size - 16) / per < n) {
    throw std::runtime_error(images_path.string() + ": truncated, header declares " + std::to_string(n) +
                             " images of " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  const auto pixels = read_payload(img, per * n, images_path);
  const auto labels = read_payload(lab, n, labels_path);

  std::vector<Image> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& im = out[i];
    im.shape = {1, rows, cols};
    im.label = labels[i];
    im.index = static_cast<int>(i);
    im.pixels.resize(per);
    for (std::size_t p = 0; p < per; ++p) im.pixels[p] = pixels[i * per + p] / 255.0;
  }
  return out;
}

std::size_t count_classes(std::span<const Image> a, std::span<const Image> b) {
  int hi = -1;
  for (const auto& im : a) hi = std::max(hi, im.label);
  for (const auto& im : b) hi = std::max(hi, im.label);
  return static_cast<std::size_t>(hi + 1);
}

std::map<int, std::vector<const Image*>> by_class(std::span<const Image> images) {
  std::map<int, std::vector<const Image*>> out;
  for (const auto& im : images) out[im.label].push_back(&im);
  return out;
}

std::vector<std::vector<double>> unit_directions(std::size_t k, std::size_t dim, Rng& rng) {
  std::vector<std::vector<double>> dirs;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> v(dim);
    for (int attempt = 0;; ++attempt) {
      for (auto& x : v) x = rng.normal();
      if (c < dim) {
        for (const auto& u : dirs) {
          double dot = 0.0;
          for (std::size_t i = 0; i < dim; ++i) dot += v[i] * u[i];
          for (std::size_t i = 0; i < dim; ++i) v[i] -= dot * u[i];
        }
      }
      double norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
      if (norm > 1e-8) {
        for (auto& x : v) x /= norm;
        break;
      }
      if (attempt > 100) throw std::runtime_error("synthetic_blobs: cannot draw a direction");
    }
    dirs.push_back(std::move(v));
  }
  return dirs;
}

}  // namespace

void Dataset::validate() const {
  if (num_classes == 0) throw std::invalid_argument("dataset has no classes");
  std::vector<std::size_t> n_train(num_classes), n_test(num_classes);
  auto check = [&](const std::vector<Image>& images, std::vector<std::size_t>& counts, const char* part) {
    for (const auto& im : images) {
      if (im.label < 0 || static_cast<std::size_t>(im.label) >= num_classes) {
        throw std::invalid_argument(std::string(part) + " image with label " + std::to_string(im.label) +
                                    " outside [0, " + std::to_string(num_classes) + ")");
      }
      if (!(im.shape == shape) || im.pixels.size() != shape.size()) {
        throw std::invalid_argument(std::string(part) + " image shape differs from dataset shape");
      }
      for (double p : im.pixels) {
        if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string(part) + " pixel outside [0, 1]");
      }
      ++counts[static_cast<std::size_t>(im.label)];
    }
  };
  check(train, n_train, "train");
  check(test, n_test, "test");
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (n_train[c] == 0 || n_test[c] == 0) {
      throw std::invalid_argument("class " + std::to_string(c) + " needs at least one train and one test image");
    }
  }
}

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  Dataset d;
  d.train = read_idx_pair(images_path, labels_path);
  if (!d.train.empty()) d.shape = d.train.front().shape;
  d.num_classes = count_classes(d.train, {});
  return d;
}

Dataset load_idx(const std::filesystem::path& train_images, const std::filesystem::path& train_labels,
                 const std::filesystem::path& test_images, const std::filesystem::path& test_labels) {
  Dataset d;
  d.train = read_idx_pair(train_images, train_labels);
  d.test = read_idx_pair(test_images, test_labels);
  if (!d.train.empty()) d.shape = d.train.front().shape;
  d.num_classes = count_classes(d.train, d.test);
  d.validate();
  return d;
}

void write_idx(std::span<const Image> images, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
  if (images.empty()) throw std::invalid_argument("write_idx: no images");
  const auto shape = images.front().shape;
  if (shape.channels != 1) throw std::invalid_argument("write_idx: IDX images are single-channel");
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lab(labels_path, std::ios::binary);
  if (!img || !lab) throw std::runtime_error("write_idx: cannot open output files");
  write_be32(img, kIdxImages);
  write_be32(img, static_cast<std::uint32_t>(images.size()));
  write_be32(img, static_cast<std::uint32_t>(shape.height));
  write_be32(img, static_cast<std::uint32_t>(shape.width));
  write_be32(lab, kIdxLabels);
  write_be32(lab, static_cast<std::uint32_t>(images.size()));
  for (const auto& im : images) {
    if (!(im.shape == shape)) throw std::invalid_argument("write_idx: mixed image shapes");
    if (im.label < 0 || im.label > 255) throw std::invalid_argument("write_idx: label outside a byte");
    for (double p : im.pixels) img.put(static_cast<char>(std::lround(std::clamp(p, 0.0, 1.0) * 255.0)));
    lab.put(static_cast<char>(im.label));
  }
  if (!img || !lab) throw std::runtime_error("write_idx: write failed");
}

Dataset holdout(Dataset dataset, std::size_t per_class_test, std::uint64_t seed) {
  auto rng = Rng::derive(seed, "holdout");
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < dataset.train.size(); ++i) members[dataset.train[i].label].push_back(i);
  std::vector<bool> moved(dataset.train.size(), false);
  for (auto& [cls, idx] : members) {
    if (idx.size() <= per_class_test) {
      throw std::invalid_argument("holdout: class " + std::to_string(cls) + " has " + std::to_string(idx.size()) +
                                  " images, cannot hold out " + std::to_string(per_class_test));
    }
    for (auto k : rng.sample_without_replacement(idx.size(), per_class_test)) moved[idx[k]] = true;
  }
  std::vector<Image> keep;
  for (std::size_t i = 0; i < dataset.train.size(); ++i) {
    (moved[i] ? dataset.test : keep).push_back(std::move(dataset.train[i]));
  }
  dataset.train = std::move(keep);
  dataset.validate();
  return dataset;
}

Dataset synthetic_blobs(std::size_t num_classes, InputShape shape, std::size_t per_class_train,
                        std::size_t per_class_test, double separation, std::uint64_t seed, double noise) {
  if (num_classes == 0 || shape.size() == 0) throw std::invalid_argument("synthetic_blobs: empty configuration");
  if (!(separation >= 0.0) || !(noise > 0.0)) {
    throw std::invalid_argument("synthetic_blobs: need separation >= 0 and noise > 0");
  }
  const auto dim = shape.size();
  auto dir_rng = Rng::derive(seed, "blob-directions");
  const auto dirs = unit_directions(num_classes, dim, dir_rng);
  auto rng = Rng::derive(seed, "blob-samples");
  double peak = 0.0;
  for (const auto& u : dirs) {
    for (double v : u) peak = std::max(peak, std::abs(v));
  }
  const double half_range = 2.0 * (separation * peak + 4.0 * noise);

  Dataset d;
  d.num_classes = num_classes;
  d.shape = shape;
  auto draw = [&](std::vector<Image>& out, std::size_t per_class) {
    for (std::size_t c = 0; c < num_classes; ++c) {
      for (std::size_t n = 0; n < per_class; ++n) {
        Image im;
        im.shape = shape;
        im.label = static_cast<int>(c);
        im.index = static_cast<int>(out.size());
        im.pixels.resize(dim);
        for (std::size_t i = 0; i < dim; ++i) {
          const double x = separation * dirs[c][i] + noise * rng.normal();
          im.pixels[i] = std::clamp(0.5 + x / half_range, 0.0, 1.0);
        }
        out.push_back(std::move(im));
      }
    }
  };
  draw(d.train, per_class_train);
  draw(d.test, per_class_test);
  return d;
}

Dataset synthetic_blobs(std::size_t num_classes, std::size_t dim, std::size_t per_class_train,
                        std::size_t per_class_test, double separation, std::uint64_t seed, double noise) {
  return synthetic_blobs(num_classes, InputShape{1, 1, dim}, per_class_train, per_class_test, separation, seed,
                         noise);
}

void export_csv(std::span<const Image> images, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const auto n = images.empty() ? 0 : images.front().pixels.size();
  out << "label";
  for (std::size_t i = 0; i < n; ++i) out << ",p" << i;
  out << '\n';
  out.precision(17);
  for (const auto& im : images) {
    if (im.pixels.size() != n) throw std::invalid_argument("export_csv: mixed image sizes");
    out << im.label;
    for (double p : im.pixels) out << ',' << p;
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<Image> import_csv(const std::filesystem::path& path, InputShape shape) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("label", 0) != 0) {
    throw std::runtime_error(path.string() + ": missing 'label,...' header");
  }
  std::vector<Image> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    Image im;
    im.shape = shape;
    im.index = static_cast<int>(out.size());
    bool first = true;
    while (std::getline(row, cell, ',')) {
      try {
        if (first) {
          im.label = std::stoi(cell);
          first = false;
        } else {
          im.pixels.push_back(std::stod(cell));
        }
      } catch (const std::exception&) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": bad number '" + cell + "'");
      }
    }
    if (im.pixels.size() != shape.size()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(shape.size()) + " pixels, found " + std::to_string(im.pixels.size()));
    }
    out.push_back(std::move(im));
  }
  return out;
}

double nearest_class_mean_accuracy(std::span<const Image> train, std::span<const Image> test) {
  if (train.empty() || test.empty()) throw std::invalid_argument("nearest_class_mean_accuracy: empty input");
  const auto groups = by_class(train);
  std::map<int, std::vector<double>> means;
  for (const auto& [cls, members] : groups) {
    std::vector<double> m(members.front()->pixels.size(), 0.0);
    for (const auto* im : members) {
      for (std::size_t i = 0; i < m.size(); ++i) m[i] += im->pixels[i];
    }
    for (auto& v : m) v /= static_cast<double>(members.size());
    means.emplace(cls, std::move(m));
  }
  std::size_t correct = 0;
  for (const auto& im : test) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& [cls, m] : means) {
      double d = 0.0;
      for (std::size_t i = 0; i < m.size(); ++i) d += (im.pixels[i] - m[i]) * (im.pixels[i] - m[i]);
      if (d < best_d) {
        best_d = d;
        best = cls;
      }
    }
    correct += best == im.label;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

void ProtocolSchedule::validate() const {
  if (tasks.empty()) throw std::invalid_argument("protocol has no tasks");
  std::set<int> seen;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& t = tasks[i];
    if (t.class_ids.empty()) throw std::invalid_argument("task " + std::to_string(t.task_id) + " has no classes");
    if (t.permutation && !is_permutation(*t.permutation)) {
      throw std::invalid_argument("task " + std::to_string(t.task_id) + " transform is not a permutation");
    }
    if (kind == ProtocolKind::incremental_class) {
      for (int c : t.class_ids) {
        if (!seen.insert(c).second) {
          throw std::invalid_argument("class " + std::to_string(c) + " repeats in task " + std::to_string(t.task_id) +
                                      " of an incremental-class protocol");
        }
      }
    } else if (t.class_ids != tasks.front().class_ids) {
      throw std::invalid_argument("incremental-domain task " + std::to_string(t.task_id) +
                                  " changes the class set");
    }
  }
}

ProtocolSchedule permuted_protocol(const Dataset& base, std::size_t num_tasks, std::uint64_t seed,
                                   std::size_t train_quota) {
  if (num_tasks == 0) throw std::invalid_argument("permuted_protocol: need at least one task");
  ProtocolSchedule s;
  s.kind = ProtocolKind::incremental_domain;
  std::vector<int> classes(base.num_classes);
  for (std::size_t c = 0; c < classes.size(); ++c) classes[c] = static_cast<int>(c);
  const auto positions = base.shape.height * base.shape.width;
  for (std::size_t t = 0; t < num_tasks; ++t) {
    TaskSpec spec;
    spec.task_id = static_cast<int>(t + 1);
    spec.class_ids = classes;
    spec.train_quota = train_quota;
    if (t == 0) {
      std::vector<std::size_t> identity(positions);
      for (std::size_t i = 0; i < positions; ++i) identity[i] = i;
      spec.permutation = std::move(identity);
    } else {
      auto rng = Rng::derive(seed, "permutation-" + std::to_string(t + 1));
      spec.permutation = rng.permutation(positions);
    }
    s.tasks.push_back(std::move(spec));
  }
  return s;
}

ProtocolSchedule split_protocol(const Dataset& base, const SplitOptions& options, std::uint64_t seed) {
  std::vector<std::size_t> sizes;
  std::size_t first_quota = 0, quota = 0;
  switch (options.kind) {
    case SplitKind::cifar_like:
      if (base.num_classes < 2) throw std::invalid_argument("cifar_like split needs at least 2 classes");
      sizes.push_back(2);
      for (std::size_t c = 2; c < base.num_classes; ++c) sizes.push_back(1);
      first_quota = quota = 10;
      break;
    case SplitKind::imagenet_like:
      sizes.assign(10, 10);
      first_quota = 480;
      quota = 10;
      break;
    case SplitKind::custom:
      sizes = options.classes_per_task;
      if (sizes.empty() || std::count(sizes.begin(), sizes.end(), 0u) > 0) {
        throw std::invalid_argument("custom split needs a non-empty list of positive class counts");
      }
      break;
  }
  if (options.first_task_quota) first_quota = *options.first_task_quota;
  if (options.quota) quota = *options.quota;

  std::size_t needed = 0;
  for (auto n : sizes) needed += n;
  if (needed > base.num_classes) {
    throw std::invalid_argument("split schedule needs " + std::to_string(needed) + " classes, dataset has " +
                                std::to_string(base.num_classes));
  }
  std::vector<int> order(base.num_classes);
  for (std::size_t c = 0; c < order.size(); ++c) order[c] = static_cast<int>(c);
  if (options.shuffle_classes) {
    auto rng = Rng::derive(seed, "class-order");
    rng.shuffle(order);
  }

  ProtocolSchedule s;
  s.kind = ProtocolKind::incremental_class;
  std::size_t next = 0;
  for (std::size_t t = 0; t < sizes.size(); ++t) {
    TaskSpec spec;
    spec.task_id = static_cast<int>(t + 1);
    spec.class_ids.assign(order.begin() + static_cast<std::ptrdiff_t>(next),
                          order.begin() + static_cast<std::ptrdiff_t>(next + sizes[t]));
    next += sizes[t];
    spec.train_quota = t == 0 ? first_quota : quota;
    s.tasks.push_back(std::move(spec));
  }
  return s;
}

std::optional<ProtocolKind> parse_protocol_kind(std::string_view name) {
  if (name == "incremental_domain" || name == "permuted") return ProtocolKind::incremental_domain;
  if (name == "incremental_class" || name == "split") return ProtocolKind::incremental_class;
  return std::nullopt;
}

std::optional<SplitKind> parse_split_kind(std::string_view name) {
  if (name == "cifar_like") return SplitKind::cifar_like;
  if (name == "imagenet_like") return SplitKind::imagenet_like;
  if (name == "custom") return SplitKind::custom;
  return std::nullopt;
}

bool is_permutation(std::span<const std::size_t> indices) {
  std::vector<bool> hit(indices.size(), false);
  for (auto i : indices) {
    if (i >= indices.size() || hit[i]) return false;
    hit[i] = true;
  }
  return true;
}

std::vector<std::size_t> invert_permutation(std::span<const std::size_t> permutation) {
  if (!is_permutation(permutation)) throw std::invalid_argument("invert_permutation: not a permutation");
  std::vector<std::size_t> inv(permutation.size());
  for (std::size_t i = 0; i < permutation.size(); ++i) inv[permutation[i]] = i;
  return inv;
}

Image apply_permutation(const Image& image, std::span<const std::size_t> permutation) {
  const auto plane = image.shape.height * image.shape.width;
  if (permutation.size() != plane) {
    throw std::invalid_argument("permutation over " + std::to_string(permutation.size()) +
                                " positions applied to a " + std::to_string(image.shape.height) + "x" +
                                std::to_string(image.shape.width) + " image");
  }
  Image out = image;
  for (std::size_t c = 0; c < image.shape.channels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) out.pixels[c * plane + i] = image.pixels[c * plane + permutation[i]];
  }
  return out;
}

TaskData materialize_task(const Dataset& dataset, const ProtocolSchedule& schedule, std::size_t task_index,
                          std::uint64_t seed) {
  if (task_index >= schedule.tasks.size()) throw std::out_of_range("materialize_task: task index out of range");
  const auto& spec = schedule.tasks[task_index];
  TaskData td;
  td.task_id = spec.task_id;
  td.class_ids = spec.class_ids;
  const std::set<int> active(spec.class_ids.begin(), spec.class_ids.end());

  auto transform = [&](const Image& im) {
    Image out = spec.permutation ? apply_permutation(im, *spec.permutation) : im;
    out.task = spec.task_id;
    return out;
  };

  const auto groups = by_class(dataset.train);
  auto rng = Rng::derive(seed, "quota-" + std::to_string(spec.task_id));
  for (int c : spec.class_ids) {
    auto it = groups.find(c);
    if (it == groups.end()) throw std::invalid_argument("task class " + std::to_string(c) + " has no train images");
    const auto& members = it->second;
    if (spec.train_quota == 0 || spec.train_quota >= members.size()) {
      for (const auto* im : members) td.train.push_back(transform(*im));
    } else {
      auto pick = rng.sample_without_replacement(members.size(), spec.train_quota);
      std::sort(pick.begin(), pick.end());
      for (auto k : pick) td.train.push_back(transform(*members[k]));
    }
  }
  for (const auto& im : dataset.test) {
    if (active.count(im.label)) td.test.push_back(transform(im));
  }
  if (td.test.empty()) throw std::invalid_argument("task " + std::to_string(spec.task_id) + " has no test images");
  return td;
}

}  // namespace vpr
