#include "vpr/memory.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>

#include "binary_io.hpp"

namespace vpr {

namespace {

constexpr char kMemoryMagic[8] = {'V', 'P', 'R', 'M', 'E', 'M', '1', '\0'};
constexpr std::uint64_t kUnlimited = std::numeric_limits<std::uint64_t>::max();

std::size_t elements_per_image(const EpisodicMemory::ExemplarMap& exemplars) {
  for (const auto& [cls, images] : exemplars) {
    if (!images.empty()) return images.front().pixels.size();
  }
  return 0;
}

}  // namespace

EpisodicMemory::EpisodicMemory(std::optional<std::size_t> budget_elements) : budget_(budget_elements) {}

std::size_t EpisodicMemory::quota_for(std::size_t classes_seen, std::size_t per_image) const {
  if (!budget_) throw std::logic_error("quota_for: memory has no budget");
  if (classes_seen == 0 || per_image == 0) throw std::invalid_argument("quota_for: nothing to allocate");
  const std::size_t quota = *budget_ / (classes_seen * per_image);
  if (quota < 1) {
    throw std::invalid_argument("exemplar budget of " + std::to_string(*budget_) + " reals cannot hold one image of " +
                                std::to_string(per_image) + " reals for each of " + std::to_string(classes_seen) +
                                " classes");
  }
  return quota;
}

void EpisodicMemory::store_exemplars(const ExemplarMap& images_per_class, std::size_t per_class_quota, Rng& rng) {
  if (per_class_quota < 1) throw std::invalid_argument("store_exemplars: quota must be at least 1");
  EpisodicMemory next = *this;
  for (const auto& [cls, images] : images_per_class) {
    if (images.empty()) throw std::invalid_argument("store_exemplars: class " + std::to_string(cls) + " has no images");
    const auto take = std::min(per_class_quota, images.size());
    auto& slot = next.exemplars_[cls];
    for (auto i : rng.sample_without_replacement(images.size(), take)) slot.push_back(images[i]);
  }
  const auto per_image = elements_per_image(next.exemplars_);
  for (const auto& [cls, images] : next.exemplars_) {
    for (const auto& img : images) {
      if (img.pixels.size() != per_image) throw std::invalid_argument("store_exemplars: mixed image sizes");
    }
  }
  if (budget_ && next.exemplar_elements() > *budget_) next.rebalance(next.exemplars_.size(), rng);
  *this = std::move(next);
}

void EpisodicMemory::store_prototypes(std::span<const VariationalPrototype> prototypes) {
  std::set<PrototypeKey> incoming;
  const auto d = latent_dim();
  for (const auto& p : prototypes) {
    const PrototypeKey key{p.task_id, p.class_id};
    if (prototypes_.count(key) || !incoming.insert(key).second) {
      throw std::invalid_argument("prototype for (task " + std::to_string(p.task_id) + ", class " +
                                  std::to_string(p.class_id) + ") is already stored");
    }
    if (p.mean.rank() != 2 || p.mean.dim(0) != 1 || p.mean.shape() != p.logvar.shape()) {
      throw std::invalid_argument("store_prototypes: prototype must hold [1, D] mean and logvar");
    }
    if (d != 0 && p.dim() != d) throw std::invalid_argument("store_prototypes: latent dimension mismatch");
  }
  for (const auto& p : prototypes) prototypes_.emplace(PrototypeKey{p.task_id, p.class_id}, p.detached());
}

void EpisodicMemory::rebalance(std::size_t classes_seen, Rng& rng) {
  const auto per_image = elements_per_image(exemplars_);
  if (per_image == 0) return;
  const auto quota = quota_for(std::max(classes_seen, exemplars_.size()), per_image);
  for (auto& [cls, images] : exemplars_) {
    if (images.size() <= quota) continue;
    auto keep = rng.sample_without_replacement(images.size(), quota);
    std::sort(keep.begin(), keep.end());
    std::vector<Image> kept;
    kept.reserve(quota);
    for (auto i : keep) kept.push_back(std::move(images[i]));
    images = std::move(kept);
  }
}

std::vector<VariationalPrototype> EpisodicMemory::prototypes_for_task(int task_id) const {
  std::vector<VariationalPrototype> out;
  for (auto it = prototypes_.lower_bound({task_id, std::numeric_limits<int>::min()});
       it != prototypes_.end() && it->first.first == task_id; ++it) {
    out.push_back(it->second);
  }
  return out;
}

std::optional<VariationalPrototype> EpisodicMemory::latest_prototype(int class_id) const {
  std::optional<VariationalPrototype> best;
  for (const auto& [key, p] : prototypes_) {
    if (key.second == class_id) best = p;  // map order: ascending task
  }
  return best;
}

std::optional<VariationalPrototype> EpisodicMemory::prototype(int task_id, int class_id) const {
  auto it = prototypes_.find({task_id, class_id});
  if (it == prototypes_.end()) return std::nullopt;
  return it->second;
}

std::vector<int> EpisodicMemory::tasks() const {
  std::vector<int> out;
  for (const auto& [key, p] : prototypes_) {
    if (out.empty() || out.back() != key.first) out.push_back(key.first);
  }
  return out;
}

std::vector<int> EpisodicMemory::classes() const {
  std::set<int> all;
  for (const auto& [cls, images] : exemplars_) all.insert(cls);
  for (const auto& [key, p] : prototypes_) all.insert(key.second);
  return {all.begin(), all.end()};
}

std::size_t EpisodicMemory::exemplar_count() const {
  std::size_t n = 0;
  for (const auto& [cls, images] : exemplars_) n += images.size();
  return n;
}

std::size_t EpisodicMemory::exemplar_elements() const {
  std::size_t n = 0;
  for (const auto& [cls, images] : exemplars_) {
    for (const auto& img : images) n += img.pixels.size();
  }
  return n;
}

std::size_t EpisodicMemory::latent_dim() const {
  return prototypes_.empty() ? 0 : prototypes_.begin()->second.dim();
}

void EpisodicMemory::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  InputShape shape{0, 0, 0};
  for (const auto& [cls, images] : exemplars_) {
    if (!images.empty()) {
      shape = images.front().shape;
      break;
    }
  }
  const auto d = latent_dim();
  io::put_magic(out, kMemoryMagic);
  io::put_u64(out, d);
  io::put_u64(out, budget_ ? *budget_ : kUnlimited);
  io::put_u64(out, exemplar_count());
  io::put_u64(out, prototypes_.size());
  io::put_u64(out, shape.channels);
  io::put_u64(out, shape.height);
  io::put_u64(out, shape.width);
  for (const auto& [cls, images] : exemplars_) {
    for (const auto& img : images) {
      io::put_i64(out, cls);
      io::put_i64(out, img.task);
      io::put_i64(out, img.index);
    }
  }
  for (const auto& [key, p] : prototypes_) {
    io::put_i64(out, key.first);
    io::put_i64(out, key.second);
  }
  for (const auto& [cls, images] : exemplars_) {
    for (const auto& img : images) {
      for (double v : img.pixels) io::put_f64(out, v);
    }
  }
  for (const auto& [key, p] : prototypes_) {
    for (double v : p.mean.data()) io::put_f64(out, v);
    for (double v : p.logvar.data()) io::put_f64(out, v);
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

EpisodicMemory EpisodicMemory::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  io::expect_magic(in, kMemoryMagic, path.string());
  const auto d = io::get_u64(in, "latent dimension");
  const auto budget = io::get_u64(in, "budget");
  const auto n_ex = io::get_u64(in, "exemplar count");
  const auto n_proto = io::get_u64(in, "prototype count");
  InputShape shape;
  shape.channels = io::get_u64(in, "channels");
  shape.height = io::get_u64(in, "height");
  shape.width = io::get_u64(in, "width");
  // Guard against garbage headers before allocating.
  const auto file_size = std::filesystem::file_size(path);
  if (n_ex > file_size / 24 || n_proto > file_size / 16 || (n_proto > 0 && (d == 0 || d > file_size / 16)) ||
      (n_ex > 0 && shape.size() == 0)) {
    throw std::runtime_error(path.string() + ": header counts inconsistent with file size");
  }

  EpisodicMemory mem(budget == kUnlimited ? std::nullopt : std::optional<std::size_t>(budget));
  std::vector<Image> images(n_ex);
  std::vector<int> classes(n_ex);
  for (auto& img : images) {
    const auto i = static_cast<std::size_t>(&img - images.data());
    classes[i] = static_cast<int>(io::get_i64(in, "exemplar class"));
    img.label = classes[i];
    img.task = static_cast<int>(io::get_i64(in, "exemplar task"));
    img.index = static_cast<int>(io::get_i64(in, "exemplar index"));
    img.shape = shape;
  }
  std::vector<PrototypeKey> keys(n_proto);
  for (auto& k : keys) {
    k.first = static_cast<int>(io::get_i64(in, "prototype task"));
    k.second = static_cast<int>(io::get_i64(in, "prototype class"));
  }
  for (auto& img : images) {
    img.pixels.resize(shape.size());
    for (auto& v : img.pixels) v = io::get_f64(in, "exemplar pixels");
  }
  for (std::size_t i = 0; i < n_ex; ++i) mem.exemplars_[classes[i]].push_back(std::move(images[i]));
  for (const auto& k : keys) {
    std::vector<double> mean(d), logvar(d);
    for (auto& v : mean) v = io::get_f64(in, "prototype mean");
    for (auto& v : logvar) v = io::get_f64(in, "prototype logvar");
    VariationalPrototype p{k.first, k.second, Tensor::row(std::move(mean)), Tensor::row(std::move(logvar))};
    if (!mem.prototypes_.emplace(k, std::move(p)).second) {
      throw std::runtime_error(path.string() + ": duplicate prototype key");
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error(path.string() + ": trailing bytes");
  return mem;
}

bool EpisodicMemory::operator==(const EpisodicMemory& other) const {
  if (budget_ != other.budget_ || exemplars_ != other.exemplars_) return false;
  if (prototypes_.size() != other.prototypes_.size()) return false;
  auto a = prototypes_.begin();
  auto b = other.prototypes_.begin();
  for (; a != prototypes_.end(); ++a, ++b) {
    if (a->first != b->first) return false;
    const auto& p = a->second;
    const auto& q = b->second;
    if (p.task_id != q.task_id || p.class_id != q.class_id) return false;
    if (p.mean.to_vector() != q.mean.to_vector() || p.logvar.to_vector() != q.logvar.to_vector()) return false;
  }
  return true;
}

FootprintReport memory_footprint(const NetworkSpec& network, const EpisodicMemory& memory, FootprintMode mode) {
  FootprintReport r;
  r.network_params = network.parameter_count();
  switch (mode) {
    case FootprintMode::baseline_regularizer:
      // One stored value per parameter (previous weights or importance).
      r.regularizer_params = r.network_params;
      break;
    case FootprintMode::baseline_sgd:
      break;
    case FootprintMode::ours: {
      r.exemplar_elements = memory.exemplar_elements();
      const auto d = memory.latent_dim();
      std::set<int> classes;
      for (const auto& [key, p] : memory.prototype_history()) classes.insert(key.second);
      r.prototype_elements = classes.size() * 2 * d;
      r.prototype_history_elements = memory.prototype_history().size() * 2 * d;
      break;
    }
  }
  r.total = r.network_params + r.regularizer_params + r.exemplar_elements + r.prototype_elements;
  return r;
}

}  // namespace vpr
