#include "vpr/encoder.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "binary_io.hpp"
#include "vpr/rng.hpp"

namespace vpr {

namespace {

constexpr std::size_t kNoSlot = std::numeric_limits<std::size_t>::max();
constexpr char kEncoderMagic[8] = {'V', 'P', 'R', 'E', 'N', 'C', '1', '\0'};

}  // namespace

LayerSpec LayerSpec::conv(std::size_t in, std::size_t out, std::size_t kernel, std::size_t padding) {
  return {LayerKind::conv, in, out, kernel, padding};
}

LayerSpec LayerSpec::fc(std::size_t in, std::size_t out) { return {LayerKind::fully_connected, in, out, 0, 0}; }

std::size_t LayerSpec::weight_count() const {
  switch (kind) {
    case LayerKind::conv:
      return in * out * kernel * kernel;
    case LayerKind::fully_connected:
      return in * out;
    default:
      return 0;
  }
}

std::size_t LayerSpec::bias_count() const { return has_parameters() ? out : 0; }

std::string to_string(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::conv:
      return "conv(" + std::to_string(l.in) + "," + std::to_string(l.out) + "," + std::to_string(l.kernel) +
             ",pad " + std::to_string(l.padding) + ")";
    case LayerKind::fully_connected:
      return "fc(" + std::to_string(l.in) + "," + std::to_string(l.out) + ")";
    case LayerKind::relu:
      return "relu";
    case LayerKind::maxpool2x2:
      return "maxpool2x2";
    case LayerKind::flatten:
      return "flatten";
  }
  return "?";
}

std::vector<Shape> NetworkSpec::layer_output_shapes() const {
  Shape cur{input.channels, input.height, input.width};
  std::vector<Shape> shapes;
  shapes.reserve(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const auto fail = [&](const std::string& why) {
      throw std::invalid_argument("layer " + std::to_string(i) + " " + to_string(l) + ": " + why +
                                  " (input shape " + vpr::to_string(cur) + ")");
    };
    switch (l.kind) {
      case LayerKind::conv: {
        if (cur.size() != 3 || cur[0] != l.in) fail("channel mismatch");
        if (cur[1] + 2 * l.padding < l.kernel || cur[2] + 2 * l.padding < l.kernel) fail("kernel larger than input");
        cur = {l.out, cur[1] + 2 * l.padding - l.kernel + 1, cur[2] + 2 * l.padding - l.kernel + 1};
        break;
      }
      case LayerKind::maxpool2x2:
        if (cur.size() != 3 || cur[1] < 2 || cur[2] < 2) fail("needs a spatial input of at least 2x2");
        cur = {cur[0], cur[1] / 2, cur[2] / 2};
        break;
      case LayerKind::flatten:
        cur = {numel(cur)};
        break;
      case LayerKind::fully_connected:
        if (cur.size() != 1) fail("expects a flattened input");
        if (cur[0] != l.in) fail("input size mismatch");
        cur = {l.out};
        break;
      case LayerKind::relu:
        break;
    }
    shapes.push_back(cur);
  }
  return shapes;
}

std::size_t NetworkSpec::output_size() const {
  const auto shapes = layer_output_shapes();
  if (shapes.empty()) return input.size();
  return numel(shapes.back());
}

std::size_t NetworkSpec::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight_count();
  return n;
}

std::size_t NetworkSpec::bias_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.bias_count();
  return n;
}

std::optional<Architecture> parse_architecture(std::string_view name) {
  if (name == "cifar_like_32") return Architecture::cifar_like_32;
  if (name == "mnist_like_28") return Architecture::mnist_like_28;
  if (name == "synthetic_vector") return Architecture::synthetic_vector;
  return std::nullopt;
}

std::string_view to_string(Architecture arch) {
  switch (arch) {
    case Architecture::cifar_like_32:
      return "cifar_like_32";
    case Architecture::mnist_like_28:
      return "mnist_like_28";
    case Architecture::synthetic_vector:
      return "synthetic_vector";
  }
  return "?";
}

NetworkSpec reference_architecture(Architecture arch, const ArchitectureOptions& options) {
  if (options.latent_dim == 0) throw std::invalid_argument("reference_architecture: latent_dim must be positive");
  const auto out = 2 * options.latent_dim;
  NetworkSpec spec;
  switch (arch) {
    case Architecture::cifar_like_32:
      spec.input = {3, 32, 32};
      spec.layers = {LayerSpec::conv(3, 20, 5, 2),  LayerSpec::relu(),    LayerSpec::maxpool(),
                     LayerSpec::conv(20, 50, 5, 2), LayerSpec::relu(),    LayerSpec::maxpool(),
                     LayerSpec::flatten(),          LayerSpec::fc(3200, 500), LayerSpec::relu(),
                     LayerSpec::fc(500, out)};
      break;
    case Architecture::mnist_like_28: {
      const auto hidden = options.hidden ? options.hidden : 100;
      spec.input = {1, 28, 28};
      spec.layers = {LayerSpec::flatten(), LayerSpec::fc(784, hidden), LayerSpec::relu(), LayerSpec::fc(hidden, out)};
      break;
    }
    case Architecture::synthetic_vector: {
      if (options.input_dim == 0) throw std::invalid_argument("synthetic_vector needs a positive input_dim");
      const auto hidden = options.hidden ? options.hidden : 64;
      spec.input = {1, 1, options.input_dim};
      spec.layers = {LayerSpec::flatten(), LayerSpec::fc(options.input_dim, hidden), LayerSpec::relu(),
                     LayerSpec::fc(hidden, out)};
      break;
    }
  }
  spec.layer_output_shapes();
  return spec;
}

// ---------------------------------------------------------------------------

EncoderParams EncoderParams::initialize(NetworkSpec spec, std::size_t latent_dim, std::uint64_t seed) {
  const auto out = spec.output_size();
  if (latent_dim > 0 && out != 2 * latent_dim) {
    throw std::invalid_argument("encoder output size " + std::to_string(out) + " != 2 * latent_dim (" +
                                std::to_string(2 * latent_dim) + ")");
  }
  EncoderParams p;
  p.spec_ = std::move(spec);
  p.latent_dim_ = latent_dim;
  Rng rng(seed);
  for (const auto& l : p.spec_.layers) {
    if (!l.has_parameters()) {
      p.slot_.push_back(kNoSlot);
      continue;
    }
    double fan_in, fan_out;
    Shape wshape;
    if (l.kind == LayerKind::conv) {
      fan_in = static_cast<double>(l.in * l.kernel * l.kernel);
      fan_out = static_cast<double>(l.out * l.kernel * l.kernel);
      wshape = {l.out, l.in, l.kernel, l.kernel};
    } else {
      fan_in = static_cast<double>(l.in);
      fan_out = static_cast<double>(l.out);
      wshape = {l.in, l.out};
    }
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::vector<double> w(numel(wshape));
    for (auto& v : w) v = rng.uniform(-limit, limit);
    p.slot_.push_back(p.params_.size());
    p.params_.emplace_back(std::move(wshape), std::move(w), true);
    Shape bshape = l.kind == LayerKind::conv ? Shape{l.out} : Shape{1, l.out};
    p.params_.push_back(Tensor::zeros(std::move(bshape), true));
  }
  return p;
}

Tensor EncoderParams::forward(const Tensor& batch) const { return forward_prefix(batch, 0); }

Tensor EncoderParams::forward_prefix(const Tensor& batch, std::size_t skip_last) const {
  const auto& in = spec_.input;
  // A leading flatten only needs the element count to agree.
  const bool flat_first = !spec_.layers.empty() && spec_.layers.front().kind == LayerKind::flatten;
  const bool matches = batch.rank() == 4 && (flat_first ? batch.dim(1) * batch.dim(2) * batch.dim(3) == in.size()
                                                        : batch.dim(1) == in.channels && batch.dim(2) == in.height &&
                                                              batch.dim(3) == in.width);
  if (!matches) {
    throw std::invalid_argument("encoder input shape " + to_string(batch.shape()) + " does not match [n, " +
                                std::to_string(in.channels) + ", " + std::to_string(in.height) + ", " +
                                std::to_string(in.width) + "]");
  }
  if (skip_last > spec_.layers.size()) throw std::invalid_argument("forward_prefix: too many layers skipped");
  Tensor x = batch;
  const std::size_t n = batch.dim(0);
  const std::size_t upto = spec_.layers.size() - skip_last;
  for (std::size_t i = 0; i < upto; ++i) {
    const auto& l = spec_.layers[i];
    switch (l.kind) {
      case LayerKind::conv:
        x = conv2d(x, params_[slot_[i]], params_[slot_[i] + 1], l.padding);
        break;
      case LayerKind::fully_connected:
        if (x.rank() != 2) x = reshape(x, {n, x.numel() / n});
        x = matmul(x, params_[slot_[i]]) + params_[slot_[i] + 1];
        break;
      case LayerKind::relu:
        x = relu(x);
        break;
      case LayerKind::maxpool2x2:
        x = maxpool2x2(x);
        break;
      case LayerKind::flatten:
        x = reshape(x, {n, x.numel() / n});
        break;
    }
  }
  if (x.rank() != 2) x = reshape(x, {n, x.numel() / n});
  return x;
}

EncoderParams EncoderParams::clone() const {
  EncoderParams p;
  p.spec_ = spec_;
  p.latent_dim_ = latent_dim_;
  p.slot_ = slot_;
  p.params_.reserve(params_.size());
  for (const auto& t : params_) p.params_.push_back(t.clone(t.requires_grad()));
  return p;
}

void EncoderParams::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  io::put_magic(out, kEncoderMagic);
  io::put_u64(out, latent_dim_);
  io::put_u64(out, spec_.input.channels);
  io::put_u64(out, spec_.input.height);
  io::put_u64(out, spec_.input.width);
  io::put_u64(out, spec_.layers.size());
  for (const auto& l : spec_.layers) {
    io::put_u64(out, static_cast<std::uint64_t>(l.kind));
    io::put_u64(out, l.in);
    io::put_u64(out, l.out);
    io::put_u64(out, l.kernel);
    io::put_u64(out, l.padding);
  }
  for (const auto& t : params_) {
    for (double v : t.data()) io::put_f64(out, v);
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

EncoderParams EncoderParams::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  io::expect_magic(in, kEncoderMagic, path.string());
  NetworkSpec spec;
  const auto latent = io::get_u64(in, "latent_dim");
  spec.input.channels = io::get_u64(in, "channels");
  spec.input.height = io::get_u64(in, "height");
  spec.input.width = io::get_u64(in, "width");
  const auto nlayers = io::get_u64(in, "layer count");
  if (nlayers > 4096) throw std::runtime_error(path.string() + ": implausible layer count");
  for (std::uint64_t i = 0; i < nlayers; ++i) {
    LayerSpec l;
    const auto kind = io::get_u64(in, "layer kind");
    if (kind > static_cast<std::uint64_t>(LayerKind::flatten)) throw std::runtime_error(path.string() + ": bad layer kind");
    l.kind = static_cast<LayerKind>(kind);
    l.in = io::get_u64(in, "layer in");
    l.out = io::get_u64(in, "layer out");
    l.kernel = io::get_u64(in, "layer kernel");
    l.padding = io::get_u64(in, "layer padding");
    spec.layers.push_back(l);
  }
  auto p = initialize(std::move(spec), latent, 0);
  for (auto& t : p.params_) {
    for (auto& v : t.mutable_data()) v = io::get_f64(in, "parameters");
  }
  return p;
}

// ---------------------------------------------------------------------------

Tensor images_to_batch(std::span<const Image> images) {
  if (images.empty()) throw std::invalid_argument("images_to_batch: empty image list");
  const auto shape = images.front().shape;
  std::vector<double> data;
  data.reserve(images.size() * shape.size());
  for (const auto& img : images) {
    if (img.shape != shape || img.pixels.size() != shape.size()) {
      throw std::invalid_argument("images_to_batch: images have mixed shapes");
    }
    data.insert(data.end(), img.pixels.begin(), img.pixels.end());
  }
  return Tensor({images.size(), shape.channels, shape.height, shape.width}, std::move(data));
}

VariationalEmbedding encode_batch(const EncoderParams& params, std::span<const Image> images) {
  const auto d = params.latent_dim();
  if (d == 0) throw std::logic_error("encode: encoder has no latent split");
  const Tensor out = params.forward(images_to_batch(images));
  return {slice_cols(out, 0, d), clamp(slice_cols(out, d, 2 * d), kLogvarMin, kLogvarMax)};
}

VariationalEmbedding encode(const EncoderParams& params, const Image& image) {
  return encode_batch(params, std::span<const Image>(&image, 1));
}

// ---------------------------------------------------------------------------

std::size_t BaselineClassifier::num_classes() const { return spec_.layers.back().out; }

Tensor BaselineClassifier::logits(const Tensor& batch) const { return params_.forward(batch); }

void BaselineClassifier::grow(std::size_t num_classes, std::uint64_t seed) {
  const auto old_classes = this->num_classes();
  if (num_classes < old_classes) throw std::invalid_argument("BaselineClassifier::grow cannot shrink the head");
  if (num_classes == old_classes) return;
  auto& head = spec_.layers.back();
  const auto hidden = head.in;
  NetworkSpec grown = spec_;
  grown.layers.back().out = num_classes;
  auto fresh = EncoderParams::initialize(grown, 0, seed);

  // Copy everything but the head verbatim, then the old head columns.
  auto src = params_.parameters();
  auto dst = fresh.parameters();
  for (std::size_t i = 0; i + 2 < src.size(); ++i) {
    auto from = src[i].data();
    std::copy(from.begin(), from.end(), dst[i].mutable_data().begin());
  }
  const auto& w_old = src[src.size() - 2];
  const auto& b_old = src[src.size() - 1];
  auto w_new = dst[dst.size() - 2].mutable_data();
  auto b_new = dst[dst.size() - 1].mutable_data();
  for (std::size_t r = 0; r < hidden; ++r) {
    for (std::size_t c = 0; c < old_classes; ++c) w_new[r * num_classes + c] = w_old.data()[r * old_classes + c];
  }
  for (std::size_t c = 0; c < old_classes; ++c) b_new[c] = b_old.data()[c];
  spec_ = std::move(grown);
  params_ = std::move(fresh);
}

BaselineClassifier BaselineClassifier::clone() const {
  BaselineClassifier c;
  c.spec_ = spec_;
  c.params_ = params_.clone();
  return c;
}

BaselineClassifier baseline_head(const EncoderParams& encoder, std::size_t num_classes, std::uint64_t seed) {
  if (num_classes < 2) throw std::invalid_argument("baseline_head: num_classes must be at least 2");
  const auto& layers = encoder.spec().layers;
  if (layers.empty() || layers.back().kind != LayerKind::fully_connected) {
    throw std::invalid_argument("baseline_head: encoder must end in a fully connected layer");
  }
  BaselineClassifier c;
  c.spec_ = encoder.spec();
  c.spec_.layers.back().out = num_classes;
  auto fresh = EncoderParams::initialize(c.spec_, 0, seed);
  // Shared trunk starts from the encoder's weights.
  auto src = encoder.parameters();
  auto dst = fresh.parameters();
  for (std::size_t i = 0; i + 2 < src.size(); ++i) {
    auto from = src[i].data();
    std::copy(from.begin(), from.end(), dst[i].mutable_data().begin());
  }
  c.params_ = std::move(fresh);
  return c;
}

}  // namespace vpr
