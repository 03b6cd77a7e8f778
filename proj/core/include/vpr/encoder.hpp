#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vpr/image.hpp"
#include "vpr/proto.hpp"
#include "vpr/tensor.hpp"

namespace vpr {

enum class LayerKind { conv, fully_connected, relu, maxpool2x2, flatten };

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t in = 0;       // in-channels (conv) or in-size (fc)
  std::size_t out = 0;      // out-channels (conv) or out-size (fc)
  std::size_t kernel = 0;   // conv only
  std::size_t padding = 0;  // conv only

  static LayerSpec conv(std::size_t in, std::size_t out, std::size_t kernel, std::size_t padding);
  static LayerSpec fc(std::size_t in, std::size_t out);
  static LayerSpec relu() { return {LayerKind::relu}; }
  static LayerSpec maxpool() { return {LayerKind::maxpool2x2}; }
  static LayerSpec flatten() { return {LayerKind::flatten}; }

  bool has_parameters() const { return kind == LayerKind::conv || kind == LayerKind::fully_connected; }
  // Weight elements, excluding the bias.
  std::size_t weight_count() const;
  std::size_t bias_count() const;

  bool operator==(const LayerSpec&) const = default;
};

std::string to_string(const LayerSpec& layer);

struct NetworkSpec {
  InputShape input;
  std::vector<LayerSpec> layers;

  // Per-sample output shape after every layer; throws on incompatible layers.
  std::vector<Shape> layer_output_shapes() const;
  std::size_t output_size() const;
  // Closed-form weight count with no bias terms.
  std::size_t parameter_count() const;
  std::size_t bias_count() const;
};

enum class Architecture { cifar_like_32, mnist_like_28, synthetic_vector };

std::optional<Architecture> parse_architecture(std::string_view name);
std::string_view to_string(Architecture arch);

struct ArchitectureOptions {
  std::size_t latent_dim = 500;
  // Input length of synthetic_vector.
  std::size_t input_dim = 0;
  // Hidden width of the fully connected stacks; 0 selects the default
  // (100 for mnist_like_28, 64 for synthetic_vector).
  std::size_t hidden = 0;
};

// cifar_like_32:  conv(3,20,5,pad 2) relu pool conv(20,50,5,pad 2) relu pool
//                 flatten fc(3200,500) relu fc(500, 2D)
// mnist_like_28:  flatten fc(784,H) relu fc(H, 2D)          H = 100
// synthetic_vector: flatten fc(n,H) relu fc(H, 2D)          H = 64
NetworkSpec reference_architecture(Architecture arch, const ArchitectureOptions& options = {});

// Encoder weights. Parameters are leaf tensors shared by handle; clone()
// gives an independent copy.
class EncoderParams {
 public:
  // Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  static EncoderParams initialize(NetworkSpec spec, std::size_t latent_dim, std::uint64_t seed);

  const NetworkSpec& spec() const { return spec_; }
  std::size_t latent_dim() const { return latent_dim_; }

  // Weights and biases in layer order (weight, bias, weight, bias, ...).
  std::span<Tensor> parameters() { return params_; }
  std::span<const Tensor> parameters() const { return params_; }

  // [n, c, h, w] batch to [n, output_size].
  Tensor forward(const Tensor& batch) const;
  // Same, stopping before the last `skip_last` layers.
  Tensor forward_prefix(const Tensor& batch, std::size_t skip_last) const;

  EncoderParams clone() const;
  void save(const std::filesystem::path& path) const;
  static EncoderParams load(const std::filesystem::path& path);

 private:
  NetworkSpec spec_;
  std::size_t latent_dim_ = 0;
  std::vector<Tensor> params_;
  // For each layer, index of its weight in params_, or npos.
  std::vector<std::size_t> slot_;
};

// Stack images into an [n, c, h, w] constant tensor.
Tensor images_to_batch(std::span<const Image> images);

// Log-variances are clamped to this range before use.
inline constexpr double kLogvarMin = -10.0;
inline constexpr double kLogvarMax = 10.0;

VariationalEmbedding encode(const EncoderParams& params, const Image& image);
VariationalEmbedding encode_batch(const EncoderParams& params, std::span<const Image> images);

// Softmax classifier used by the baselines: the encoder trunk without its
// last fully connected layer, plus fc(hidden, num_classes).
class BaselineClassifier {
 public:
  const NetworkSpec& spec() const { return spec_; }
  std::size_t num_classes() const;
  std::span<Tensor> parameters() { return params_.parameters(); }
  std::span<const Tensor> parameters() const { return params_.parameters(); }
  std::size_t parameter_count() const { return spec_.parameter_count(); }

  // [n, c, h, w] to [n, num_classes] logits.
  Tensor logits(const Tensor& batch) const;
  // Widen the head to `num_classes`, keeping the existing rows' weights.
  void grow(std::size_t num_classes, std::uint64_t seed);
  BaselineClassifier clone() const;

 private:
  friend BaselineClassifier baseline_head(const EncoderParams&, std::size_t, std::uint64_t);
  NetworkSpec spec_;
  EncoderParams params_;
};

BaselineClassifier baseline_head(const EncoderParams& encoder, std::size_t num_classes, std::uint64_t seed);

}  // namespace vpr
