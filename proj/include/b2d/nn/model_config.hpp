#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "b2d/nn/ops.hpp"
#include "b2d/nn/tensor.hpp"

namespace b2d::nn {

enum class LayerKind { Conv2D, DepthwiseConv2D, SeparableConv2D, ReLU, MaxPool2D, BatchNorm, Flatten, Dense, Softmax };

std::string_view to_string(LayerKind k);

struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  int kh = 0;
  int kw = 0;
  int filters = 0;  // output channels for Conv2D/SeparableConv2D, units for Dense
  Padding padding = Padding::Same;
  int block = 0;  // architectural block the layer belongs to (0 = unassigned)

  static LayerSpec conv2d(int k, int filters, Padding p = Padding::Same, int block = 0) {
    return {LayerKind::Conv2D, k, k, filters, p, block};
  }
  static LayerSpec depthwise(int k, Padding p = Padding::Same, int block = 0) {
    return {LayerKind::DepthwiseConv2D, k, k, 0, p, block};
  }
  static LayerSpec separable(int k, int filters, Padding p = Padding::Same, int block = 0) {
    return {LayerKind::SeparableConv2D, k, k, filters, p, block};
  }
  static LayerSpec simple(LayerKind kind, int block = 0) { return {kind, 0, 0, 0, Padding::Same, block}; }
  static LayerSpec dense(int units, int block = 0) { return {LayerKind::Dense, 0, 0, units, Padding::Same, block}; }

  bool is_conv() const {
    return kind == LayerKind::Conv2D || kind == LayerKind::DepthwiseConv2D || kind == LayerKind::SeparableConv2D;
  }
  bool operator==(const LayerSpec&) const = default;
};

struct ModelConfig {
  std::string name;
  std::vector<LayerSpec> layers;
  int input_height = 32;
  int input_width = 32;
  int input_channels = 3;
  int n_classes = 3;

  bool operator==(const ModelConfig&) const = default;
};

// Per-layer output shapes (without the batch axis). Throws ConfigError when the
// stack does not type-check or does not end in Dense(n_classes) -> Softmax.
std::vector<Shape> infer_shapes(const ModelConfig& cfg);

// "conv2d_1", "depthwise_conv2d_1", ... numbered per kind in order of appearance.
std::vector<std::string> layer_names(const ModelConfig& cfg);

// Compact text form, e.g. "b1:conv2d(3x3,64,same) b1:relu ... b4:softmax".
std::string format_layers(const ModelConfig& cfg);
// Inverse of format_layers; throws ConfigError.
std::vector<LayerSpec> parse_layers(std::string_view text);

std::uint64_t config_hash(const ModelConfig& cfg);

inline constexpr std::size_t kReferenceConvLayers = 6;

// Knobs of the reference four-block architecture.
struct ReferenceOptions {
  int block1_kernel = 3;
  int block1_filters = 64;
  int block1_depthwise_kernel = 2;
  int block2_kernel = 2;
  int block2_filters = 64;
  int block2_depthwise_kernel = 2;
  int block3_kernel = 2;
  int block3_filters = 64;
  int separable_kernel = 2;
  int separable_filters = 12;
  int dense_width = 204;
  // Padding of the six convolutions in order: conv1, dw1, conv2, dw2, conv3, sep3.
  std::array<Padding, kReferenceConvLayers> paddings{Padding::Same, Padding::Same, Padding::Same,
                                                     Padding::Same, Padding::Same, Padding::Same};
  bool block3_pool = true;
  bool block3_relu = false;
};

inline constexpr const char* kReferencePresetName = "brain2depth-reference";

ModelConfig reference_preset(const ReferenceOptions& opts = {});

// Throws ConfigError for unknown preset names.
ModelConfig preset_by_name(std::string_view name);

struct LayerParamCount {
  std::string name;
  LayerKind kind;
  std::int64_t trainable = 0;
};

struct ParamReport {
  std::vector<LayerParamCount> layers;
  std::int64_t total = 0;
};

// Closed-form trainable parameter counts; batch-norm running statistics excluded.
ParamReport count_params(const ModelConfig& cfg);

struct WidthCandidate {
  std::string padding_scheme;  // one of 'S'/'V' per convolution, conv1..sep3
  bool block3_pool = true;
  int dense_width = 0;
  std::int64_t total = 0;
  std::int64_t delta = 0;  // total - target
};

struct WidthSolution {
  std::vector<WidthCandidate> exact;
  std::vector<WidthCandidate> nearest;  // filled only when `exact` is empty
};

// Exhaustive search over dense width [1, max_width], every padding assignment of
// the six convolutions, and the presence of the block-3 max-pool.
WidthSolution solve_dense_width(const ReferenceOptions& base, std::int64_t target, int max_width = 4096,
                                std::size_t n_nearest = 5);

// Reference parameter totals: the 76,627 target and the comparison networks.
inline constexpr std::int64_t kTargetParams = 76627;
inline constexpr std::int64_t kVgg16Params = 14780739;
inline constexpr std::int64_t kResNet50Params = 23850371;
inline constexpr std::int64_t kMobileNetParams = 3360451;
inline constexpr std::int64_t kMobileNetV2Params = 2422339;

}  // namespace b2d::nn
