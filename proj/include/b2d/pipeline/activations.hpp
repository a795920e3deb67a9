#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "b2d/nn/model.hpp"

namespace b2d {

struct ActivationMap {
  std::string layer;
  std::size_t filter = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> raw;         // row-major slice of the layer output
  std::vector<double> normalized;  // min-max to [0,1]; a flat map is 0.5
};

// Output maps of the first `n_filters` channels of each named convolution
// layer for a single image [1,H,W,C]. Throws ConfigError for an unknown or
// non-convolution layer name.
template <typename T>
std::vector<ActivationMap> dump_activations(const nn::Model<T>& model, const nn::Tensor<T>& image,
                                            const std::vector<std::string>& layers, std::size_t n_filters = 5);

// Convolution layers of block 1, the default selection.
std::vector<std::string> block1_conv_layers(const nn::ModelConfig& cfg);

// One grayscale PPM per map, "<layer>_f<filter>.ppm". Returns the paths written.
std::vector<std::filesystem::path> write_activation_ppms(const std::vector<ActivationMap>& maps,
                                                         const std::filesystem::path& dir);

}  // namespace b2d
