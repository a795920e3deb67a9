#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "b2d/nn/model.hpp"
#include "b2d/nn/optimizer.hpp"
#include "b2d/nn/tensor.hpp"

// Binary tensor container (.b2dw), little-endian:
//   "B2DW" | u16 version=1 | u32 count |
//   count x ( u16 name_len | name | u8 dtype (0=f32, 1=f64) | u8 rank | rank x u32 dims | data )
namespace b2d::nn {

inline constexpr std::uint16_t kContainerVersion = 1;

using AnyTensor = std::variant<Tensor<float>, Tensor<double>>;

struct NamedTensor {
  std::string name;
  AnyTensor tensor;
  bool operator==(const NamedTensor&) const = default;
};

std::string encode_container(const std::vector<NamedTensor>& entries);
// Throws DataError on bad magic, unsupported version, truncation or trailing bytes.
std::vector<NamedTensor> decode_container(std::string_view bytes, const std::string& source = "<memory>");

void write_container(const std::filesystem::path& path, const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> read_container(const std::filesystem::path& path);

// Parameters, batch-norm running statistics and (optionally) optimizer moments.
template <typename T>
std::vector<NamedTensor> model_state(const Model<T>& model, const Optimizer<T>* optimizer = nullptr);

template <typename T>
void save_weights(const Model<T>& model, const std::filesystem::path& path, const Optimizer<T>* optimizer = nullptr);

// All-or-nothing: on any error the model and optimizer are left untouched.
// Throws DataError naming the first missing or mismatched tensor.
template <typename T>
void load_state(Model<T>& model, const std::vector<NamedTensor>& entries, Optimizer<T>* optimizer = nullptr);

template <typename T>
void load_weights(Model<T>& model, const std::filesystem::path& path, Optimizer<T>* optimizer = nullptr);

}  // namespace b2d::nn
