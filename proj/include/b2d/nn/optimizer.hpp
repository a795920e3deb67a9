#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "b2d/nn/model.hpp"
#include "b2d/nn/tensor.hpp"

namespace b2d::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::int64_t step = 0;
};

// One bias-corrected adaptive-moment update. Moments are zero-initialized on the
// first call. Throws std::invalid_argument on any params/grads shape mismatch.
template <typename T>
void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>* const> grads, AdamState<T>& state,
               const AdamConfig& cfg);

template <typename T>
void sgd_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>* const> grads, double lr);

enum class OptimizerKind { Adam, Sgd };

// Applies the configured update to every parameter of a model.
template <typename T>
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, AdamConfig cfg) : kind_(kind), cfg_(cfg) {}

  void step(const std::vector<Param<T>*>& params);

  OptimizerKind kind() const { return kind_; }
  const AdamConfig& config() const { return cfg_; }
  AdamState<T>& state() { return state_; }
  const AdamState<T>& state() const { return state_; }

 private:
  OptimizerKind kind_;
  AdamConfig cfg_;
  AdamState<T> state_;
};

}  // namespace b2d::nn
