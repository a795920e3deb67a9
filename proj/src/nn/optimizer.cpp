#include "b2d/nn/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace b2d::nn {

namespace {

template <typename T>
void check_pairs(std::span<Tensor<T>* const> params, std::span<const Tensor<T>* const> grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("optimizer: params/grads count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i]->shape() != grads[i]->shape())
      throw std::invalid_argument("optimizer: shape mismatch at tensor " + std::to_string(i) + ": " +
                                  shape_string(params[i]->shape()) + " vs " + shape_string(grads[i]->shape()));
}

}  // namespace

template <typename T>
void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>* const> grads, AdamState<T>& state,
               const AdamConfig& cfg) {
  check_pairs(params, grads);
  if (state.m.empty()) {
    for (auto* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("optimizer: state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (state.m[i].shape() != params[i]->shape())
      throw std::invalid_argument("optimizer: state shape mismatch at tensor " + std::to_string(i));

  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.eps);
  const T inv_c1 = static_cast<T>(1.0 / c1), inv_c2 = static_cast<T>(1.0 / c2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* p = params[i]->ptr();
    const T* g = grads[i]->ptr();
    T* m = state.m[i].ptr();
    T* v = state.v[i].ptr();
    for (std::size_t j = 0; j < params[i]->size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      const T mhat = m[j] * inv_c1;
      const T vhat = v[j] * inv_c2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template <typename T>
void sgd_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>* const> grads, double lr) {
  check_pairs(params, grads);
  const T step = static_cast<T>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* p = params[i]->ptr();
    const T* g = grads[i]->ptr();
    for (std::size_t j = 0; j < params[i]->size(); ++j) p[j] -= step * g[j];
  }
}

template <typename T>
void Optimizer<T>::step(const std::vector<Param<T>*>& params) {
  std::vector<Tensor<T>*> values;
  std::vector<const Tensor<T>*> grads;
  for (auto* p : params) {
    values.push_back(&p->value);
    grads.push_back(&p->grad);
  }
  if (kind_ == OptimizerKind::Adam) adam_step<T>(values, grads, state_, cfg_);
  else sgd_step<T>(values, grads, cfg_.lr);
}

template void adam_step(std::span<Tensor<float>* const>, std::span<const Tensor<float>* const>, AdamState<float>&,
                        const AdamConfig&);
template void adam_step(std::span<Tensor<double>* const>, std::span<const Tensor<double>* const>,
                        AdamState<double>&, const AdamConfig&);
template void sgd_step(std::span<Tensor<float>* const>, std::span<const Tensor<float>* const>, double);
template void sgd_step(std::span<Tensor<double>* const>, std::span<const Tensor<double>* const>, double);
template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace b2d::nn
