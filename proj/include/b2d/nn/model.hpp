#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "b2d/nn/model_config.hpp"
#include "b2d/nn/tensor.hpp"

namespace b2d::nn {

template <typename T>
struct Param {
  std::string name;  // "<layer>/<role>", e.g. "conv2d_1/kernel"
  Tensor<T> value;
  Tensor<T> grad;
};

enum class Mode { Train, Infer };

template <typename T>
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;

  const std::string& name() const { return name_; }

  // Caching forward used for training; `mode` selects batch-norm statistics.
  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
  // Stateless inference path; safe to call concurrently.
  virtual Tensor<T> infer(const Tensor<T>& x) const = 0;
  // Writes parameter gradients (overwriting) and returns dL/dx when need_dx.
  virtual Tensor<T> backward(const Tensor<T>& dy, bool need_dx) = 0;

  virtual std::vector<Param<T>*> params() { return {}; }
  // Non-trainable state saved with the weights (batch-norm running statistics).
  virtual std::vector<std::pair<std::string, Tensor<T>*>> buffers() { return {}; }

  virtual std::unique_ptr<Layer> clone() const = 0;

 private:
  std::string name_;
};

template <typename T>
class Model {
 public:
  // Builds and initializes the network: truncated-normal kernels with std
  // sqrt(2/fan_in) cut at two standard deviations, zero biases, gamma=1, beta=0.
  Model(ModelConfig cfg, std::uint64_t seed);
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;
  ~Model();

  const ModelConfig& config() const { return cfg_; }
  const std::vector<std::string>& layer_names() const { return names_; }

  // x is [N,H,W,C]; returns class probabilities [N,n_classes]. Retains caches for backward().
  Tensor<T> forward(const Tensor<T>& x, Mode mode);

  // forward() that also returns the input of every layer (element i feeds layer i).
  std::vector<Tensor<T>> forward_trace(const Tensor<T>& x, Mode mode);
  // Runs layers [first, end) on `h`, the input of layer `first`. Same caching as forward().
  Tensor<T> forward_from(std::size_t first, const Tensor<T>& h, Mode mode);

  // Const inference. Outputs of the layers named in `capture` are copied into `captured`.
  Tensor<T> predict(const Tensor<T>& x) const;
  Tensor<T> predict(const Tensor<T>& x, const std::vector<std::string>& capture,
                    std::map<std::string, Tensor<T>>& captured) const;

  // Mean cross-entropy of the last forward() output against one-hot labels.
  double loss(const Tensor<T>& onehot) const;

  // Gradients of mean cross-entropy w.r.t. every parameter, starting from the
  // fused softmax/cross-entropy gradient (probs - onehot) / N.
  void backward(const Tensor<T>& onehot);

  std::vector<Param<T>*> params();
  std::vector<const Param<T>*> params() const;
  std::vector<std::pair<std::string, Tensor<T>*>> buffers();
  std::vector<std::pair<std::string, const Tensor<T>*>> buffers() const;

 private:
  ModelConfig cfg_;
  std::vector<std::string> names_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  Tensor<T> last_probs_;
  bool has_forward_ = false;
};

extern template class Model<float>;
extern template class Model<double>;

// Tensor of one-hot rows from integer labels.
template <typename T>
Tensor<T> one_hot(const std::vector<int>& labels, int n_classes);

}  // namespace b2d::nn
