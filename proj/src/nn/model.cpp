#include "b2d/nn/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "b2d/error.hpp"
#include "b2d/nn/ops.hpp"

namespace b2d::nn {

namespace {

template <typename T>
void init_truncated_normal(Tensor<T>& t, std::size_t fan_in, std::mt19937_64& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& v : t.data()) {
    double z = dist(rng);
    while (std::abs(z) > 2.0) z = dist(rng);
    v = static_cast<T>(z * stddev);
  }
}

template <typename T>
Param<T> make_param(const std::string& layer, const std::string& role, Shape shape, T fill = T(0)) {
  Param<T> p{layer + "/" + role, Tensor<T>(shape, fill), Tensor<T>(shape)};
  return p;
}

template <typename T>
void require_cache(const Tensor<T>& cached, const std::string& layer) {
  if (cached.empty()) throw std::logic_error(layer + ": backward called before forward");
}

template <typename T>
class Conv2DLayer final : public Layer<T> {
 public:
  Conv2DLayer(const std::string& name, std::size_t kh, std::size_t kw, std::size_t cin, std::size_t cout,
              Padding p, std::mt19937_64& rng)
      : Layer<T>(name),
        kernel_(make_param<T>(name, "kernel", {kh, kw, cin, cout})),
        bias_(make_param<T>(name, "bias", {cout})),
        padding_(p) {
    init_truncated_normal(kernel_.value, kh * kw * cin, rng);
  }
  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    x_ = x;
    return conv2d_forward(x, kernel_.value, bias_.value, padding_);
  }
  Tensor<T> infer(const Tensor<T>& x) const override { return conv2d_forward(x, kernel_.value, bias_.value, padding_); }
  Tensor<T> backward(const Tensor<T>& dy, bool) override {
    require_cache(x_, this->name());
    auto g = conv2d_backward(x_, kernel_.value, dy, padding_);
    kernel_.grad = std::move(g.dw);
    bias_.grad = std::move(g.db);
    return std::move(g.dx);
  }
  std::vector<Param<T>*> params() override { return {&kernel_, &bias_}; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Conv2DLayer>(*this); }

 private:
  Param<T> kernel_, bias_;
  Padding padding_;
  Tensor<T> x_;
};

template <typename T>
class DepthwiseLayer final : public Layer<T> {
 public:
  DepthwiseLayer(const std::string& name, std::size_t kh, std::size_t kw, std::size_t c, Padding p,
                 std::mt19937_64& rng)
      : Layer<T>(name),
        kernel_(make_param<T>(name, "depthwise_kernel", {kh, kw, c})),
        bias_(make_param<T>(name, "bias", {c})),
        padding_(p) {
    init_truncated_normal(kernel_.value, kh * kw, rng);
  }
  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    x_ = x;
    return depthwise_conv2d_forward(x, kernel_.value, bias_.value, padding_);
  }
  Tensor<T> infer(const Tensor<T>& x) const override {
    return depthwise_conv2d_forward(x, kernel_.value, bias_.value, padding_);
  }
  Tensor<T> backward(const Tensor<T>& dy, bool) override {
    require_cache(x_, this->name());
    auto g = depthwise_conv2d_backward(x_, kernel_.value, dy, padding_);
    kernel_.grad = std::move(g.dw);
    bias_.grad = std::move(g.db);
    return std::move(g.dx);
  }
  std::vector<Param<T>*> params() override { return {&kernel_, &bias_}; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<DepthwiseLayer>(*this); }

 private:
  Param<T> kernel_, bias_;
  Padding padding_;
  Tensor<T> x_;
};

template <typename T>
class SeparableLayer final : public Layer<T> {
 public:
  SeparableLayer(const std::string& name, std::size_t kh, std::size_t kw, std::size_t cin, std::size_t cout,
                 Padding p, std::mt19937_64& rng)
      : Layer<T>(name),
        depthwise_(make_param<T>(name, "depthwise_kernel", {kh, kw, cin})),
        pointwise_(make_param<T>(name, "pointwise_kernel", {1, 1, cin, cout})),
        bias_(make_param<T>(name, "bias", {cout})),
        padding_(p) {
    init_truncated_normal(depthwise_.value, kh * kw, rng);
    init_truncated_normal(pointwise_.value, cin, rng);
  }
  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    x_ = x;
    mid_ = depthwise_conv2d_forward(x, depthwise_.value, Tensor<T>({x.dim(3)}), padding_);
    return conv2d_forward(mid_, pointwise_.value, bias_.value, Padding::Valid);
  }
  Tensor<T> infer(const Tensor<T>& x) const override {
    return separable_conv2d_forward(x, depthwise_.value, pointwise_.value, bias_.value, padding_);
  }
  Tensor<T> backward(const Tensor<T>& dy, bool) override {
    require_cache(x_, this->name());
    auto pw = conv2d_backward(mid_, pointwise_.value, dy, Padding::Valid);
    pointwise_.grad = std::move(pw.dw);
    bias_.grad = std::move(pw.db);
    auto dw = depthwise_conv2d_backward(x_, depthwise_.value, pw.dx, padding_);
    depthwise_.grad = std::move(dw.dw);
    return std::move(dw.dx);
  }
  std::vector<Param<T>*> params() override { return {&depthwise_, &pointwise_, &bias_}; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<SeparableLayer>(*this); }

 private:
  Param<T> depthwise_, pointwise_, bias_;
  Padding padding_;
  Tensor<T> x_, mid_;
};

template <typename T>
class ReluLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    x_ = x;
    return relu_forward(x);
  }
  Tensor<T> infer(const Tensor<T>& x) const override { return relu_forward(x); }
  Tensor<T> backward(const Tensor<T>& dy, bool) override {
    require_cache(x_, this->name());
    return relu_backward(x_, dy);
  }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<ReluLayer>(*this); }

 private:
  Tensor<T> x_;
};

template <typename T>
class MaxPoolLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    auto r = maxpool2d(x);
    x_shape_ = x.shape();
    argmax_ = std::move(r.argmax);
    return std::move(r.y);
  }
  Tensor<T> infer(const Tensor<T>& x) const override { return maxpool2d(x).y; }
  Tensor<T> backward(const Tensor<T>& dy, bool) override {
    if (x_shape_.empty()) throw std::logic_error(this->name() + ": backward called before forward");
    return maxpool2d_backward(dy, argmax_, x_shape_);
  }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<MaxPoolLayer>(*this); }

 private:
  Shape x_shape_;
  std::vector<std::size_t> argmax_;
};

template <typename T>
class BatchNormLayer final : public Layer<T> {
 public:
  BatchNormLayer(const std::string& name, std::size_t c)
      : Layer<T>(name),
        gamma_(make_param<T>(name, "gamma", {c}, T(1))),
        beta_(make_param<T>(name, "beta", {c})),
        running_mean_({c}),
        running_var_({c}, T(1)) {}
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    return batchnorm_forward(x, gamma_.value, beta_.value, running_mean_, running_var_,
                             mode == Mode::Train ? BatchNormMode::Train : BatchNormMode::Infer, kMomentum, kEps,
                             &cache_);
  }
  Tensor<T> infer(const Tensor<T>& x) const override {
    auto mean = running_mean_;
    auto var = running_var_;
    return batchnorm_forward(x, gamma_.value, beta_.value, mean, var, BatchNormMode::Infer, kMomentum, kEps);
  }
  Tensor<T> backward(const Tensor<T>& dy, bool) override {
    require_cache(cache_.xhat, this->name());
    auto g = batchnorm_backward(dy, gamma_.value, cache_);
    gamma_.grad = std::move(g.dgamma);
    beta_.grad = std::move(g.dbeta);
    return std::move(g.dx);
  }
  std::vector<Param<T>*> params() override { return {&gamma_, &beta_}; }
  std::vector<std::pair<std::string, Tensor<T>*>> buffers() override {
    return {{this->name() + "/moving_mean", &running_mean_}, {this->name() + "/moving_variance", &running_var_}};
  }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<BatchNormLayer>(*this); }

  static constexpr double kMomentum = 0.99;
  static constexpr double kEps = 1e-3;

 private:
  Param<T> gamma_, beta_;
  Tensor<T> running_mean_, running_var_;
  BatchNormCache<T> cache_;
};

template <typename T>
class FlattenLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    x_shape_ = x.shape();
    return flatten(x);
  }
  Tensor<T> infer(const Tensor<T>& x) const override { return flatten(x); }
  Tensor<T> backward(const Tensor<T>& dy, bool) override {
    if (x_shape_.empty()) throw std::logic_error(this->name() + ": backward called before forward");
    Tensor<T> dx = dy;
    dx.reshape(x_shape_);
    return dx;
  }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<FlattenLayer>(*this); }

 private:
  Shape x_shape_;
};

template <typename T>
class DenseLayer final : public Layer<T> {
 public:
  DenseLayer(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng)
      : Layer<T>(name), kernel_(make_param<T>(name, "kernel", {in, out})), bias_(make_param<T>(name, "bias", {out})) {
    init_truncated_normal(kernel_.value, in, rng);
  }
  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    x_ = x;
    return dense_forward(x, kernel_.value, bias_.value);
  }
  Tensor<T> infer(const Tensor<T>& x) const override { return dense_forward(x, kernel_.value, bias_.value); }
  Tensor<T> backward(const Tensor<T>& dy, bool) override {
    require_cache(x_, this->name());
    auto g = dense_backward(x_, kernel_.value, dy);
    kernel_.grad = std::move(g.dw);
    bias_.grad = std::move(g.db);
    return std::move(g.dx);
  }
  std::vector<Param<T>*> params() override { return {&kernel_, &bias_}; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<DenseLayer>(*this); }

 private:
  Param<T> kernel_, bias_;
  Tensor<T> x_;
};

template <typename T>
class SoftmaxLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    y_ = softmax_forward(x);
    return y_;
  }
  Tensor<T> infer(const Tensor<T>& x) const override { return softmax_forward(x); }
  Tensor<T> backward(const Tensor<T>& dy, bool) override {
    require_cache(y_, this->name());
    return softmax_backward(y_, dy);
  }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<SoftmaxLayer>(*this); }

 private:
  Tensor<T> y_;
};

}  // namespace

template <typename T>
Model<T>::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  const auto shapes = infer_shapes(cfg_);
  names_ = nn::layer_names(cfg_);
  std::mt19937_64 rng(seed);
  Shape in{static_cast<std::size_t>(cfg_.input_height), static_cast<std::size_t>(cfg_.input_width),
           static_cast<std::size_t>(cfg_.input_channels)};
  for (std::size_t i = 0; i < cfg_.layers.size(); ++i) {
    const auto& l = cfg_.layers[i];
    const auto& name = names_[i];
    const auto kh = static_cast<std::size_t>(l.kh), kw = static_cast<std::size_t>(l.kw);
    const auto f = static_cast<std::size_t>(l.filters);
    switch (l.kind) {
      case LayerKind::Conv2D: layers_.push_back(std::make_unique<Conv2DLayer<T>>(name, kh, kw, in.back(), f, l.padding, rng)); break;
      case LayerKind::DepthwiseConv2D: layers_.push_back(std::make_unique<DepthwiseLayer<T>>(name, kh, kw, in.back(), l.padding, rng)); break;
      case LayerKind::SeparableConv2D: layers_.push_back(std::make_unique<SeparableLayer<T>>(name, kh, kw, in.back(), f, l.padding, rng)); break;
      case LayerKind::ReLU: layers_.push_back(std::make_unique<ReluLayer<T>>(name)); break;
      case LayerKind::MaxPool2D: layers_.push_back(std::make_unique<MaxPoolLayer<T>>(name)); break;
      case LayerKind::BatchNorm: layers_.push_back(std::make_unique<BatchNormLayer<T>>(name, in.back())); break;
      case LayerKind::Flatten: layers_.push_back(std::make_unique<FlattenLayer<T>>(name)); break;
      case LayerKind::Dense: layers_.push_back(std::make_unique<DenseLayer<T>>(name, in.back(), f, rng)); break;
      case LayerKind::Softmax: layers_.push_back(std::make_unique<SoftmaxLayer<T>>(name)); break;
    }
    in = shapes[i];
  }
}

template <typename T>
Model<T>::Model(const Model& other)
    : cfg_(other.cfg_), names_(other.names_), last_probs_(other.last_probs_), has_forward_(other.has_forward_) {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

template <typename T>
Model<T>& Model<T>::operator=(const Model& other) {
  if (this != &other) {
    Model tmp(other);
    *this = std::move(tmp);
  }
  return *this;
}

template <typename T>
Model<T>::~Model() = default;

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& x, Mode mode) {
  if (x.rank() != 4 || x.dim(1) != static_cast<std::size_t>(cfg_.input_height) ||
      x.dim(2) != static_cast<std::size_t>(cfg_.input_width) || x.dim(3) != static_cast<std::size_t>(cfg_.input_channels))
    throw std::invalid_argument("model input " + shape_string(x.shape()) + " does not match the configured input");
  Tensor<T> h = x;
  for (auto& l : layers_) h = l->forward(h, mode);
  last_probs_ = h;
  has_forward_ = true;
  return h;
}

template <typename T>
std::vector<Tensor<T>> Model<T>::forward_trace(const Tensor<T>& x, Mode mode) {
  forward(x, mode);  // validates the input shape
  std::vector<Tensor<T>> inputs;
  inputs.reserve(layers_.size());
  Tensor<T> h = x;
  for (auto& l : layers_) {
    inputs.push_back(h);
    h = l->forward(h, mode);
  }
  last_probs_ = h;
  return inputs;
}

template <typename T>
Tensor<T> Model<T>::forward_from(std::size_t first, const Tensor<T>& h0, Mode mode) {
  if (first >= layers_.size()) throw std::out_of_range("forward_from: no layer " + std::to_string(first));
  Tensor<T> h = h0;
  for (std::size_t i = first; i < layers_.size(); ++i) h = layers_[i]->forward(h, mode);
  last_probs_ = h;
  has_forward_ = true;
  return h;
}

template <typename T>
Tensor<T> Model<T>::predict(const Tensor<T>& x) const {
  std::map<std::string, Tensor<T>> unused;
  return predict(x, {}, unused);
}

template <typename T>
Tensor<T> Model<T>::predict(const Tensor<T>& x, const std::vector<std::string>& capture,
                            std::map<std::string, Tensor<T>>& captured) const {
  if (x.rank() != 4 || x.dim(1) != static_cast<std::size_t>(cfg_.input_height) ||
      x.dim(2) != static_cast<std::size_t>(cfg_.input_width) || x.dim(3) != static_cast<std::size_t>(cfg_.input_channels))
    throw std::invalid_argument("model input " + shape_string(x.shape()) + " does not match the configured input");
  Tensor<T> h = x;
  for (const auto& l : layers_) {
    h = l->infer(h);
    for (const auto& name : capture)
      if (name == l->name()) captured[name] = h;
  }
  return h;
}

template <typename T>
double Model<T>::loss(const Tensor<T>& onehot) const {
  if (!has_forward_) throw std::logic_error("loss requested before forward");
  return cross_entropy_loss(last_probs_, onehot);
}

template <typename T>
void Model<T>::backward(const Tensor<T>& onehot) {
  if (!has_forward_) throw std::logic_error("backward called before forward");
  if (onehot.shape() != last_probs_.shape())
    throw std::invalid_argument("labels " + shape_string(onehot.shape()) + " do not match output " +
                                shape_string(last_probs_.shape()));
  const std::size_t N = last_probs_.dim(0);
  Tensor<T> grad(last_probs_.shape());
  for (std::size_t i = 0; i < grad.size(); ++i)
    grad[i] = (last_probs_[i] - onehot[i]) / static_cast<T>(N);
  // The last layer is the softmax, whose Jacobian is folded into the gradient above.
  for (std::size_t i = layers_.size() - 1; i-- > 0;) grad = layers_[i]->backward(grad, i > 0);
}

template <typename T>
std::vector<Param<T>*> Model<T>::params() {
  std::vector<Param<T>*> out;
  for (auto& l : layers_)
    for (auto* p : l->params()) out.push_back(p);
  return out;
}

template <typename T>
std::vector<const Param<T>*> Model<T>::params() const {
  std::vector<const Param<T>*> out;
  for (auto& l : layers_)
    for (auto* p : l->params()) out.push_back(p);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> Model<T>::buffers() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  for (auto& l : layers_)
    for (auto& b : l->buffers()) out.push_back(b);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, const Tensor<T>*>> Model<T>::buffers() const {
  std::vector<std::pair<std::string, const Tensor<T>*>> out;
  for (auto& l : layers_)
    for (auto& [n, t] : l->buffers()) out.emplace_back(n, t);
  return out;
}

template <typename T>
Tensor<T> one_hot(const std::vector<int>& labels, int n_classes) {
  Tensor<T> t({labels.size(), static_cast<std::size_t>(n_classes)});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes) throw std::invalid_argument("label out of range");
    t[i * n_classes + labels[i]] = T(1);
  }
  return t;
}

template class Model<float>;
template class Model<double>;
template Tensor<float> one_hot(const std::vector<int>&, int);
template Tensor<double> one_hot(const std::vector<int>&, int);

}  // namespace b2d::nn
