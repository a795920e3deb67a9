#include <functional>
#include <random>

#include "b2d/nn/model.hpp"
#include "b2d/nn/ops.hpp"
#include "doctest.h"
#include "oracles/gradcheck.hpp"

using namespace b2d::nn;

namespace {

using Fn = std::function<Tensor<double>(const Tensor<double>&)>;

Tensor<double> rand_tensor(Shape s, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Tensor<double> t(std::move(s));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Worst relative error between `analytic` and d<f(x), r>/dx by central differences.
double fd_worst(const Fn& f, Tensor<double> x, const Tensor<double>& r, const Tensor<double>& analytic) {
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = dot(f(x), r);
    x[i] = saved - h;
    const double down = dot(f(x), r);
    x[i] = saved;
    worst = std::max(worst, oracle::grad_rel_err(analytic[i], (up - down) / (2 * h), 1e-6));
  }
  return worst;
}

}  // namespace

TEST_SUITE("gradients") {

TEST_CASE("conv2d backward") {
  std::mt19937_64 rng(1);
  for (auto pad : {Padding::Same, Padding::Valid}) {
    for (std::size_t k : {1u, 2u, 3u}) {
      const auto x = rand_tensor({2, 5, 4, 3}, rng);
      const auto w = rand_tensor({k, k, 3, 4}, rng);
      const auto b = rand_tensor({4}, rng);
      const auto y = conv2d_forward(x, w, b, pad);
      const auto r = rand_tensor(y.shape(), rng);
      const auto g = conv2d_backward(x, w, r, pad);
      CHECK(fd_worst([&](const Tensor<double>& t) { return conv2d_forward(t, w, b, pad); }, x, r, g.dx) < 1e-6);
      CHECK(fd_worst([&](const Tensor<double>& t) { return conv2d_forward(x, t, b, pad); }, w, r, g.dw) < 1e-6);
      CHECK(fd_worst([&](const Tensor<double>& t) { return conv2d_forward(x, w, t, pad); }, b, r, g.db) < 1e-6);
    }
  }
}

TEST_CASE("depthwise backward") {
  std::mt19937_64 rng(2);
  for (auto pad : {Padding::Same, Padding::Valid}) {
    for (std::size_t k : {2u, 3u}) {
      const auto x = rand_tensor({2, 5, 5, 3}, rng);
      const auto w = rand_tensor({k, k, 3}, rng);
      const auto b = rand_tensor({3}, rng);
      const auto y = depthwise_conv2d_forward(x, w, b, pad);
      const auto r = rand_tensor(y.shape(), rng);
      const auto g = depthwise_conv2d_backward(x, w, r, pad);
      CHECK(fd_worst([&](const Tensor<double>& t) { return depthwise_conv2d_forward(t, w, b, pad); }, x, r, g.dx) < 1e-6);
      CHECK(fd_worst([&](const Tensor<double>& t) { return depthwise_conv2d_forward(x, t, b, pad); }, w, r, g.dw) < 1e-6);
      CHECK(fd_worst([&](const Tensor<double>& t) { return depthwise_conv2d_forward(x, w, t, pad); }, b, r, g.db) < 1e-6);
    }
  }
}

TEST_CASE("batchnorm backward in train mode") {
  std::mt19937_64 rng(3);
  const auto x = rand_tensor({3, 2, 2, 4}, rng, 2.0);
  const auto gamma = rand_tensor({4}, rng);
  const auto beta = rand_tensor({4}, rng);
  auto run = [&](const Tensor<double>& xx, const Tensor<double>& gg, const Tensor<double>& bb,
                 BatchNormCache<double>* cache) {
    Tensor<double> rm({4}), rv({4}, 1.0);
    return batchnorm_forward(xx, gg, bb, rm, rv, BatchNormMode::Train, 0.99, 1e-3, cache);
  };
  BatchNormCache<double> cache;
  const auto y = run(x, gamma, beta, &cache);
  const auto r = rand_tensor(y.shape(), rng);
  const auto g = batchnorm_backward(r, gamma, cache);
  CHECK(fd_worst([&](const Tensor<double>& t) { return run(t, gamma, beta, nullptr); }, x, r, g.dx) < 1e-6);
  CHECK(fd_worst([&](const Tensor<double>& t) { return run(x, t, beta, nullptr); }, gamma, r, g.dgamma) < 1e-6);
  CHECK(fd_worst([&](const Tensor<double>& t) { return run(x, gamma, t, nullptr); }, beta, r, g.dbeta) < 1e-6);
}

TEST_CASE("dense, softmax and relu backward") {
  std::mt19937_64 rng(4);
  const auto x = rand_tensor({3, 7}, rng);
  const auto w = rand_tensor({7, 5}, rng);
  const auto b = rand_tensor({5}, rng);
  const auto r = rand_tensor({3, 5}, rng);
  const auto g = dense_backward(x, w, r);
  CHECK(fd_worst([&](const Tensor<double>& t) { return dense_forward(t, w, b); }, x, r, g.dx) < 1e-6);
  CHECK(fd_worst([&](const Tensor<double>& t) { return dense_forward(x, t, b); }, w, r, g.dw) < 1e-6);
  CHECK(fd_worst([&](const Tensor<double>& t) { return dense_forward(x, w, t); }, b, r, g.db) < 1e-6);

  const auto z = rand_tensor({3, 5}, rng, 3.0);
  const auto p = softmax_forward(z);
  CHECK(fd_worst([](const Tensor<double>& t) { return softmax_forward(t); }, z, r, softmax_backward(p, r)) < 1e-6);

  // Keep inputs away from the kink.
  auto xr = rand_tensor({2, 3, 3, 2}, rng);
  for (auto& v : xr.data()) v += v >= 0 ? 0.1 : -0.1;
  const auto rr = rand_tensor(xr.shape(), rng);
  CHECK(fd_worst([](const Tensor<double>& t) { return relu_forward(t); }, xr, rr, relu_backward(xr, rr)) < 1e-8);
}

TEST_CASE("maxpool backward") {
  std::mt19937_64 rng(5);
  const auto x = rand_tensor({2, 5, 4, 3}, rng);
  const auto res = maxpool2d(x);
  const auto r = rand_tensor(res.y.shape(), rng);
  const auto dx = maxpool2d_backward(r, res.argmax, x.shape());
  CHECK(fd_worst([](const Tensor<double>& t) { return maxpool2d(t).y; }, x, r, dx) < 1e-6);
}

TEST_CASE("fused softmax cross-entropy gradient of a small model") {
  ModelConfig cfg;
  cfg.name = "tiny";
  cfg.input_height = 6;
  cfg.input_width = 6;
  cfg.layers = parse_layers(
      "b1:conv2d(3x3,4,same) b1:batchnorm b1:relu b1:maxpool b2:separable(2x2,5,valid) b2:depthwise(2x2,same) "
      "b2:flatten b3:dense(6) b3:relu b3:dense(3) b3:softmax");
  Model<double> model(cfg, 17);
  const auto x = oracle::random_batch(3, 6, 6, 3, 8);
  const auto y = one_hot<double>({0, 2, 1}, 3);
  const auto res = oracle::gradcheck_model(model, x, y, 1e-5, 1e-4, 1e-5);
  CHECK(res.checked == count_params(cfg).total);
  CHECK_MESSAGE(res.failed == 0, res.worst_param << " rel " << res.worst_rel);
}

TEST_CASE("backward before forward is a logic error") {
  Model<double> model(reference_preset(), 1);
  CHECK_THROWS_AS(model.backward(one_hot<double>({0}, 3)), std::logic_error);
}

}  // TEST_SUITE
