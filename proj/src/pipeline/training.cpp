#include "b2d/pipeline/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <random>
#include <thread>

#include "b2d/error.hpp"
#include "b2d/nn/ops.hpp"

namespace b2d {

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t elapsed_ns(Clock::time_point since) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - since).count();
}

template <typename T>
int argmax_row(const nn::Tensor<T>& p, std::size_t row) {
  const std::size_t k = p.dim(1);
  std::size_t best = 0;
  for (std::size_t j = 1; j < k; ++j)
    if (p[row * k + j] > p[row * k + best]) best = j;
  return static_cast<int>(best);
}

template <typename T>
nn::Tensor<T> batch_images(const ImageDataset& ds, const std::vector<std::size_t>& idx) {
  if constexpr (std::is_same_v<T, float>)
    return gather_images(ds, idx);
  else
    return gather_images(ds, idx).template cast<T>();
}

template <typename T>
void check_finite(const nn::Model<T>& model, int epoch) {
  for (const auto* p : model.params())
    for (T v : p->value.data())
      if (!std::isfinite(static_cast<double>(v)))
        throw NumericError("non-finite weight in " + p->name + " after epoch " + std::to_string(epoch));
}

}  // namespace

void validate(const Hyper& h) {
  if (h.batch < 1) throw ConfigError("batch must be >= 1");
  if (h.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(h.lr >= 0.0) || !std::isfinite(h.lr)) throw ConfigError("lr must be a finite value >= 0");
}

std::int64_t quantize_ns(std::int64_t ns, std::size_t n) {
  if (n == 0) return ns;
  const auto k = static_cast<std::int64_t>(n);
  return ns - ns % k;
}

std::uint64_t fold_seed(std::uint64_t seed, int fold) {
  // splitmix64 step over (seed, fold)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(fold) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

template <typename T>
std::vector<int> predict_labels(const nn::Model<T>& model, const ImageDataset& ds,
                                const std::vector<std::size_t>& indices, int batch) {
  std::vector<int> out;
  out.reserve(indices.size());
  const auto b = static_cast<std::size_t>(std::max(batch, 1));
  for (std::size_t s = 0; s < indices.size(); s += b) {
    const std::vector<std::size_t> idx(indices.begin() + s, indices.begin() + std::min(indices.size(), s + b));
    const auto probs = model.predict(batch_images<T>(ds, idx));
    for (std::size_t r = 0; r < idx.size(); ++r) out.push_back(argmax_row(probs, r));
  }
  return out;
}

template <typename T>
std::pair<double, double> loss_and_accuracy(const nn::Model<T>& model, const ImageDataset& ds,
                                            const std::vector<std::size_t>& indices, int batch) {
  if (indices.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double loss = 0.0;
  std::size_t correct = 0;
  const auto b = static_cast<std::size_t>(std::max(batch, 1));
  for (std::size_t s = 0; s < indices.size(); s += b) {
    const std::vector<std::size_t> idx(indices.begin() + s, indices.begin() + std::min(indices.size(), s + b));
    const auto labels = gather_labels(ds, idx);
    const auto probs = model.predict(batch_images<T>(ds, idx));
    loss += nn::cross_entropy_loss(probs, nn::one_hot<T>(labels, kNumClasses)) * static_cast<double>(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) correct += argmax_row(probs, r) == labels[r];
  }
  const auto n = static_cast<double>(indices.size());
  return {loss / n, static_cast<double>(correct) / n};
}

template <typename T>
Metrics evaluate(const nn::Model<T>& model, const ImageDataset& ds, const std::vector<std::size_t>& indices,
                 int batch) {
  if (indices.empty()) throw DataError("evaluate: empty evaluation set");
  return compute_metrics(gather_labels(ds, indices), predict_labels(model, ds, indices, batch));
}

template <typename T>
TrainResult<T> train_model(const nn::ModelConfig& cfg, const ImageDataset& ds, const FoldSplit& fold,
                           const Hyper& hyper) {
  validate(hyper);
  if (cfg.n_classes != kNumClasses) throw ConfigError("model must have 3 output classes");
  const auto split = split_indices(ds, fold);
  {
    std::array<std::size_t, kNumClasses> per_class{};
    for (auto i : split.train) ++per_class[static_cast<std::size_t>(ds.labels[i])];
    for (int c = 0; c < kNumClasses; ++c)
      if (per_class[c] == 0)
        throw DataError("fold " + std::to_string(fold.fold_index) + ": no training samples for class " +
                        std::string(to_string(static_cast<Condition>(c))));
  }
  if (split.test.empty()) throw DataError("fold " + std::to_string(fold.fold_index) + ": empty test split");

  const std::uint64_t seed = fold_seed(hyper.seed, fold.fold_index);
  nn::AdamConfig acfg;
  acfg.lr = hyper.lr;
  TrainResult<T> res{nn::Model<T>(cfg, seed), nn::Optimizer<T>(hyper.optimizer, acfg), {}};
  auto& rep = res.report;
  rep.fold = fold.fold_index;
  rep.config_hash = nn::config_hash(cfg);
  rep.seed = hyper.seed;
  rep.n_train = split.train.size();
  rep.n_validation = split.validation.size();

  std::mt19937_64 rng(seed ^ 0x5eedull);
  std::vector<std::size_t> order = split.train;
  const auto b = static_cast<std::size_t>(hyper.batch);

  const auto t0 = Clock::now();
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t s = 0; s < order.size(); s += b) {
      const std::vector<std::size_t> idx(order.begin() + s, order.begin() + std::min(order.size(), s + b));
      const auto labels = gather_labels(ds, idx);
      const auto onehot = nn::one_hot<T>(labels, kNumClasses);
      const auto probs = res.model.forward(batch_images<T>(ds, idx), nn::Mode::Train);
      loss_sum += res.model.loss(onehot) * static_cast<double>(idx.size());
      for (std::size_t r = 0; r < idx.size(); ++r) correct += argmax_row(probs, r) == labels[r];
      res.model.backward(onehot);
      res.optimizer.step(res.model.params());
    }
    check_finite(res.model, epoch);
    EpochRow row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(order.size());
    row.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
    std::tie(row.val_loss, row.val_acc) = loss_and_accuracy(res.model, ds, split.validation, hyper.batch);
    rep.epochs.push_back(row);
  }
  rep.timing.train_ns = elapsed_ns(t0);

  const auto t1 = Clock::now();
  const auto predicted = predict_labels(res.model, ds, split.test, hyper.batch);
  const auto test_ns = elapsed_ns(t1);
  rep.timing.n_test = split.test.size();
  rep.timing.test_ns = quantize_ns(test_ns, split.test.size());
  rep.test = compute_metrics(gather_labels(ds, split.test), predicted);
  return res;
}

void run_parallel(std::size_t n, int threads, const std::function<void(std::size_t)>& task) {
  const auto workers = static_cast<std::size_t>(std::clamp<long>(threads, 1, static_cast<long>(std::max<std::size_t>(n, 1))));
  std::vector<std::exception_ptr> errors(n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
        break;
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n && !failed; i = next++) {
          try {
            task(i);
          } catch (...) {
            errors[i] = std::current_exception();
            failed = true;
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

template <typename T>
std::vector<TrainResult<T>> run_folds(const nn::ModelConfig& cfg, const ImageDataset& ds,
                                      const std::vector<FoldSplit>& folds, const Hyper& hyper, int threads) {
  std::vector<std::optional<TrainResult<T>>> slots(folds.size());
  run_parallel(folds.size(), threads, [&](std::size_t i) { slots[i].emplace(train_model<T>(cfg, ds, folds[i], hyper)); });
  std::vector<TrainResult<T>> out;
  out.reserve(folds.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

#define B2D_INSTANTIATE(T)                                                                                        \
  template TrainResult<T> train_model<T>(const nn::ModelConfig&, const ImageDataset&, const FoldSplit&,          \
                                         const Hyper&);                                                           \
  template std::vector<int> predict_labels<T>(const nn::Model<T>&, const ImageDataset&,                          \
                                              const std::vector<std::size_t>&, int);                             \
  template std::pair<double, double> loss_and_accuracy<T>(const nn::Model<T>&, const ImageDataset&,              \
                                                          const std::vector<std::size_t>&, int);                 \
  template Metrics evaluate<T>(const nn::Model<T>&, const ImageDataset&, const std::vector<std::size_t>&, int); \
  template std::vector<TrainResult<T>> run_folds<T>(const nn::ModelConfig&, const ImageDataset&,                 \
                                                    const std::vector<FoldSplit>&, const Hyper&, int);

B2D_INSTANTIATE(float)
B2D_INSTANTIATE(double)
#undef B2D_INSTANTIATE

}  // namespace b2d
