#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "b2d/nn/model.hpp"
#include "b2d/nn/optimizer.hpp"
#include "b2d/pipeline/dataset.hpp"
#include "b2d/pipeline/folds.hpp"
#include "b2d/pipeline/metrics.hpp"

namespace b2d {

struct Hyper {
  int batch = 30;
  int epochs = 30;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  nn::OptimizerKind optimizer = nn::OptimizerKind::Adam;
};

// Throws ConfigError naming the bad field.
void validate(const Hyper& h);

// Wall-clock times in integer nanoseconds. test_ns is always a multiple of
// n_test, so test_ns == ns_per_sample * n_test holds exactly.
struct Timing {
  std::int64_t train_ns = 0;
  std::int64_t test_ns = 0;
  std::size_t n_test = 0;

  std::int64_t test_ns_per_sample() const { return n_test ? test_ns / static_cast<std::int64_t>(n_test) : 0; }
  double train_s() const { return static_cast<double>(train_ns) * 1e-9; }
  double test_s() const { return static_cast<double>(test_ns) * 1e-9; }
  double test_ms_per_sample() const { return static_cast<double>(test_ns_per_sample()) * 1e-6; }
};

// Floors a measured duration to a multiple of n (n = 0 leaves it unchanged).
std::int64_t quantize_ns(std::int64_t ns, std::size_t n);

struct EpochRow {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;  // NaN when the validation split is empty
  double val_acc = 0.0;
};

struct RunReport {
  int fold = 0;
  std::vector<EpochRow> epochs;
  Metrics test;
  Timing timing;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::size_t n_train = 0;
  std::size_t n_validation = 0;
};

template <typename T>
struct TrainResult {
  nn::Model<T> model;
  nn::Optimizer<T> optimizer;
  RunReport report;
};

// Seed of the weights and shuffling for one fold.
std::uint64_t fold_seed(std::uint64_t seed, int fold);

// Mini-batch training on the fold's train split with a per-epoch shuffle, then
// evaluation on its test subjects. Deterministic in (cfg, ds, fold, hyper).
// Throws DataError if a class is missing from the train split.
template <typename T>
TrainResult<T> train_model(const nn::ModelConfig& cfg, const ImageDataset& ds, const FoldSplit& fold,
                           const Hyper& hyper);

// Argmax predictions in batches of `batch`.
template <typename T>
std::vector<int> predict_labels(const nn::Model<T>& model, const ImageDataset& ds,
                                const std::vector<std::size_t>& indices, int batch = 30);

// Mean cross-entropy and accuracy in inference mode.
template <typename T>
std::pair<double, double> loss_and_accuracy(const nn::Model<T>& model, const ImageDataset& ds,
                                            const std::vector<std::size_t>& indices, int batch = 30);

template <typename T>
Metrics evaluate(const nn::Model<T>& model, const ImageDataset& ds, const std::vector<std::size_t>& indices,
                 int batch = 30);

// Runs task(i) for i in [0,n) on up to `threads` workers. Rethrows the
// exception of the lowest failing task.
void run_parallel(std::size_t n, int threads, const std::function<void(std::size_t)>& task);

// train_model over several folds; results are ordered like `folds` and do not
// depend on `threads`.
template <typename T>
std::vector<TrainResult<T>> run_folds(const nn::ModelConfig& cfg, const ImageDataset& ds,
                                      const std::vector<FoldSplit>& folds, const Hyper& hyper, int threads = 1);

}  // namespace b2d
