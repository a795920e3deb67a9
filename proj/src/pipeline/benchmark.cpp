#include "b2d/pipeline/benchmark.hpp"

#include <algorithm>
#include <chrono>
#include <optional>
#include <thread>

#include "b2d/error.hpp"

namespace b2d {

Environment describe_environment(int threads, const std::string& numeric_mode) {
  Environment env;
  env.threads = threads;
  env.numeric_mode = numeric_mode;
#if defined(__clang__)
  env.compiler = "clang " __clang_version__;
#elif defined(__GNUC__)
  env.compiler = "gcc " __VERSION__;
#else
  env.compiler = "unknown";
#endif
#ifdef NDEBUG
  env.build_type = "release";
#else
  env.build_type = "debug";
#endif
  env.hardware_threads = std::thread::hardware_concurrency();
  return env;
}

std::int64_t median_ns(std::vector<std::int64_t> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(values.begin(), values.end());
  return values[(values.size() - 1) / 2];
}

double ms_per_sample(double test_s, std::size_t n) {
  if (n == 0) throw DataError("benchmark: empty test set");
  return 1000.0 * test_s / static_cast<double>(n);
}

template <typename T>
std::vector<std::int64_t> time_single_image(const nn::Model<T>& model, const nn::Tensor<T>& image, int repeats) {
  if (repeats < 1) throw ConfigError("latency repeats must be >= 1");
  (void)model.predict(image);
  std::vector<std::int64_t> out;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto p = model.predict(image);
    out.push_back(std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - t0).count());
    if (p.empty()) throw NumericError("empty prediction");
  }
  return out;
}

template <typename T>
BenchmarkResult benchmark(const nn::ModelConfig& cfg, const ImageDataset& ds, const FoldSplit& fold,
                          const Hyper& hyper, int repeats, int latency_repeats) {
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  if (split_indices(ds, fold).test.empty()) throw DataError("benchmark: empty test set");
  BenchmarkResult res;
  res.env = describe_environment(1, std::is_same_v<T, float> ? "f32" : "f64");
  std::vector<std::int64_t> train, test;
  std::optional<nn::Model<T>> last;
  for (int r = 0; r < repeats; ++r) {
    auto run = train_model<T>(cfg, ds, fold, hyper);
    res.runs.push_back(run.report.timing);
    train.push_back(run.report.timing.train_ns);
    test.push_back(run.report.timing.test_ns);
    last.emplace(std::move(run.model));
  }
  res.median.n_test = res.runs.front().n_test;
  res.median.train_ns = median_ns(train);
  res.median.test_ns = median_ns(test);

  const auto first = split_indices(ds, fold).test.front();
  nn::Tensor<float> img = gather_images(ds, {first});
  if constexpr (std::is_same_v<T, float>)
    res.single_image_ns = time_single_image<T>(*last, img, latency_repeats);
  else
    res.single_image_ns = time_single_image<T>(*last, img.cast<T>(), latency_repeats);
  res.single_image_median_ns = median_ns(res.single_image_ns);
  return res;
}

template BenchmarkResult benchmark<float>(const nn::ModelConfig&, const ImageDataset&, const FoldSplit&, const Hyper&,
                                          int, int);
template BenchmarkResult benchmark<double>(const nn::ModelConfig&, const ImageDataset&, const FoldSplit&,
                                           const Hyper&, int, int);
template std::vector<std::int64_t> time_single_image<float>(const nn::Model<float>&, const nn::Tensor<float>&, int);
template std::vector<std::int64_t> time_single_image<double>(const nn::Model<double>&, const nn::Tensor<double>&, int);

}  // namespace b2d
