#pragma once

#include <string>
#include <vector>

#include "b2d/pipeline/training.hpp"

namespace b2d {

struct Environment {
  int threads = 1;
  std::string numeric_mode;  // "f32" or "f64"
  std::string compiler;
  std::string build_type;
  unsigned hardware_threads = 0;
};

Environment describe_environment(int threads, const std::string& numeric_mode);

struct BenchmarkResult {
  std::vector<Timing> runs;
  Timing median;  // train and test medians taken separately
  std::vector<std::int64_t> single_image_ns;
  std::int64_t single_image_median_ns = 0;
  Environment env;
};

// Lower median: element (n-1)/2 of the sorted values. Throws on empty input.
std::int64_t median_ns(std::vector<std::int64_t> values);

// Test milliseconds per sample from seconds, as in 1000 * test_s / n.
double ms_per_sample(double test_s, std::size_t n);

// Trains and tests `repeats` times on one fold, then times single-image
// inference of the last model `latency_repeats` times.
template <typename T>
BenchmarkResult benchmark(const nn::ModelConfig& cfg, const ImageDataset& ds, const FoldSplit& fold,
                          const Hyper& hyper, int repeats, int latency_repeats = 50);

// Median wall time of predict() on one [1,H,W,C] image, after one warm-up call.
template <typename T>
std::vector<std::int64_t> time_single_image(const nn::Model<T>& model, const nn::Tensor<T>& image, int repeats);

}  // namespace b2d
