#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace b2d {

inline constexpr int kNumClasses = 3;

using Confusion = std::array<std::array<std::int64_t, kNumClasses>, kNumClasses>;  // [true][predicted]

struct Metrics {
  std::size_t n = 0;
  double accuracy = 0.0;
  double precision = 0.0;  // macro averages over the three classes
  double recall = 0.0;
  double f1 = 0.0;
  std::array<double, kNumClasses> class_precision{};
  std::array<double, kNumClasses> class_recall{};
  std::array<double, kNumClasses> class_f1{};
  Confusion confusion{};
};

// A class that is never predicted has precision 0; never present, recall 0.
Metrics metrics_from_confusion(const Confusion& c);
// Throws DataError on an empty set or labels outside [0,3).
Metrics compute_metrics(const std::vector<int>& truth, const std::vector<int>& predicted);

}  // namespace b2d
