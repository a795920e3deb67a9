#include "b2d/pipeline/metrics.hpp"

#include "b2d/error.hpp"

namespace b2d {

Metrics metrics_from_confusion(const Confusion& c) {
  Metrics m;
  m.confusion = c;
  std::int64_t total = 0, correct = 0;
  for (int t = 0; t < kNumClasses; ++t)
    for (int p = 0; p < kNumClasses; ++p) {
      total += c[t][p];
      if (t == p) correct += c[t][p];
    }
  if (total == 0) throw DataError("metrics: empty evaluation set");
  m.n = static_cast<std::size_t>(total);
  m.accuracy = static_cast<double>(correct) / static_cast<double>(total);
  for (int k = 0; k < kNumClasses; ++k) {
    std::int64_t predicted = 0, actual = 0;
    for (int j = 0; j < kNumClasses; ++j) {
      predicted += c[j][k];
      actual += c[k][j];
    }
    const double tp = static_cast<double>(c[k][k]);
    const double p = predicted ? tp / static_cast<double>(predicted) : 0.0;
    const double r = actual ? tp / static_cast<double>(actual) : 0.0;
    m.class_precision[k] = p;
    m.class_recall[k] = r;
    m.class_f1[k] = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    m.precision += p / kNumClasses;
    m.recall += r / kNumClasses;
    m.f1 += m.class_f1[k] / kNumClasses;
  }
  return m;
}

Metrics compute_metrics(const std::vector<int>& truth, const std::vector<int>& predicted) {
  if (truth.size() != predicted.size()) throw DataError("metrics: label/prediction count mismatch");
  if (truth.empty()) throw DataError("metrics: empty evaluation set");
  Confusion c{};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= kNumClasses || predicted[i] < 0 || predicted[i] >= kNumClasses)
      throw DataError("metrics: label outside [0,3)");
    ++c[truth[i]][predicted[i]];
  }
  return metrics_from_confusion(c);
}

}  // namespace b2d
