#pragma once

#include <string>
#include <vector>

#include "b2d/nn/model_config.hpp"
#include "b2d/pipeline/training.hpp"

namespace b2d {

struct Mutation {
  std::string id;  // e.g. "A.b2.filters=32", "B.bn-relu-pool", "C.b1"
  std::string description;
  nn::ModelConfig config;
};

enum class AblationSuite { A, B, C };

// Throws ConfigError for anything but "A", "B", "C".
AblationSuite parse_suite(std::string_view s);

// A: filter counts and kernel sizes per block. B: every order of ReLU, BatchNorm
// and MaxPool applied to each block that has all three. C: depthwise
// convolutions replaced by standard convolutions, one block at a time and all at once.
std::vector<Mutation> ablation_suite(AblationSuite suite, const nn::ModelConfig& base);

// Permutations of the (ReLU, BatchNorm, MaxPool) run in every block that has one.
std::vector<std::vector<nn::LayerKind>> block_orderings();

struct AblationRow {
  std::string mutation_id;
  std::int64_t params = 0;
  RunReport report;
};

// One row per (mutation, fold) in that order. A mutation whose config does not
// type-check raises ConfigError naming it before any training starts.
std::vector<AblationRow> run_ablation(const std::vector<Mutation>& suite, const ImageDataset& ds,
                                      const std::vector<FoldSplit>& folds, const Hyper& hyper, int threads = 1);

}  // namespace b2d
