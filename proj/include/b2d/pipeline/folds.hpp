#pragma once

#include <map>
#include <string>
#include <vector>

#include "b2d/eeg_io.hpp"
#include "b2d/pipeline/dataset.hpp"

namespace b2d {

using SubjectsByCondition = std::map<Condition, std::vector<std::string>>;

struct FoldSplit {
  int fold_index = 0;
  std::vector<std::string> train_subjects;  // sorted by condition label, then id
  std::vector<std::string> test_subjects;   // one per condition, expert first
  double validation_fraction = 0.1;
  bool operator==(const FoldSplit&) const = default;
};

// Distinct subjects per condition, sorted by id.
SubjectsByCondition subjects_of(const ImageDataset& ds);

// Leave-one-subject-out: fold i tests the i-th subject (sorted by id) of every
// condition. Throws DataError unless all three conditions have the same, nonzero count.
std::vector<FoldSplit> loso_folds(const SubjectsByCondition& subjects);

struct FoldIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

// Sample indices of a fold. Validation takes the last floor(fraction * n)
// training samples of each condition, in dataset order.
FoldIndices split_indices(const ImageDataset& ds, const FoldSplit& fold);

}  // namespace b2d
