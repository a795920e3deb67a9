#include "b2d/pipeline/folds.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "b2d/error.hpp"

namespace b2d {

SubjectsByCondition subjects_of(const ImageDataset& ds) {
  std::map<Condition, std::set<std::string>> seen;
  for (const auto& m : ds.meta) seen[m.condition].insert(m.subject_id);
  SubjectsByCondition out;
  for (auto& [c, s] : seen) out[c] = std::vector<std::string>(s.begin(), s.end());
  return out;
}

std::vector<FoldSplit> loso_folds(const SubjectsByCondition& subjects) {
  std::map<Condition, std::vector<std::string>> sorted;
  std::size_t n = 0;
  for (auto c : kConditions) {
    auto it = subjects.find(c);
    if (it == subjects.end() || it->second.empty())
      throw DataError("loso: no subjects for condition " + std::string(to_string(c)));
    auto v = it->second;
    std::sort(v.begin(), v.end());
    if (std::adjacent_find(v.begin(), v.end()) != v.end())
      throw DataError("loso: duplicate subject in condition " + std::string(to_string(c)));
    if (n == 0) n = v.size();
    if (v.size() != n)
      throw DataError("loso: unequal condition sizes (" + std::to_string(n) + " vs " + std::to_string(v.size()) +
                      " for " + std::string(to_string(c)) + ")");
    sorted[c] = std::move(v);
  }
  std::vector<FoldSplit> folds;
  for (std::size_t i = 0; i < n; ++i) {
    FoldSplit f;
    f.fold_index = static_cast<int>(i);
    for (auto c : kConditions) {
      const auto& v = sorted[c];
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i)
          f.test_subjects.push_back(v[j]);
        else
          f.train_subjects.push_back(v[j]);
      }
    }
    folds.push_back(std::move(f));
  }
  return folds;
}

FoldIndices split_indices(const ImageDataset& ds, const FoldSplit& fold) {
  if (!(fold.validation_fraction >= 0.0 && fold.validation_fraction < 1.0))
    throw ConfigError("validation_fraction must be in [0,1)");
  const std::set<std::string> train(fold.train_subjects.begin(), fold.train_subjects.end());
  const std::set<std::string> test(fold.test_subjects.begin(), fold.test_subjects.end());
  for (const auto& s : test)
    if (train.count(s)) throw DataError("fold " + std::to_string(fold.fold_index) + ": subject '" + s + "' on both sides");

  FoldIndices out;
  std::map<Condition, std::vector<std::size_t>> train_by_cond;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& sid = ds.meta[i].subject_id;
    if (train.count(sid))
      train_by_cond[ds.meta[i].condition].push_back(i);
    else if (test.count(sid))
      out.test.push_back(i);
  }
  for (auto c : kConditions) {
    const auto& v = train_by_cond[c];
    const auto n_val = static_cast<std::size_t>(std::floor(fold.validation_fraction * static_cast<double>(v.size())));
    out.train.insert(out.train.end(), v.begin(), v.end() - static_cast<std::ptrdiff_t>(n_val));
    out.validation.insert(out.validation.end(), v.end() - static_cast<std::ptrdiff_t>(n_val), v.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.validation.begin(), out.validation.end());
  return out;
}

}  // namespace b2d
