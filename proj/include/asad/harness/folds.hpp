#pragma once

#include <cstdint>
#include <vector>

#include "asad/harness/windows.hpp"

namespace asad::harness {

inline constexpr std::size_t kFoldCount = 5;

/// Indices into the window list for one cross-validation round.
struct CvRound {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

struct FoldPlan {
  std::uint64_t seed = 0;
  std::size_t n_windows = 0;
  bool grouped_by_trial = false;
  /// fold_of[i] is the test fold of window i.
  std::vector<std::size_t> fold_of;
  std::vector<CvRound> rounds;

  std::vector<std::size_t> fold_members(std::size_t fold) const;
  std::vector<std::size_t> fold_sizes() const;
  /// Throws ValidationError on overlap, gaps or test leakage. Fold sizes
  /// must differ by at most one unless grouping by trial.
  void validate() const;
};

/// Seeded uniform shuffle dealt round-robin into folds; within each round the
/// training folds are shuffled again and split 4:1 into train and val.
FoldPlan make_folds(std::size_t n_windows, std::uint64_t seed, std::size_t folds = kFoldCount);

/// Keeps every (subject, trial) group inside a single fold: groups are
/// shuffled, then each goes to the currently smallest fold.
FoldPlan make_folds_by_trial(const std::vector<DecisionWindow>& windows, std::uint64_t seed,
                             std::size_t folds = kFoldCount);

FoldPlan make_folds(const std::vector<DecisionWindow>& windows, std::uint64_t seed,
                    bool group_by_trial = false);

/// Validation share of a training pool of size n (one fifth, at least one
/// when n >= 2).
std::size_t validation_size(std::size_t n);

}  // namespace asad::harness
