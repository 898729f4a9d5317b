#include "asad/harness/folds.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "asad/error.hpp"
#include "asad/rng.hpp"

namespace asad::harness {

namespace {

constexpr std::uint64_t kAssignStream = 0xF01D;
constexpr std::uint64_t kSplitStream = 0x5B117;

void build_rounds(FoldPlan& plan, std::size_t folds) {
  plan.rounds.assign(folds, {});
  for (std::size_t f = 0; f < folds; ++f) {
    CvRound& round = plan.rounds[f];
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < plan.n_windows; ++i) {
      (plan.fold_of[i] == f ? round.test : pool).push_back(i);
    }
    Rng rng(derive_seed(plan.seed, kSplitStream, f));
    rng.shuffle(std::span<std::size_t>(pool));
    const std::size_t n_val = validation_size(pool.size());
    round.val.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_val));
    round.train.assign(pool.begin() + static_cast<std::ptrdiff_t>(n_val), pool.end());
    std::sort(round.val.begin(), round.val.end());
    std::sort(round.train.begin(), round.train.end());
  }
}

void require_enough(std::size_t n, std::size_t folds) {
  if (folds < 2) throw ValidationError("cross-validation needs at least 2 folds");
  if (n < folds) {
    throw ValidationError(std::to_string(folds) + "-fold cross-validation needs at least " +
                          std::to_string(folds) + " windows, got " + std::to_string(n));
  }
}

}  // namespace

std::size_t validation_size(std::size_t n) {
  if (n < 2) return 0;
  return std::max<std::size_t>(1, n / 5);
}

std::vector<std::size_t> FoldPlan::fold_members(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] == fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::fold_sizes() const {
  std::vector<std::size_t> sizes(rounds.size(), 0);
  for (std::size_t f : fold_of) ++sizes.at(f);
  return sizes;
}

void FoldPlan::validate() const {
  if (fold_of.size() != n_windows) throw ValidationError("fold map does not cover every window");
  for (std::size_t f : fold_of) {
    if (f >= rounds.size()) throw ValidationError("window assigned to nonexistent fold");
  }
  const auto sizes = fold_sizes();
  const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
  if (!grouped_by_trial && *hi - *lo > 1) {
    throw ValidationError("fold sizes differ by " + std::to_string(*hi - *lo));
  }
  for (std::size_t f = 0; f < rounds.size(); ++f) {
    const CvRound& round = rounds[f];
    std::vector<int> seen(n_windows, 0);
    for (std::size_t i : round.test) {
      if (fold_of.at(i) != f) throw ValidationError("round " + std::to_string(f) + " test set holds a window of another fold");
      seen[i] |= 1;
    }
    for (std::size_t i : round.train) {
      if (seen.at(i)) throw ValidationError("round " + std::to_string(f) + " leaks window " + std::to_string(i) + " into train");
      seen[i] |= 2;
    }
    for (std::size_t i : round.val) {
      if (seen.at(i)) throw ValidationError("round " + std::to_string(f) + " leaks window " + std::to_string(i) + " into val");
      seen[i] |= 4;
    }
    if (std::count(seen.begin(), seen.end(), 0) != 0) {
      throw ValidationError("round " + std::to_string(f) + " leaves windows unassigned");
    }
    if (round.test.size() != sizes[f]) throw ValidationError("round test set differs from its fold");
  }
}

FoldPlan make_folds(std::size_t n_windows, std::uint64_t seed, std::size_t folds) {
  require_enough(n_windows, folds);
  FoldPlan plan;
  plan.seed = seed;
  plan.n_windows = n_windows;
  std::vector<std::size_t> order(n_windows);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, kAssignStream));
  rng.shuffle(std::span<std::size_t>(order));
  plan.fold_of.assign(n_windows, 0);
  for (std::size_t k = 0; k < n_windows; ++k) plan.fold_of[order[k]] = k % folds;
  build_rounds(plan, folds);
  return plan;
}

FoldPlan make_folds_by_trial(const std::vector<DecisionWindow>& windows, std::uint64_t seed,
                             std::size_t folds) {
  require_enough(windows.size(), folds);
  std::map<std::pair<std::string, std::uint32_t>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    groups[{windows[i].subject_id, windows[i].trial_id}].push_back(i);
  }
  if (groups.size() < folds) {
    throw ValidationError("grouping by trial needs at least " + std::to_string(folds) +
                          " trials, got " + std::to_string(groups.size()));
  }
  std::vector<const std::vector<std::size_t>*> order;
  for (const auto& [key, members] : groups) order.push_back(&members);
  Rng rng(derive_seed(seed, kAssignStream));
  rng.shuffle(std::span<const std::vector<std::size_t>*>(order));

  FoldPlan plan;
  plan.seed = seed;
  plan.n_windows = windows.size();
  plan.grouped_by_trial = true;
  plan.fold_of.assign(windows.size(), 0);
  std::vector<std::size_t> sizes(folds, 0);
  for (const auto* members : order) {
    const std::size_t f = static_cast<std::size_t>(
        std::min_element(sizes.begin(), sizes.end()) - sizes.begin());
    for (std::size_t i : *members) plan.fold_of[i] = f;
    sizes[f] += members->size();
  }
  build_rounds(plan, folds);
  return plan;
}

FoldPlan make_folds(const std::vector<DecisionWindow>& windows, std::uint64_t seed,
                    bool group_by_trial) {
  return group_by_trial ? make_folds_by_trial(windows, seed) : make_folds(windows.size(), seed);
}

}  // namespace asad::harness
