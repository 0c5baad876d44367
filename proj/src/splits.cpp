#include "patchmil/splits.hpp"

#include <algorithm>
#include <cmath>

#include "patchmil/error.hpp"
#include "patchmil/random.hpp"

namespace patchmil {

namespace {

std::vector<int> merged(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out;
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

// Assigns the pool round-robin to folds after a seeded shuffle, then picks the
// training share of each fold's remainder.
void split_pool(std::vector<int> pool, int fold_count, double fraction, Rng& rng,
                std::vector<std::vector<int>>& train, std::vector<std::vector<int>>& eval) {
  rng.shuffle(pool.begin(), pool.end());
  std::vector<int> fold_of(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) fold_of[i] = static_cast<int>(i % static_cast<std::size_t>(fold_count));
  for (int f = 0; f < fold_count; ++f) {
    std::vector<int> rest;
    for (std::size_t i = 0; i < pool.size(); ++i)
      (fold_of[i] == f ? eval[static_cast<std::size_t>(f)] : rest).push_back(pool[i]);
    const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(rest.size())));
    rest.resize(std::min(keep, rest.size()));
    train[static_cast<std::size_t>(f)] = std::move(rest);
    std::sort(train[static_cast<std::size_t>(f)].begin(), train[static_cast<std::size_t>(f)].end());
    std::sort(eval[static_cast<std::size_t>(f)].begin(), eval[static_cast<std::size_t>(f)].end());
  }
}

}  // namespace

std::vector<int> FoldSplit::train() const { return merged(train_annotated, train_unannotated); }
std::vector<int> FoldSplit::eval() const { return merged(eval_annotated, eval_unannotated); }

SplitPlan make_splits(const DatasetManifest& manifest, int fold_count, double annotated_fraction,
                      double unannotated_fraction, std::uint64_t seed) {
  if (fold_count < 2) throw ValidationError("splits: fold_count must be >= 2");
  for (double f : {annotated_fraction, unannotated_fraction})
    if (!(f >= 0.0 && f <= 1.0)) throw ValidationError("splits: fractions must lie in [0, 1]");

  std::vector<int> annotated, unannotated;
  for (std::size_t i = 0; i < manifest.samples.size(); ++i)
    (manifest.samples[i].annotated() ? annotated : unannotated).push_back(static_cast<int>(i));
  for (const auto* pool : {&annotated, &unannotated})
    if (!pool->empty() && pool->size() < static_cast<std::size_t>(fold_count))
      throw ValidationError("splits: a pool of " + std::to_string(pool->size()) + " samples cannot fill " +
                            std::to_string(fold_count) + " folds");

  SplitPlan plan{fold_count, annotated_fraction, unannotated_fraction, seed, {}};
  const auto n = static_cast<std::size_t>(fold_count);
  std::vector<std::vector<int>> ta(n), ea(n), tu(n), eu(n);
  // Independent streams per pool: the fraction of one pool never moves the other.
  Rng ra(seed * 2 + 1), ru(seed * 2 + 2);
  split_pool(annotated, fold_count, annotated_fraction, ra, ta, ea);
  split_pool(unannotated, fold_count, unannotated_fraction, ru, tu, eu);
  plan.folds.resize(n);
  for (std::size_t f = 0; f < n; ++f)
    plan.folds[f] = FoldSplit{std::move(ta[f]), std::move(tu[f]), std::move(ea[f]), std::move(eu[f])};
  return plan;
}

}  // namespace patchmil
