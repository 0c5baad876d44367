#pragma once
// Cross-validation folds, drawn separately over the annotated pool (samples
// with at least one box) and the unannotated pool. Fold f holds out every
// sample assigned to f; a fraction of each pool's remainder is used for
// training. The held-out annotated set of a fold never depends on the
// fractions.

#include <cstdint>
#include <vector>

#include "patchmil/data.hpp"

namespace patchmil {

struct FoldSplit {
  // Indices into the manifest's samples, ascending.
  std::vector<int> train_annotated;
  std::vector<int> train_unannotated;
  std::vector<int> eval_annotated;
  std::vector<int> eval_unannotated;

  std::vector<int> train() const;
  std::vector<int> eval() const;
  bool operator==(const FoldSplit&) const = default;
};

struct SplitPlan {
  int fold_count = 0;
  double annotated_fraction = 1.0;
  double unannotated_fraction = 1.0;
  std::uint64_t seed = 0;
  std::vector<FoldSplit> folds;
  bool operator==(const SplitPlan&) const = default;
};

// Throws ValidationError for fractions outside [0, 1], fold_count < 2 or
// more folds than samples in a non-empty pool.
SplitPlan make_splits(const DatasetManifest& manifest, int fold_count, double annotated_fraction,
                      double unannotated_fraction, std::uint64_t seed);

}  // namespace patchmil
