#pragma once
// Training loop. Samples are preprocessed once up front; each epoch visits the
// training split in a seeded shuffle, so annotated and unannotated images mix
// within batches in proportion to their share of the split.

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "patchmil/config.hpp"
#include "patchmil/data.hpp"
#include "patchmil/mil_loss.hpp"
#include "patchmil/model.hpp"
#include "patchmil/optimizer.hpp"
#include "patchmil/splits.hpp"

namespace patchmil {

// A manifest with every image preprocessed to the model's input side.
struct PreparedDataset {
  DatasetManifest manifest;
  std::vector<PreparedImage> images;  // parallel to manifest.samples
  int side = 0;
};

PreparedDataset prepare_dataset(const DatasetManifest& manifest, int side);
// Same, from images already in memory (parallel to manifest.samples).
PreparedDataset prepare_dataset(const DatasetManifest& manifest, const std::vector<Image>& images, int side);

// Stacks samples into a [N, 3, side, side] tensor.
Tensor batch_tensor(const PreparedDataset& data, const std::vector<int>& indices);

// Per-class supervision: classes with at least one box are routed to the
// annotated branch (boxes of a class are merged), other classes to the
// image-level branch.
SupervisionLabel supervision_for(const ImageSample& sample, const PreparedImage& image, const PatchGrid& grid);

struct TrainLogEntry {
  long iteration = 0;
  double learning_rate = 0.0;
  LossBreakdown loss;
};

std::string format_log_entry(const TrainLogEntry& e);

class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(long iteration, std::vector<std::string> batch_ids);
  long iteration() const { return iteration_; }
  const std::vector<std::string>& batch_ids() const { return batch_ids_; }

 private:
  long iteration_;
  std::vector<std::string> batch_ids_;
};

struct TrainOptions {
  std::filesystem::path checkpoint;  // empty: no checkpoints written
  std::ostream* log = nullptr;       // every log_interval iterations plus the last
};

struct TrainResult {
  std::vector<TrainLogEntry> log;  // one entry per iteration
  long iterations = 0;
};

class Trainer {
 public:
  // The model is initialized from config.seed here.
  Trainer(const RunConfig& config, const PreparedDataset& data, const FoldSplit& split, PatchModel& model);

  TrainResult run(const TrainOptions& options = {});
  // One optimization step on the given sample indices.
  TrainLogEntry step(const std::vector<int>& batch, long iteration);

 private:
  std::vector<int> next_batch();

  RunConfig config_;
  const PreparedDataset& data_;
  PatchModel& model_;
  std::vector<int> train_;
  std::vector<Parameter*> params_;
  Adam adam_;
  Rng shuffle_rng_;
  std::vector<int> order_;
  std::size_t cursor_ = 0;
};

// Share of the parameter-gradient norm due to the annotated branch on a fixed
// batch: |g_a| / (|g_a| + |g_u|). Uses the model's current weights in
// training mode.
double annotated_gradient_share(PatchModel& model, const Tensor& images,
                                const std::vector<SupervisionLabel>& labels, const LossConfig& loss);

}  // namespace patchmil
