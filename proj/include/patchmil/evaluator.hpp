#pragma once
// Evaluation protocol: image scores from the MIL (unannotated-branch) formula
// give per-class AUC over the whole eval set; regions extracted at T_s are
// judged against the boxes of the annotated eval images.

#include <optional>
#include <string>
#include <vector>

#include "patchmil/config.hpp"
#include "patchmil/metrics.hpp"
#include "patchmil/model.hpp"
#include "patchmil/splits.hpp"
#include "patchmil/trainer.hpp"

namespace patchmil {

struct EvalItem {
  std::string image_id;
  PredictionTensor prediction;
  std::vector<std::uint8_t> labels;
  std::vector<BoundingBox> boxes;  // in prediction-grid image coordinates; empty when unannotated
};

struct ClassLocalization {
  int evaluated = 0;  // positive annotated images with boxes of the class
  std::vector<std::optional<double>> iou_accuracy;  // one per kIouThresholds
  std::vector<std::optional<double>> ior_accuracy;  // one per kIorThresholds
};

struct EvalReport {
  std::string config_hash;
  std::vector<std::string> class_names;
  int eval_images = 0;
  int annotated_eval_images = 0;
  double activation_threshold = kDefaultActivationThreshold;
  std::vector<std::optional<double>> auc;  // per class; absent when one label value is missing
  std::vector<std::optional<double>> rank_auc;  // exact rank statistic, for reference
  std::vector<ClassLocalization> localization;

  // Means over the classes where the value is present.
  std::optional<double> mean_auc() const;
  std::optional<double> mean_localization(OverlapMeasure m, double t) const;

  std::string table() const;      // human-readable
  std::string key_values() const; // one key=value per line
};

EvalReport evaluate_items(const std::vector<EvalItem>& items, const std::vector<std::string>& class_names,
                          const LossConfig& loss, double activation_threshold, const std::string& config_hash);

// Runs the model over the fold's eval set. Throws ValidationError when the
// eval set is empty and ConfigError when K differs from the manifest.
EvalReport evaluate(PatchModel& model, const RunConfig& config, const PreparedDataset& data, const FoldSplit& split);

// Inference in fixed-size chunks (batch statistics are never used).
std::vector<PredictionTensor> predict_all(PatchModel& model, const PreparedDataset& data,
                                          const std::vector<int>& indices, int chunk = 64);

}  // namespace patchmil
