#pragma once
// Evaluation: image-level ROC/AUC at a fixed threshold grid, and region
// overlap (IoU, IoR) against ground-truth boxes at pixel resolution.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "patchmil/geometry.hpp"
#include "patchmil/localize.hpp"

namespace patchmil {

struct ScoredLabel {
  double score = 0.0;
  bool positive = false;
};

struct RocCurve {
  std::vector<double> thresholds;
  // Operating points sorted by (fpr, tpr), including the (0,0) and (1,1) anchors.
  std::vector<double> fpr;
  std::vector<double> tpr;
  double auc = 0.0;
};

inline constexpr int kRocThresholdCount = 200;

// ROC over `threshold_count` evenly spaced thresholds in [0, 1] (a sample is
// called positive when score >= threshold), integrated by the trapezoid rule.
// Throws ValidationError unless both classes are present.
RocCurve auc(std::span<const ScoredLabel> scores, int threshold_count = kRocThresholdCount);

// Exact rank statistic (Mann-Whitney U / (n+ n-)), ties counted as one half.
double rank_auc(std::span<const ScoredLabel> scores);

struct LocalizationJudgment {
  double iou = 0.0;
  double ior = 0.0;
  bool empty_prediction = false;

  bool correct(double iou_threshold, double ior_threshold) const {
    return iou > iou_threshold || ior > ior_threshold;
  }
};

double iou(const PixelMask& region, const PixelMask& truth);
double ior(const PixelMask& region, const PixelMask& truth);
double iou(const PixelMask& region, const BoundingBox& box);
double ior(const PixelMask& region, const BoundingBox& box);

// Judgment against the union of the ground-truth boxes of one class.
LocalizationJudgment judge(const PixelMask& region, const std::vector<BoundingBox>& truth_boxes);

enum class OverlapMeasure { IoU, IoR };
std::string to_string(OverlapMeasure m);

inline constexpr std::array<double, 7> kIouThresholds{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
inline constexpr std::array<double, 5> kIorThresholds{0.1, 0.25, 0.5, 0.75, 0.9};

// Fraction of judgments whose chosen overlap exceeds t strictly; nullopt when
// there is nothing to evaluate.
std::optional<double> localization_accuracy(std::span<const LocalizationJudgment> judgments,
                                            OverlapMeasure measure, double t);

}  // namespace patchmil
