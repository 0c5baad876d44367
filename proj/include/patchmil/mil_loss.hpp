#pragma once
// Joint multiple-instance loss over patch probabilities.
//
// For class k and image i with patch scores p_j (j in M, |M| = m):
//   annotated (box given, positives N):  P_box = prod_{j in N} s+(p_j) * prod_{j not in N} s-(p_j)
//   unannotated:                         P_img = 1 - prod_{j in M} s-(p_j)
// with the smoothing maps s+(p) = lo + (hi - lo) p and s-(p) = lo + (hi - lo)(1 - p).
// The class loss is
//   L_k = -lambda_bbox * sum_{annotated} log P_box
//         - sum_{unannotated} [y log P_img + (1 - y) log(1 - P_img)]
// and the total loss sums L_k over classes plus an L2 penalty. All products
// are accumulated as sums of logarithms.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "patchmil/geometry.hpp"
#include "patchmil/tensor.hpp"

namespace patchmil {

struct LossConfig {
  double lambda_bbox = 5.0;
  double smooth_low = 0.98;
  double smooth_high = 1.0;
  double l2_coefficient = 1e-4;
  // When false the annotated-image product uses raw p and 1 - p (ablation).
  bool smooth_annotated = true;
  // Optional per-class multipliers of L_k; empty means all ones.
  std::vector<double> class_weights;

  void validate() const;  // throws ValidationError
  double class_weight(int k) const;
  // smooth_low = 0, smooth_high = 1: plain products.
  static LossConfig unsmoothed();
  bool operator==(const LossConfig&) const = default;
};

struct SmoothedFactors {
  double positive;  // s+(p)
  double negative;  // s-(p)
};

SmoothedFactors smooth(double p, const LossConfig& config);

// Per-image supervision over K classes. boxes[k] holds the positive patches
// when the (image, class) pair is annotated; an annotated pair is positive.
struct SupervisionLabel {
  std::vector<std::uint8_t> labels;
  std::vector<std::optional<PatchLabelSet>> boxes;

  int num_classes() const { return static_cast<int>(labels.size()); }
  bool annotated(int k) const { return boxes[static_cast<std::size_t>(k)].has_value(); }
  void validate(int num_classes, int patch_count) const;
};

double image_prob_annotated(std::span<const double> scores, const PatchLabelSet& positives,
                            const LossConfig& config);
double image_prob_unannotated(std::span<const double> scores, const LossConfig& config);

// Losses split by branch. total() is their sum.
struct LossBreakdown {
  double annotated = 0.0;
  double unannotated = 0.0;
  double l2 = 0.0;
  double total() const { return annotated + unannotated + l2; }
  LossBreakdown& operator+=(const LossBreakdown& o) {
    annotated += o.annotated, unannotated += o.unannotated, l2 += o.l2;
    return *this;
  }
};

// One image's view for a single class.
struct ClassObservation {
  std::span<const double> scores;  // length m
  bool positive = false;
  const PatchLabelSet* box = nullptr;  // non-null iff annotated
};

LossBreakdown class_loss(std::span<const ClassObservation> batch, int k, const LossConfig& config);

// Probability-domain total: sum_k L_k + l2_coefficient * l2_sum_squares.
// scores[i] is image i's prediction in PredictionTensor layout (j * K + k).
LossBreakdown total_loss(std::span<const std::vector<double>> scores,
                         std::span<const SupervisionLabel> labels, int num_classes,
                         const LossConfig& config, double l2_sum_squares = 0.0);

// Which class terms contribute (gradient attribution across the two branches).
enum class Branch { Both, Annotated, Unannotated };

// Logit-domain data loss (no L2) with its gradient. logits[i] is class-major
// ([k * m + j]); grads, when given, is resized to match and overwritten.
LossBreakdown loss_from_logits(std::span<const std::vector<double>> logits,
                               std::span<const SupervisionLabel> labels, int num_classes,
                               const LossConfig& config,
                               std::vector<std::vector<double>>* grads = nullptr,
                               Branch branch = Branch::Both);

// Same, for a logits tensor [N, K, P, P] from the model; dlogits gets the
// float gradient when non-null.
LossBreakdown loss_from_logits(const Tensor& logits, std::span<const SupervisionLabel> labels,
                               const LossConfig& config, Tensor* dlogits = nullptr,
                               Branch branch = Branch::Both);

// l2_coefficient * sum ||theta||^2, adding its gradient to each parameter.
double l2_penalty(std::span<Parameter* const> params, const LossConfig& config, bool add_grad);

}  // namespace patchmil
