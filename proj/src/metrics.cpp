#include "patchmil/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "patchmil/error.hpp"

namespace patchmil {

namespace {

void count_classes(std::span<const ScoredLabel> scores, std::size_t& pos, std::size_t& neg) {
  pos = 0, neg = 0;
  for (const auto& s : scores) (s.positive ? pos : neg)++;
  if (pos == 0 || neg == 0)
    throw ValidationError("auc: undefined without both positive and negative samples");
}

}  // namespace

RocCurve auc(std::span<const ScoredLabel> scores, int threshold_count) {
  if (threshold_count < 2) throw ValidationError("auc: need at least two thresholds");
  std::size_t n_pos, n_neg;
  count_classes(scores, n_pos, n_neg);

  RocCurve roc;
  roc.thresholds.resize(static_cast<std::size_t>(threshold_count));
  std::vector<std::pair<double, double>> points;
  points.reserve(roc.thresholds.size() + 2);
  points.emplace_back(0.0, 0.0);
  points.emplace_back(1.0, 1.0);
  for (int t = 0; t < threshold_count; ++t) {
    const double thr = static_cast<double>(t) / (threshold_count - 1);
    roc.thresholds[static_cast<std::size_t>(t)] = thr;
    std::size_t tp = 0, fp = 0;
    for (const auto& s : scores) {
      if (s.score >= thr) (s.positive ? tp : fp)++;
    }
    points.emplace_back(static_cast<double>(fp) / n_neg, static_cast<double>(tp) / n_pos);
  }
  std::sort(points.begin(), points.end());
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i)
    area += (points[i].first - points[i - 1].first) * (points[i].second + points[i - 1].second) * 0.5;
  roc.fpr.reserve(points.size());
  roc.tpr.reserve(points.size());
  for (const auto& [f, t] : points) roc.fpr.push_back(f), roc.tpr.push_back(t);
  roc.auc = area;
  return roc;
}

double rank_auc(std::span<const ScoredLabel> scores) {
  std::size_t n_pos, n_neg;
  count_classes(scores, n_pos, n_neg);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a].score < scores[b].score; });
  // Sum of mid-ranks of the positives.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]].score == scores[order[i]].score) ++j;
    const double mid = (static_cast<double>(i) + static_cast<double>(j) + 1.0) / 2.0;
    for (std::size_t t = i; t < j; ++t)
      if (scores[order[t]].positive) rank_sum += mid;
    i = j;
  }
  const double u = rank_sum - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * n_neg);
}

namespace {

void same_size(const PixelMask& a, const PixelMask& b) {
  if (a.width != b.width || a.height != b.height) throw ValidationError("overlap: mask size mismatch");
}

std::pair<std::size_t, std::size_t> intersection_union(const PixelMask& a, const PixelMask& b) {
  same_size(a, b);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    inter += (a.bits[i] & b.bits[i]);
    uni += (a.bits[i] | b.bits[i]);
  }
  return {inter, uni};
}

}  // namespace

double iou(const PixelMask& region, const PixelMask& truth) {
  const auto [inter, uni] = intersection_union(region, truth);
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double ior(const PixelMask& region, const PixelMask& truth) {
  const auto [inter, uni] = intersection_union(region, truth);
  const std::size_t area = region.count();
  return area == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(area);
}

double iou(const PixelMask& region, const BoundingBox& box) {
  return iou(region, boxes_to_pixel_mask({box}, region.width, region.height));
}

double ior(const PixelMask& region, const BoundingBox& box) {
  return ior(region, boxes_to_pixel_mask({box}, region.width, region.height));
}

LocalizationJudgment judge(const PixelMask& region, const std::vector<BoundingBox>& truth_boxes) {
  const PixelMask truth = boxes_to_pixel_mask(truth_boxes, region.width, region.height);
  LocalizationJudgment j;
  j.iou = iou(region, truth);
  j.ior = ior(region, truth);
  j.empty_prediction = region.count() == 0;
  return j;
}

std::string to_string(OverlapMeasure m) { return m == OverlapMeasure::IoU ? "IoU" : "IoR"; }

std::optional<double> localization_accuracy(std::span<const LocalizationJudgment> judgments,
                                            OverlapMeasure measure, double t) {
  if (judgments.empty()) return std::nullopt;
  std::size_t hits = 0;
  for (const auto& j : judgments) {
    const double v = measure == OverlapMeasure::IoU ? j.iou : j.ior;
    if (v > t) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(judgments.size());
}

}  // namespace patchmil
