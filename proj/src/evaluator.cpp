#include "patchmil/evaluator.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "patchmil/error.hpp"
#include "patchmil/localize.hpp"

namespace patchmil {

namespace {

std::string fixed(std::optional<double> v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

std::string exact(std::optional<double> v) {
  if (!v) return "absent";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", *v);
  return buf;
}

std::string threshold_label(double t) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%g", t);
  return buf;
}

std::optional<double> mean_of(const std::vector<std::optional<double>>& values) {
  double sum = 0.0;
  int n = 0;
  for (const auto& v : values)
    if (v) sum += *v, ++n;
  if (n == 0) return std::nullopt;
  return sum / n;
}

template <std::size_t N>
int threshold_index(const std::array<double, N>& grid, double t) {
  for (std::size_t i = 0; i < N; ++i)
    if (grid[i] == t) return static_cast<int>(i);
  return -1;
}

}  // namespace

std::optional<double> EvalReport::mean_auc() const { return mean_of(auc); }

std::optional<double> EvalReport::mean_localization(OverlapMeasure m, double t) const {
  const int idx = m == OverlapMeasure::IoU ? threshold_index(kIouThresholds, t) : threshold_index(kIorThresholds, t);
  if (idx < 0) throw ValidationError("mean_localization: " + threshold_label(t) + " is not on the report grid");
  std::vector<std::optional<double>> column;
  for (const auto& c : localization)
    column.push_back(m == OverlapMeasure::IoU ? c.iou_accuracy[static_cast<std::size_t>(idx)]
                                              : c.ior_accuracy[static_cast<std::size_t>(idx)]);
  return mean_of(column);
}

std::string EvalReport::table() const {
  std::ostringstream os;
  char buf[128];
  os << "config_hash " << config_hash << '\n';
  os << "eval images " << eval_images << ", annotated " << annotated_eval_images << ", T_s "
     << threshold_label(activation_threshold) << "\n\n";
  os << "classification AUC (200 thresholds; exact rank AUC alongside)\n";
  for (std::size_t k = 0; k < class_names.size(); ++k) {
    std::snprintf(buf, sizeof buf, "  %-10s %s  %s\n", class_names[k].c_str(), fixed(auc[k]).c_str(),
                  fixed(rank_auc[k]).c_str());
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "  %-10s %s  %s\n", "mean", fixed(mean_auc()).c_str(), fixed(mean_of(rank_auc)).c_str());
  os << buf;

  auto sweep = [&](OverlapMeasure m, const auto& grid) {
    os << "\nlocalization accuracy, " << to_string(m) << " > T\n";
    std::snprintf(buf, sizeof buf, "  %-10s %5s", "class", "n");
    os << buf;
    for (double t : grid) {
      std::snprintf(buf, sizeof buf, " %7s", threshold_label(t).c_str());
      os << buf;
    }
    os << '\n';
    for (std::size_t k = 0; k < class_names.size(); ++k) {
      const auto& c = localization[k];
      std::snprintf(buf, sizeof buf, "  %-10s %5d", class_names[k].c_str(), c.evaluated);
      os << buf;
      const auto& acc = m == OverlapMeasure::IoU ? c.iou_accuracy : c.ior_accuracy;
      for (const auto& a : acc) {
        std::snprintf(buf, sizeof buf, " %7s", fixed(a).c_str());
        os << buf;
      }
      os << '\n';
    }
    std::snprintf(buf, sizeof buf, "  %-10s %5s", "mean", "");
    os << buf;
    for (double t : grid) {
      std::snprintf(buf, sizeof buf, " %7s", fixed(mean_localization(m, t)).c_str());
      os << buf;
    }
    os << '\n';
  };
  sweep(OverlapMeasure::IoU, kIouThresholds);
  sweep(OverlapMeasure::IoR, kIorThresholds);
  return os.str();
}

std::string EvalReport::key_values() const {
  std::ostringstream os;
  os << "config_hash=" << config_hash << '\n';
  os << "eval_images=" << eval_images << '\n';
  os << "annotated_eval_images=" << annotated_eval_images << '\n';
  os << "activation_threshold=" << exact(activation_threshold) << '\n';
  for (std::size_t k = 0; k < class_names.size(); ++k) os << "auc." << class_names[k] << '=' << exact(auc[k]) << '\n';
  os << "auc.mean=" << exact(mean_auc()) << '\n';
  for (std::size_t k = 0; k < class_names.size(); ++k)
    os << "rank_auc." << class_names[k] << '=' << exact(rank_auc[k]) << '\n';
  auto sweep = [&](OverlapMeasure m, const auto& grid) {
    const std::string tag = m == OverlapMeasure::IoU ? "iou" : "ior";
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const std::string prefix = "loc." + tag + "." + threshold_label(grid[i]) + ".";
      for (std::size_t k = 0; k < class_names.size(); ++k) {
        const auto& acc = m == OverlapMeasure::IoU ? localization[k].iou_accuracy : localization[k].ior_accuracy;
        os << prefix << class_names[k] << '=' << exact(acc[i]) << '\n';
      }
      os << prefix << "mean=" << exact(mean_localization(m, grid[i])) << '\n';
    }
  };
  for (std::size_t k = 0; k < class_names.size(); ++k)
    os << "loc.evaluated." << class_names[k] << '=' << localization[k].evaluated << '\n';
  sweep(OverlapMeasure::IoU, kIouThresholds);
  sweep(OverlapMeasure::IoR, kIorThresholds);
  return os.str();
}

EvalReport evaluate_items(const std::vector<EvalItem>& items, const std::vector<std::string>& class_names,
                          const LossConfig& loss, double activation_threshold, const std::string& config_hash) {
  if (items.empty()) throw ValidationError("evaluate: empty eval set");
  const int k_count = static_cast<int>(class_names.size());
  EvalReport r;
  r.config_hash = config_hash;
  r.class_names = class_names;
  r.eval_images = static_cast<int>(items.size());
  r.activation_threshold = activation_threshold;

  for (const auto& it : items) {
    if (it.prediction.num_classes != k_count || static_cast<int>(it.labels.size()) != k_count)
      throw ValidationError("evaluate: item " + it.image_id + " does not have " + std::to_string(k_count) + " classes");
    if (!it.boxes.empty()) ++r.annotated_eval_images;
  }

  for (int k = 0; k < k_count; ++k) {
    std::vector<ScoredLabel> scored;
    scored.reserve(items.size());
    bool any_pos = false, any_neg = false;
    for (const auto& it : items) {
      const bool pos = it.labels[static_cast<std::size_t>(k)] != 0;
      scored.push_back({image_prob_unannotated(it.prediction.class_scores(k), loss), pos});
      (pos ? any_pos : any_neg) = true;
    }
    r.auc.push_back(any_pos && any_neg ? std::optional<double>(auc(scored).auc) : std::nullopt);
    r.rank_auc.push_back(any_pos && any_neg ? std::optional<double>(patchmil::rank_auc(scored)) : std::nullopt);
  }

  std::vector<std::vector<LocalizationJudgment>> judged(static_cast<std::size_t>(k_count));
  for (const auto& it : items) {
    if (it.boxes.empty()) continue;
    const auto regions = extract_regions(it.prediction, activation_threshold);
    for (int k = 0; k < k_count; ++k) {
      if (!it.labels[static_cast<std::size_t>(k)]) continue;
      std::vector<BoundingBox> truth;
      for (const auto& b : it.boxes)
        if (b.class_index == k) truth.push_back(b);
      if (truth.empty()) continue;
      const PixelMask mask = region_to_pixel_mask(regions[static_cast<std::size_t>(k)]);
      judged[static_cast<std::size_t>(k)].push_back(judge(mask, truth));
    }
  }
  for (int k = 0; k < k_count; ++k) {
    const auto& j = judged[static_cast<std::size_t>(k)];
    ClassLocalization c;
    c.evaluated = static_cast<int>(j.size());
    for (double t : kIouThresholds) c.iou_accuracy.push_back(localization_accuracy(j, OverlapMeasure::IoU, t));
    for (double t : kIorThresholds) c.ior_accuracy.push_back(localization_accuracy(j, OverlapMeasure::IoR, t));
    r.localization.push_back(std::move(c));
  }
  return r;
}

std::vector<PredictionTensor> predict_all(PatchModel& model, const PreparedDataset& data,
                                          const std::vector<int>& indices, int chunk) {
  std::vector<PredictionTensor> out;
  out.reserve(indices.size());
  for (std::size_t start = 0; start < indices.size(); start += static_cast<std::size_t>(chunk)) {
    const std::size_t end = std::min(indices.size(), start + static_cast<std::size_t>(chunk));
    const std::vector<int> part(indices.begin() + static_cast<long>(start), indices.begin() + static_cast<long>(end));
    for (auto& p : model.predict(batch_tensor(data, part))) out.push_back(std::move(p));
  }
  return out;
}

EvalReport evaluate(PatchModel& model, const RunConfig& config, const PreparedDataset& data, const FoldSplit& split) {
  if (data.manifest.num_classes() != model.config().num_classes)
    throw ConfigError("evaluate: checkpoint has " + std::to_string(model.config().num_classes) +
                      " classes but the manifest declares " + std::to_string(data.manifest.num_classes()));
  const std::vector<int> ids = split.eval();
  if (ids.empty()) throw ValidationError("evaluate: empty eval pool");
  const auto preds = predict_all(model, data, ids);
  std::vector<EvalItem> items;
  items.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto idx = static_cast<std::size_t>(ids[i]);
    const auto& s = data.manifest.samples[idx];
    items.push_back({s.image_id, preds[i], s.labels, data.images[idx].boxes});
  }
  return evaluate_items(items, data.manifest.class_names, config.loss, config.activation_threshold, config.hash());
}

}  // namespace patchmil
