#include "patchmil/mil_loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "patchmil/error.hpp"
#include "patchmil/layers.hpp"

namespace patchmil {

void LossConfig::validate() const {
  if (!(lambda_bbox > 0.0)) throw ValidationError("loss: lambda_bbox must be > 0");
  if (!(smooth_low >= 0.0 && smooth_low < smooth_high && smooth_high <= 1.0))
    throw ValidationError("loss: need 0 <= smooth_low < smooth_high <= 1");
  if (!(l2_coefficient >= 0.0)) throw ValidationError("loss: l2_coefficient must be >= 0");
  for (double w : class_weights)
    if (!(w >= 0.0)) throw ValidationError("loss: class weights must be >= 0");
}

double LossConfig::class_weight(int k) const {
  if (class_weights.empty()) return 1.0;
  if (k < 0 || static_cast<std::size_t>(k) >= class_weights.size())
    throw ValidationError("loss: no class weight for class " + std::to_string(k));
  return class_weights[static_cast<std::size_t>(k)];
}

LossConfig LossConfig::unsmoothed() {
  LossConfig c;
  c.smooth_low = 0.0;
  c.smooth_high = 1.0;
  return c;
}

SmoothedFactors smooth(double p, const LossConfig& config) {
  constexpr double tol = 1e-12;
  if (!(p >= -tol && p <= 1.0 + tol)) throw ValidationError("smooth: probability outside [0, 1]");
  p = std::clamp(p, 0.0, 1.0);
  const double span = config.smooth_high - config.smooth_low;
  return {config.smooth_low + span * p, config.smooth_low + span * (1.0 - p)};
}

void SupervisionLabel::validate(int num_classes, int patch_count) const {
  if (static_cast<int>(labels.size()) != num_classes || static_cast<int>(boxes.size()) != num_classes)
    throw ValidationError("supervision: label vectors must have one entry per class");
  for (int k = 0; k < num_classes; ++k) {
    const auto& box = boxes[static_cast<std::size_t>(k)];
    if (!box) continue;
    if (!labels[static_cast<std::size_t>(k)])
      throw ValidationError("supervision: class " + std::to_string(k) + " has a box but a negative label");
    if (box->grid.patch_count() != patch_count)
      throw ValidationError("supervision: box patch set was built for a different grid");
  }
}

namespace {

// One (image, class) term. p and q = 1 - p are passed separately so that
// logit inputs keep full precision in both. Returns the weighted loss and, if
// grad is non-empty, writes dL/dz_j (z the logit, dp/dz = p q).
struct Term {
  double loss;
  bool annotated;
};

double log_factor(double a, double b, double x) { return a == 0.0 ? std::log(b * x) : std::log(a + b * x); }

// d log(a + b x) / dz where dx/dz = sign * p * q and x is p (sign +1) or q (sign -1).
double dlog_factor(double a, double b, double x, double p, double q, double sign) {
  if (a == 0.0) return sign * (sign > 0 ? q : p);
  return sign * b * p * q / (a + b * x);
}

constexpr double kTiny = std::numeric_limits<double>::min();

Term class_term(std::span<const double> p, std::span<const double> q, bool positive,
                const PatchLabelSet* box, const LossConfig& config, double weight,
                std::span<double> grad) {
  const std::size_t m = p.size();
  if (m == 0) throw ValidationError("loss: empty score list");
  const bool want_grad = !grad.empty();

  if (box != nullptr) {
    if (!positive) throw ValidationError("loss: annotated observation must be positive");
    if (static_cast<std::size_t>(box->grid.patch_count()) != m)
      throw ValidationError("loss: box grid does not match score count");
    const bool smoothed = config.smooth_annotated;
    const double a = smoothed ? config.smooth_low : 0.0;
    const double b = smoothed ? config.smooth_high - config.smooth_low : 1.0;
    const auto member = box->membership();
    const double scale = config.lambda_bbox * weight;
    double log_prob = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const bool in = member[j] != 0;
      log_prob += in ? log_factor(a, b, p[j]) : log_factor(a, b, q[j]);
      if (want_grad)
        grad[j] = -scale * (in ? dlog_factor(a, b, p[j], p[j], q[j], 1.0)
                               : dlog_factor(a, b, q[j], p[j], q[j], -1.0));
    }
    return {-scale * log_prob, true};
  }

  const double a = config.smooth_low;
  const double b = config.smooth_high - config.smooth_low;
  double log_q = 0.0;  // log prod s-(p_j)
  for (std::size_t j = 0; j < m; ++j) log_q += log_factor(a, b, q[j]);

  double loss, dloss_dlogq;
  if (positive) {
    // -log(1 - Q), floored so an all-zero positive stays finite.
    const double one_minus_q = std::max(-std::expm1(log_q), kTiny);
    loss = -std::log(one_minus_q);
    dloss_dlogq = std::exp(log_q) / one_minus_q;
  } else {
    loss = -log_q;
    dloss_dlogq = -1.0;
  }
  if (want_grad)
    for (std::size_t j = 0; j < m; ++j)
      grad[j] = weight * dloss_dlogq * dlog_factor(a, b, q[j], p[j], q[j], -1.0);
  return {weight * loss, false};
}

std::vector<double> complement(std::span<const double> p) {
  std::vector<double> q(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) q[j] = 1.0 - p[j];
  return q;
}

void check_probabilities(std::span<const double> scores) {
  if (scores.empty()) throw ValidationError("loss: empty score list");
  for (double s : scores)
    if (!(s >= 0.0 && s <= 1.0)) throw ValidationError("loss: score outside [0, 1]");
}

}  // namespace

double image_prob_annotated(std::span<const double> scores, const PatchLabelSet& positives,
                            const LossConfig& config) {
  check_probabilities(scores);
  if (static_cast<std::size_t>(positives.grid.patch_count()) != scores.size())
    throw ValidationError("image_prob_annotated: positives built for a different grid");
  const auto q = complement(scores);
  const Term t = class_term(scores, q, true, &positives, config, 1.0, {});
  return std::exp(-t.loss / config.lambda_bbox);
}

double image_prob_unannotated(std::span<const double> scores, const LossConfig& config) {
  check_probabilities(scores);
  const double a = config.smooth_low;
  const double b = config.smooth_high - config.smooth_low;
  double log_q = 0.0;
  for (double s : scores) log_q += log_factor(a, b, 1.0 - s);
  return -std::expm1(log_q);
}

LossBreakdown class_loss(std::span<const ClassObservation> batch, int k, const LossConfig& config) {
  config.validate();
  const double weight = config.class_weight(k);
  LossBreakdown out;
  for (const ClassObservation& obs : batch) {
    check_probabilities(obs.scores);
    const auto q = complement(obs.scores);
    const Term t = class_term(obs.scores, q, obs.positive, obs.box, config, weight, {});
    (t.annotated ? out.annotated : out.unannotated) += t.loss;
  }
  return out;
}

LossBreakdown total_loss(std::span<const std::vector<double>> scores,
                         std::span<const SupervisionLabel> labels, int num_classes,
                         const LossConfig& config, double l2_sum_squares) {
  if (num_classes < 1) throw ValidationError("total_loss: need at least one class");
  if (scores.size() != labels.size()) throw ValidationError("total_loss: scores/labels size mismatch");
  LossBreakdown out;
  std::vector<std::vector<double>> per_class(scores.size());
  for (int k = 0; k < num_classes; ++k) {
    std::vector<ClassObservation> batch;
    batch.reserve(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const auto& s = scores[i];
      if (s.size() % static_cast<std::size_t>(num_classes) != 0)
        throw ValidationError("total_loss: score vector is not m * K long");
      const std::size_t m = s.size() / static_cast<std::size_t>(num_classes);
      labels[i].validate(num_classes, static_cast<int>(m));
      auto& col = per_class[i];
      col.resize(m);
      for (std::size_t j = 0; j < m; ++j) col[j] = s[j * num_classes + static_cast<std::size_t>(k)];
      const auto& box = labels[i].boxes[static_cast<std::size_t>(k)];
      batch.push_back({col, labels[i].labels[static_cast<std::size_t>(k)] != 0, box ? &*box : nullptr});
    }
    out += class_loss(batch, k, config);
  }
  out.l2 = config.l2_coefficient * l2_sum_squares;
  return out;
}

LossBreakdown loss_from_logits(std::span<const std::vector<double>> logits,
                               std::span<const SupervisionLabel> labels, int num_classes,
                               const LossConfig& config, std::vector<std::vector<double>>* grads,
                               Branch branch) {
  config.validate();
  if (logits.size() != labels.size()) throw ValidationError("loss: logits/labels size mismatch");
  if (grads) grads->assign(logits.size(), {});
  LossBreakdown out;
  std::vector<double> p, q;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const auto& z = logits[i];
    if (z.empty() || z.size() % static_cast<std::size_t>(num_classes) != 0)
      throw ValidationError("loss: logit vector is not K * m long");
    const std::size_t m = z.size() / static_cast<std::size_t>(num_classes);
    labels[i].validate(num_classes, static_cast<int>(m));
    if (grads) (*grads)[i].assign(z.size(), 0.0);
    p.resize(m), q.resize(m);
    for (int k = 0; k < num_classes; ++k) {
      const std::size_t off = static_cast<std::size_t>(k) * m;
      for (std::size_t j = 0; j < m; ++j) {
        p[j] = sigmoid(z[off + j]);
        q[j] = sigmoid(-z[off + j]);
      }
      const auto& box = labels[i].boxes[static_cast<std::size_t>(k)];
      if ((branch == Branch::Annotated && !box) || (branch == Branch::Unannotated && box)) continue;
      std::span<double> g;
      if (grads) g = std::span<double>((*grads)[i]).subspan(off, m);
      const Term t = class_term(p, q, labels[i].labels[static_cast<std::size_t>(k)] != 0,
                                box ? &*box : nullptr, config, config.class_weight(k), g);
      (t.annotated ? out.annotated : out.unannotated) += t.loss;
    }
  }
  return out;
}

LossBreakdown loss_from_logits(const Tensor& logits, std::span<const SupervisionLabel> labels,
                               const LossConfig& config, Tensor* dlogits, Branch branch) {
  const std::size_t per_sample = logits.sample_stride();
  std::vector<std::vector<double>> z(static_cast<std::size_t>(logits.n()));
  for (int i = 0; i < logits.n(); ++i) z[static_cast<std::size_t>(i)].assign(logits.sample(i), logits.sample(i) + per_sample);
  std::vector<std::vector<double>> g;
  const LossBreakdown out = loss_from_logits(z, labels, logits.c(), config, dlogits ? &g : nullptr, branch);
  if (dlogits) {
    *dlogits = Tensor(logits.n(), logits.c(), logits.h(), logits.w());
    for (int i = 0; i < logits.n(); ++i) {
      float* d = dlogits->sample(i);
      const auto& gi = g[static_cast<std::size_t>(i)];
      for (std::size_t e = 0; e < per_sample; ++e) d[e] = static_cast<float>(gi[e]);
    }
  }
  return out;
}

double l2_penalty(std::span<Parameter* const> params, const LossConfig& config, bool add_grad) {
  double sum = 0.0;
  for (Parameter* p : params) {
    for (float v : p->value) sum += static_cast<double>(v) * v;
    if (add_grad && config.l2_coefficient > 0.0) {
      const float c = static_cast<float>(2.0 * config.l2_coefficient);
      for (std::size_t e = 0; e < p->value.size(); ++e) p->grad[e] += c * p->value[e];
    }
  }
  return config.l2_coefficient * sum;
}

}  // namespace patchmil
