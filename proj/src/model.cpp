#include "patchmil/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "patchmil/error.hpp"

namespace patchmil {

void ModelConfig::validate() const {
  if (grid_size < 1) throw ConfigError("model: grid_size must be >= 1");
  if (num_classes < 1) throw ConfigError("model: num_classes must be >= 1");
  if (input_side < 32 || input_side % 32 != 0)
    throw ConfigError("model: input_side must be a positive multiple of 32");
  if (input_channels < 1) throw ConfigError("model: input_channels must be >= 1");
  if (backbone_channels.empty()) throw ConfigError("model: backbone_channels must not be empty");
  if (backbone == "desk" && backbone_channels.size() != 5)
    throw ConfigError("model: desk backbone needs 5 block widths");
  for (int c : backbone_channels)
    if (c < 1) throw ConfigError("model: backbone channel counts must be >= 1");
  if (head_channels < 1) throw ConfigError("model: head_channels must be >= 1");
}

// ------------------------------------------------------------ DeskBackbone

DeskBackbone::DeskBackbone(int input_channels, const std::vector<int>& channels) : channels_(channels) {
  if (channels.size() != 5) throw ConfigError("DeskBackbone: expected 5 block widths");
  int in = input_channels;
  blocks_.reserve(channels.size());
  for (std::size_t b = 0; b < channels.size(); ++b) {
    const std::string name = "backbone.block" + std::to_string(b);
    blocks_.push_back(Block{Conv2d(name + ".conv", in, channels[b], 3, false),
                            BatchNorm2d(name + ".bn", channels[b]), Relu{}, MaxPool2d(2, 2)});
    in = channels[b];
  }
}

void DeskBackbone::init(Rng& rng) {
  for (auto& b : blocks_) b.conv.init_he(rng);
}

Tensor DeskBackbone::forward(const Tensor& images, Mode mode) {
  Tensor x = images;
  for (auto& b : blocks_) {
    x = b.conv.forward(x);
    x = b.norm.forward(x, mode);
    x = b.relu.forward(x);
    x = b.pool.forward(x);
  }
  return x;
}

void DeskBackbone::backward(const Tensor& dfeatures) {
  Tensor g = dfeatures;
  for (std::size_t i = blocks_.size(); i-- > 0;) {
    auto& b = blocks_[i];
    g = b.pool.backward(g);
    g = b.relu.backward(g);
    g = b.norm.backward(g);
    g = b.conv.backward(g, /*input_grad=*/i > 0);
  }
}

std::vector<Parameter*> DeskBackbone::parameters() {
  std::vector<Parameter*> out;
  for (auto& b : blocks_) {
    for (Parameter* p : b.conv.parameters()) out.push_back(p);
    for (Parameter* p : b.norm.parameters()) out.push_back(p);
  }
  return out;
}

std::vector<Buffer*> DeskBackbone::buffers() {
  std::vector<Buffer*> out;
  for (auto& b : blocks_)
    for (Buffer* buf : b.norm.buffers()) out.push_back(buf);
  return out;
}

// ------------------------------------------------------------- PatchSlicer

PatchSlicer::PatchSlicer(ResamplePlan plan)
    : plan_(plan), upsample_(plan.output_side, plan.output_side), downsample_(plan.kernel, 1) {}

Tensor PatchSlicer::forward(const Tensor& features) {
  if (features.h() != plan_.input_side || features.w() != plan_.input_side)
    throw ValidationError("PatchSlicer: feature map " + features.shape_string() + " does not match plan");
  switch (plan_.kind) {
    case ResamplePlan::Kind::Upsample:
      return upsample_.forward(features);
    case ResamplePlan::Kind::Downsample:
      return downsample_.forward(features);
    case ResamplePlan::Kind::Identity:
      break;
  }
  return features;
}

Tensor PatchSlicer::backward(const Tensor& dy) {
  switch (plan_.kind) {
    case ResamplePlan::Kind::Upsample:
      return upsample_.backward(dy);
    case ResamplePlan::Kind::Downsample:
      return downsample_.backward(dy);
    case ResamplePlan::Kind::Identity:
      break;
  }
  return dy;
}

// --------------------------------------------------------- RecognitionHead

RecognitionHead::RecognitionHead(int in_channels, int hidden_channels, int num_classes)
    : conv3_("head.conv3x3", in_channels, hidden_channels, 3, false),
      norm_("head.bn", hidden_channels),
      conv1_("head.conv1x1", hidden_channels, num_classes, 1, true) {}

void RecognitionHead::init(Rng& rng, float bias_init) {
  conv3_.init_he(rng);
  conv1_.init_he(rng);
  std::fill(conv1_.bias().value.begin(), conv1_.bias().value.end(), bias_init);
}

Tensor RecognitionHead::forward(const Tensor& sliced, Mode mode) {
  Tensor x = conv3_.forward(sliced);
  x = norm_.forward(x, mode);
  x = relu_.forward(x);
  return conv1_.forward(x);
}

Tensor RecognitionHead::backward(const Tensor& dlogits) {
  Tensor g = conv1_.backward(dlogits);
  g = relu_.backward(g);
  g = norm_.backward(g);
  return conv3_.backward(g);
}

std::vector<Parameter*> RecognitionHead::parameters() {
  std::vector<Parameter*> out = conv3_.parameters();
  for (Parameter* p : norm_.parameters()) out.push_back(p);
  for (Parameter* p : conv1_.parameters()) out.push_back(p);
  return out;
}

// -------------------------------------------------------- PredictionTensor

std::vector<double> PredictionTensor::class_scores(int k) const {
  const int m = grid.patch_count();
  std::vector<double> out(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j)
    out[static_cast<std::size_t>(j)] = scores[static_cast<std::size_t>(j * num_classes + k)];
  return out;
}

double patch_probability(double logit) {
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  return std::clamp(sigmoid(logit), lo, hi);
}

std::vector<PredictionTensor> to_predictions(const Tensor& logits, const PatchGrid& grid) {
  const int p = grid.grid_size;
  if (logits.h() != p || logits.w() != p) throw ValidationError("to_predictions: logits are not P x P");
  std::vector<PredictionTensor> out(static_cast<std::size_t>(logits.n()));
  for (int i = 0; i < logits.n(); ++i) {
    PredictionTensor& t = out[static_cast<std::size_t>(i)];
    t.grid = grid;
    t.num_classes = logits.c();
    t.scores.resize(static_cast<std::size_t>(grid.patch_count()) * logits.c());
    for (int k = 0; k < logits.c(); ++k)
      for (int r = 0; r < p; ++r)
        for (int c = 0; c < p; ++c) t.at(r, c, k) = patch_probability(logits.at(i, k, r, c));
  }
  return out;
}

// -------------------------------------------------------------- PatchModel

namespace {

std::unique_ptr<Backbone> make_backbone(const ModelConfig& config) {
  if (config.backbone == "desk")
    return std::make_unique<DeskBackbone>(config.input_channels, config.backbone_channels);
  throw ConfigError("unknown backbone '" + config.backbone + "'");
}

ModelConfig validated(ModelConfig c) {
  c.validate();
  return c;
}

}  // namespace

PatchModel::PatchModel(ModelConfig config, std::unique_ptr<Backbone> backbone)
    : config_(validated(std::move(config))),
      backbone_(backbone ? std::move(backbone) : make_backbone(config_)),
      slicer_(resample_plan(config_.feature_side(), config_.grid_size)),
      head_(config_.feature_channels(), config_.head_channels, config_.num_classes) {
  if (backbone_->out_channels() != config_.feature_channels())
    throw ConfigError("PatchModel: backbone emits " + std::to_string(backbone_->out_channels()) +
                      " channels but the head expects " + std::to_string(config_.feature_channels()));
}

void PatchModel::init(std::uint64_t seed) {
  Rng rng(seed);
  backbone_->init(rng);
  head_.init(rng, config_.head_bias_init);
}

Tensor PatchModel::forward_logits(const Tensor& images, Mode mode) {
  if (images.h() != config_.input_side || images.w() != config_.input_side ||
      images.c() != config_.input_channels)
    throw ValidationError("PatchModel: input " + images.shape_string() + " does not match config");
  Tensor features = backbone_->forward(images, mode);
  if (features.h() != config_.feature_side() || features.w() != config_.feature_side())
    throw ConfigError("PatchModel: backbone output " + features.shape_string() + " is not input/32");
  return head_.forward(slicer_.forward(features), mode);
}

std::vector<PredictionTensor> PatchModel::predict(const Tensor& images) {
  return to_predictions(forward_logits(images, Mode::Infer), grid());
}

void PatchModel::backward(const Tensor& dlogits, bool into_backbone) {
  Tensor g = head_.backward(dlogits);
  if (!into_backbone) return;
  backbone_->backward(slicer_.backward(g));
}

std::vector<Parameter*> PatchModel::trainable_parameters(bool freeze_backbone) {
  std::vector<Parameter*> out = head_.parameters();
  if (!freeze_backbone)
    for (Parameter* p : backbone_->parameters()) out.push_back(p);
  return out;
}

std::vector<std::pair<std::string, std::vector<float>*>> PatchModel::state() {
  std::vector<std::pair<std::string, std::vector<float>*>> out;
  for (Parameter* p : backbone_->parameters()) out.emplace_back(p->name, &p->value);
  for (Parameter* p : head_.parameters()) out.emplace_back(p->name, &p->value);
  for (Buffer* b : backbone_->buffers()) out.emplace_back(b->name, &b->value);
  for (Buffer* b : head_.buffers()) out.emplace_back(b->name, &b->value);
  return out;
}

void PatchModel::zero_grad() {
  for (Parameter* p : trainable_parameters(false)) p->zero_grad();
}

}  // namespace patchmil
