#pragma once
// The image model: a stride-32 backbone, the patch-slicing layer that brings
// the feature map to P x P, and the fully convolutional recognition head
// (3x3 conv -> batch norm -> ReLU -> 1x1 conv -> logistic).

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "patchmil/geometry.hpp"
#include "patchmil/layers.hpp"
#include "patchmil/tensor.hpp"

namespace patchmil {

struct ModelConfig {
  int grid_size = 8;     // P
  int num_classes = 4;   // K
  int input_side = 64;   // h = w, multiple of 32
  int input_channels = 3;
  std::string backbone = "desk";
  // Output channels of the five backbone blocks; the last one is c'.
  std::vector<int> backbone_channels{8, 16, 32, 64, 64};
  int head_channels = 32;  // c*
  // Initial bias of the 1x1 prediction layer (logit of the starting patch score).
  float head_bias_init = 0.0f;

  int feature_channels() const { return backbone_channels.empty() ? 0 : backbone_channels.back(); }
  int feature_side() const { return input_side / 32; }
  PatchGrid grid() const { return PatchGrid(input_side, input_side, grid_size); }
  void validate() const;  // throws ConfigError
  bool operator==(const ModelConfig&) const = default;
};

// Any feature extractor with output spatial size exactly input / 32.
class Backbone {
 public:
  virtual ~Backbone() = default;
  virtual std::string kind() const = 0;
  virtual int out_channels() const = 0;
  virtual void init(Rng& rng) = 0;
  virtual Tensor forward(const Tensor& images, Mode mode) = 0;
  // Accumulates parameter gradients from dL/d(features).
  virtual void backward(const Tensor& dfeatures) = 0;
  virtual std::vector<Parameter*> parameters() = 0;
  virtual std::vector<Buffer*> buffers() = 0;
};

// Five blocks of 3x3 conv -> batch norm -> ReLU -> 2x2 max-pool.
class DeskBackbone final : public Backbone {
 public:
  DeskBackbone(int input_channels, const std::vector<int>& channels);

  std::string kind() const override { return "desk"; }
  int out_channels() const override { return channels_.back(); }
  void init(Rng& rng) override;
  Tensor forward(const Tensor& images, Mode mode) override;
  void backward(const Tensor& dfeatures) override;
  std::vector<Parameter*> parameters() override;
  std::vector<Buffer*> buffers() override;

 private:
  struct Block {
    Conv2d conv;
    BatchNorm2d norm;
    Relu relu;
    MaxPool2d pool;
  };
  std::vector<int> channels_;
  std::vector<Block> blocks_;
};

// Resamples the backbone map to P x P following resample_plan.
class PatchSlicer {
 public:
  explicit PatchSlicer(ResamplePlan plan);

  Tensor forward(const Tensor& features);
  Tensor backward(const Tensor& dy);
  const ResamplePlan& plan() const { return plan_; }

 private:
  ResamplePlan plan_;
  BilinearResize upsample_;
  MaxPool2d downsample_;
};

class RecognitionHead {
 public:
  RecognitionHead(int in_channels, int hidden_channels, int num_classes);

  void init(Rng& rng, float bias_init);
  Tensor forward(const Tensor& sliced, Mode mode);  // logits [N, K, P, P]
  Tensor backward(const Tensor& dlogits);
  std::vector<Parameter*> parameters();
  std::vector<Buffer*> buffers() { return norm_.buffers(); }

  Conv2d& conv3x3() { return conv3_; }
  Conv2d& conv1x1() { return conv1_; }

 private:
  Conv2d conv3_;
  BatchNorm2d norm_;
  Relu relu_;
  Conv2d conv1_;
};

// P x P x K patch probabilities of one image. Index (row, col, k) is stored
// at (row * P + col) * K + k. Values are kept strictly inside (0, 1).
struct PredictionTensor {
  PatchGrid grid;
  int num_classes = 0;
  std::vector<double> scores;

  double at(int row, int col, int k) const {
    return scores[static_cast<std::size_t>(grid.index(row, col) * num_classes + k)];
  }
  double& at(int row, int col, int k) {
    return scores[static_cast<std::size_t>(grid.index(row, col) * num_classes + k)];
  }
  // Scores of one class in patch-index order (length m).
  std::vector<double> class_scores(int k) const;
};

// Logistic of a logit, clamped so the result is never exactly 0 or 1.
double patch_probability(double logit);

class PatchModel {
 public:
  // A null backbone builds the one named in config.backbone.
  explicit PatchModel(ModelConfig config, std::unique_ptr<Backbone> backbone = nullptr);

  void init(std::uint64_t seed);
  const ModelConfig& config() const { return config_; }
  const ResamplePlan& plan() const { return slicer_.plan(); }
  PatchGrid grid() const { return config_.grid(); }

  // images: [N, C, side, side] normalized to [-1, 1]. Returns logits [N, K, P, P].
  Tensor forward_logits(const Tensor& images, Mode mode);
  std::vector<PredictionTensor> predict(const Tensor& images);
  // Back-propagates dL/dlogits from the last forward call.
  void backward(const Tensor& dlogits, bool into_backbone = true);

  std::vector<Parameter*> trainable_parameters(bool freeze_backbone);
  std::vector<Parameter*> head_parameters() { return head_.parameters(); }
  std::vector<Parameter*> backbone_parameters() { return backbone_->parameters(); }
  // Every persistent array (parameters then buffers), in a stable order.
  std::vector<std::pair<std::string, std::vector<float>*>> state();
  void zero_grad();

  RecognitionHead& head() { return head_; }
  Backbone& backbone() { return *backbone_; }

 private:
  ModelConfig config_;
  std::unique_ptr<Backbone> backbone_;
  PatchSlicer slicer_;
  RecognitionHead head_;
};

std::vector<PredictionTensor> to_predictions(const Tensor& logits, const PatchGrid& grid);

}  // namespace patchmil
