#pragma once
// Network building blocks with explicit forward/backward passes. Each layer
// caches what its backward pass needs from the most recent forward call, so a
// layer instance serves one in-flight batch at a time.

#include <cstdint>
#include <string>
#include <vector>

#include "patchmil/random.hpp"
#include "patchmil/tensor.hpp"

namespace patchmil {

enum class Mode { Train, Infer };

// Stride-1 convolution with square kernel (1 or odd), zero "same" padding.
class Conv2d {
 public:
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, bool bias);

  void init_he(Rng& rng);
  Tensor forward(const Tensor& x);
  // Accumulates parameter gradients; returns dL/dx unless input_grad is false.
  Tensor backward(const Tensor& dy, bool input_grad = true);

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return k_; }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }
  std::vector<Parameter*> parameters();

 private:
  void im2col(const float* x, int h, int w, float* col) const;
  void col2im(const float* col, int h, int w, float* dx) const;

  std::string name_;
  int in_, out_, k_, pad_;
  bool has_bias_;
  Parameter weight_;  // [out, in * k * k]
  Parameter bias_;    // [out]
  // Forward cache.
  int n_ = 0, h_ = 0, w_ = 0;
  std::vector<float> cols_;  // k > 1: per-sample im2col; k == 1: the input itself
};

// Normalization across the batch and spatial positions, per channel.
class BatchNorm2d {
 public:
  BatchNorm2d(std::string name, int channels, float momentum = 0.99f, float eps = 1e-5f);

  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& dy);

  std::vector<Parameter*> parameters() { return {&gamma_, &beta_}; }
  std::vector<Buffer*> buffers() { return {&running_mean_, &running_var_}; }
  Parameter& gamma() { return gamma_; }
  Parameter& beta() { return beta_; }

 private:
  std::string name_;
  int channels_;
  float momentum_, eps_;
  Parameter gamma_, beta_;
  Buffer running_mean_, running_var_;
  Mode last_mode_ = Mode::Infer;
  Tensor xhat_;
  std::vector<float> inv_std_;
};

class Relu {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

 private:
  Tensor y_;
};

// Max pooling without padding; output side (in - kernel) / stride + 1.
class MaxPool2d {
 public:
  MaxPool2d(int kernel, int stride) : kernel_(kernel), stride_(stride) {}

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;
  static int output_side(int in, int kernel, int stride) { return (in - kernel) / stride + 1; }

 private:
  int kernel_, stride_;
  int in_h_ = 0, in_w_ = 0, in_n_ = 0, in_c_ = 0;
  std::vector<std::uint32_t> argmax_;
};

// Bilinear resampling with half-pixel centres: output position i samples
// input coordinate (i + 0.5) * in / out - 0.5, clamped to the valid range.
class BilinearResize {
 public:
  BilinearResize(int out_h, int out_w) : out_h_(out_h), out_w_(out_w) {}

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

  struct Tap {
    int i0, i1;
    float w1;  // weight of i1; i0 gets 1 - w1
  };
  static std::vector<Tap> taps(int in, int out);

 private:
  int out_h_, out_w_;
  int in_n_ = 0, in_c_ = 0, in_h_ = 0, in_w_ = 0;
};

float sigmoid(float z);
double sigmoid(double z);

}  // namespace patchmil
