#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace patchmil {

// Dense float32 activation tensor in NCHW layout.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, float fill = 0.0f);

  int n() const { return n_; }
  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }
  std::size_t size() const { return data_.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h_) * w_; }
  std::size_t sample_stride() const { return static_cast<std::size_t>(c_) * plane(); }
  bool same_shape(const Tensor& o) const {
    return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }
  std::string shape_string() const;

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> span() { return data_; }
  std::span<const float> span() const { return data_; }

  float* sample(int i) { return data_.data() + i * sample_stride(); }
  const float* sample(int i) const { return data_.data() + i * sample_stride(); }
  float* channel(int i, int ch) { return sample(i) + ch * plane(); }
  const float* channel(int i, int ch) const { return sample(i) + ch * plane(); }

  float& at(int i, int ch, int y, int x) { return channel(i, ch)[y * w_ + x]; }
  float at(int i, int ch, int y, int x) const { return channel(i, ch)[y * w_ + x]; }

  void fill(float v);

 private:
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<float> data_;
};

// A named trainable array with its gradient accumulator.
struct Parameter {
  std::string name;
  std::vector<float> value;
  std::vector<float> grad;

  Parameter() = default;
  Parameter(std::string n, std::size_t size) : name(std::move(n)), value(size, 0.0f), grad(size, 0.0f) {}
  void zero_grad();
};

// Non-trainable persistent state (normalization running statistics).
struct Buffer {
  std::string name;
  std::vector<float> value;
};

}  // namespace patchmil
