#include "patchmil/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "patchmil/error.hpp"
#include "patchmil/simd/kernels.hpp"

namespace patchmil {

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::string name, int in_channels, int out_channels, int kernel, bool bias)
    : name_(std::move(name)),
      in_(in_channels),
      out_(out_channels),
      k_(kernel),
      pad_(kernel / 2),
      has_bias_(bias),
      weight_(name_ + ".weight", static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel),
      bias_(name_ + ".bias", bias ? static_cast<std::size_t>(out_channels) : 0) {
  if (in_channels < 1 || out_channels < 1) throw ConfigError("Conv2d " + name_ + ": channels must be >= 1");
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("Conv2d " + name_ + ": kernel must be odd");
}

void Conv2d::init_he(Rng& rng) {
  const double stddev = std::sqrt(2.0 / (static_cast<double>(in_) * k_ * k_));
  for (float& v : weight_.value) v = static_cast<float>(rng.normal() * stddev);
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0f);
}

std::vector<Parameter*> Conv2d::parameters() {
  if (has_bias_) return {&weight_, &bias_};
  return {&weight_};
}

void Conv2d::im2col(const float* x, int h, int w, float* col) const {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < in_; ++c) {
    const float* xc = x + c * hw;
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        float* row = col + ((static_cast<std::size_t>(c) * k_ + ky) * k_ + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad_;
          float* dst = row + static_cast<std::size_t>(y) * w;
          if (sy < 0 || sy >= h) {
            std::fill(dst, dst + w, 0.0f);
            continue;
          }
          const float* src = xc + static_cast<std::size_t>(sy) * w;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - pad_;
            dst[x] = (sx < 0 || sx >= w) ? 0.0f : src[sx];
          }
        }
      }
    }
  }
}

void Conv2d::col2im(const float* col, int h, int w, float* dx) const {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  std::fill(dx, dx + in_ * hw, 0.0f);
  for (int c = 0; c < in_; ++c) {
    float* dc = dx + c * hw;
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        const float* row = col + ((static_cast<std::size_t>(c) * k_ + ky) * k_ + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad_;
          if (sy < 0 || sy >= h) continue;
          const float* src = row + static_cast<std::size_t>(y) * w;
          float* dst = dc + static_cast<std::size_t>(sy) * w;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - pad_;
            if (sx >= 0 && sx < w) dst[sx] += src[x];
          }
        }
      }
    }
  }
}

Tensor Conv2d::forward(const Tensor& x) {
  if (x.c() != in_)
    throw ValidationError("Conv2d " + name_ + ": expected " + std::to_string(in_) +
                          " input channels, got " + x.shape_string());
  n_ = x.n(), h_ = x.h(), w_ = x.w();
  const std::size_t hw = x.plane();
  const std::size_t rows = static_cast<std::size_t>(in_) * k_ * k_;
  const auto& kern = simd::kernels();

  Tensor y(n_, out_, h_, w_);
  if (k_ == 1) {
    cols_.assign(x.data(), x.data() + x.size());
  } else {
    cols_.resize(static_cast<std::size_t>(n_) * rows * hw);
  }
  for (int i = 0; i < n_; ++i) {
    const float* col = cols_.data() + i * rows * hw;
    if (k_ > 1) im2col(x.sample(i), h_, w_, cols_.data() + i * rows * hw);
    kern.gemm_nn(out_, hw, rows, weight_.value.data(), rows, col, hw, y.sample(i), hw, false);
    if (has_bias_) {
      for (int o = 0; o < out_; ++o) {
        float* yc = y.channel(i, o);
        const float b = bias_.value[o];
        for (std::size_t p = 0; p < hw; ++p) yc[p] += b;
      }
    }
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& dy, bool input_grad) {
  if (dy.n() != n_ || dy.c() != out_ || dy.h() != h_ || dy.w() != w_)
    throw ValidationError("Conv2d " + name_ + ": gradient shape mismatch");
  const std::size_t hw = dy.plane();
  const std::size_t rows = static_cast<std::size_t>(in_) * k_ * k_;
  const auto& kern = simd::kernels();

  Tensor dx;
  std::vector<float> dcol;
  if (input_grad) {
    dx = Tensor(n_, in_, h_, w_);
    if (k_ > 1) dcol.resize(rows * hw);
  }
  for (int i = 0; i < n_; ++i) {
    const float* col = cols_.data() + i * rows * hw;
    const float* g = dy.sample(i);
    kern.gemm_nt(out_, rows, hw, g, hw, col, hw, weight_.grad.data(), rows, true);
    if (has_bias_) {
      for (int o = 0; o < out_; ++o) {
        const float* gc = g + o * hw;
        float s = 0.0f;
        for (std::size_t p = 0; p < hw; ++p) s += gc[p];
        bias_.grad[o] += s;
      }
    }
    if (input_grad) {
      if (k_ == 1) {
        kern.gemm_tn(rows, hw, out_, weight_.value.data(), rows, g, hw, dx.sample(i), hw, false);
      } else {
        kern.gemm_tn(rows, hw, out_, weight_.value.data(), rows, g, hw, dcol.data(), hw, false);
        col2im(dcol.data(), h_, w_, dx.sample(i));
      }
    }
  }
  return dx;
}

// ----------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(std::string name, int channels, float momentum, float eps)
    : name_(std::move(name)),
      channels_(channels),
      momentum_(momentum),
      eps_(eps),
      gamma_(name_ + ".gamma", static_cast<std::size_t>(channels)),
      beta_(name_ + ".beta", static_cast<std::size_t>(channels)),
      running_mean_{name_ + ".running_mean", std::vector<float>(static_cast<std::size_t>(channels), 0.0f)},
      running_var_{name_ + ".running_var", std::vector<float>(static_cast<std::size_t>(channels), 1.0f)} {
  std::fill(gamma_.value.begin(), gamma_.value.end(), 1.0f);
}

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode) {
  if (x.c() != channels_) throw ValidationError("BatchNorm2d " + name_ + ": channel mismatch");
  last_mode_ = mode;
  const std::size_t hw = x.plane();
  const double count = static_cast<double>(x.n()) * hw;
  xhat_ = Tensor(x.n(), x.c(), x.h(), x.w());
  inv_std_.assign(static_cast<std::size_t>(channels_), 0.0f);
  Tensor y(x.n(), x.c(), x.h(), x.w());

  for (int c = 0; c < channels_; ++c) {
    float mean, var;
    if (mode == Mode::Train) {
      double s = 0.0, ss = 0.0;
      for (int i = 0; i < x.n(); ++i) {
        const float* xc = x.channel(i, c);
        for (std::size_t p = 0; p < hw; ++p) s += xc[p];
      }
      const double m = s / count;
      for (int i = 0; i < x.n(); ++i) {
        const float* xc = x.channel(i, c);
        for (std::size_t p = 0; p < hw; ++p) {
          const double d = xc[p] - m;
          ss += d * d;
        }
      }
      mean = static_cast<float>(m);
      var = static_cast<float>(ss / count);
      const float unbiased = count > 1.0 ? static_cast<float>(ss / (count - 1.0)) : var;
      running_mean_.value[c] = momentum_ * running_mean_.value[c] + (1.0f - momentum_) * mean;
      running_var_.value[c] = momentum_ * running_var_.value[c] + (1.0f - momentum_) * unbiased;
    } else {
      mean = running_mean_.value[c];
      var = running_var_.value[c];
    }
    const float inv = 1.0f / std::sqrt(var + eps_);
    inv_std_[c] = inv;
    const float g = gamma_.value[c], b = beta_.value[c];
    for (int i = 0; i < x.n(); ++i) {
      const float* xc = x.channel(i, c);
      float* hc = xhat_.channel(i, c);
      float* yc = y.channel(i, c);
      for (std::size_t p = 0; p < hw; ++p) {
        hc[p] = (xc[p] - mean) * inv;
        yc[p] = g * hc[p] + b;
      }
    }
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
  if (!dy.same_shape(xhat_)) throw ValidationError("BatchNorm2d " + name_ + ": gradient shape mismatch");
  const std::size_t hw = dy.plane();
  const double count = static_cast<double>(dy.n()) * hw;
  Tensor dx(dy.n(), dy.c(), dy.h(), dy.w());
  for (int c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int i = 0; i < dy.n(); ++i) {
      const float* g = dy.channel(i, c);
      const float* hc = xhat_.channel(i, c);
      for (std::size_t p = 0; p < hw; ++p) {
        sum_dy += g[p];
        sum_dy_xhat += static_cast<double>(g[p]) * hc[p];
      }
    }
    gamma_.grad[c] += static_cast<float>(sum_dy_xhat);
    beta_.grad[c] += static_cast<float>(sum_dy);
    const float scale = gamma_.value[c] * inv_std_[c];
    if (last_mode_ == Mode::Train) {
      const float mean_dy = static_cast<float>(sum_dy / count);
      const float mean_dy_xhat = static_cast<float>(sum_dy_xhat / count);
      for (int i = 0; i < dy.n(); ++i) {
        const float* g = dy.channel(i, c);
        const float* hc = xhat_.channel(i, c);
        float* d = dx.channel(i, c);
        for (std::size_t p = 0; p < hw; ++p) d[p] = scale * (g[p] - mean_dy - hc[p] * mean_dy_xhat);
      }
    } else {
      for (int i = 0; i < dy.n(); ++i) {
        const float* g = dy.channel(i, c);
        float* d = dx.channel(i, c);
        for (std::size_t p = 0; p < hw; ++p) d[p] = scale * g[p];
      }
    }
  }
  return dx;
}

// ------------------------------------------------------------------ Relu

Tensor Relu::forward(const Tensor& x) {
  y_ = Tensor(x.n(), x.c(), x.h(), x.w());
  simd::kernels().relu_forward(x.size(), x.data(), y_.data());
  return y_;
}

Tensor Relu::backward(const Tensor& dy) const {
  if (!dy.same_shape(y_)) throw ValidationError("Relu: gradient shape mismatch");
  Tensor dx(dy.n(), dy.c(), dy.h(), dy.w());
  simd::kernels().relu_backward(dy.size(), y_.data(), dy.data(), dx.data());
  return dx;
}

// ------------------------------------------------------------- MaxPool2d

Tensor MaxPool2d::forward(const Tensor& x) {
  if (x.h() < kernel_ || x.w() < kernel_) throw ValidationError("MaxPool2d: input smaller than kernel");
  in_n_ = x.n(), in_c_ = x.c(), in_h_ = x.h(), in_w_ = x.w();
  const int oh = output_side(in_h_, kernel_, stride_);
  const int ow = output_side(in_w_, kernel_, stride_);
  Tensor y(in_n_, in_c_, oh, ow);
  argmax_.resize(y.size());
  std::size_t o = 0;
  for (int i = 0; i < in_n_; ++i) {
    for (int c = 0; c < in_c_; ++c) {
      const float* xc = x.channel(i, c);
      float* yc = y.channel(i, c);
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++o) {
          float best = -std::numeric_limits<float>::infinity();
          std::uint32_t arg = 0;
          for (int ky = 0; ky < kernel_; ++ky) {
            const int sy = oy * stride_ + ky;
            for (int kx = 0; kx < kernel_; ++kx) {
              const int sx = ox * stride_ + kx;
              const float v = xc[sy * in_w_ + sx];
              if (v > best) {
                best = v;
                arg = static_cast<std::uint32_t>(sy * in_w_ + sx);
              }
            }
          }
          yc[oy * ow + ox] = best;
          argmax_[o] = arg;
        }
      }
    }
  }
  return y;
}

Tensor MaxPool2d::backward(const Tensor& dy) const {
  if (dy.size() != argmax_.size()) throw ValidationError("MaxPool2d: gradient shape mismatch");
  Tensor dx(in_n_, in_c_, in_h_, in_w_);
  const std::size_t out_plane = dy.plane();
  std::size_t o = 0;
  for (int i = 0; i < in_n_; ++i) {
    for (int c = 0; c < in_c_; ++c) {
      float* dc = dx.channel(i, c);
      const float* g = dy.channel(i, c);
      for (std::size_t p = 0; p < out_plane; ++p, ++o) dc[argmax_[o]] += g[p];
    }
  }
  return dx;
}

// -------------------------------------------------------- BilinearResize

std::vector<BilinearResize::Tap> BilinearResize::taps(int in, int out) {
  std::vector<Tap> t(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    double src = (i + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(src));
    const int i1 = std::min(i0 + 1, in - 1);
    t[static_cast<std::size_t>(i)] = Tap{i0, i1, static_cast<float>(src - i0)};
  }
  return t;
}

Tensor BilinearResize::forward(const Tensor& x) {
  in_n_ = x.n(), in_c_ = x.c(), in_h_ = x.h(), in_w_ = x.w();
  const auto ty = taps(in_h_, out_h_);
  const auto tx = taps(in_w_, out_w_);
  Tensor y(in_n_, in_c_, out_h_, out_w_);
  for (int i = 0; i < in_n_; ++i) {
    for (int c = 0; c < in_c_; ++c) {
      const float* xc = x.channel(i, c);
      float* yc = y.channel(i, c);
      for (int oy = 0; oy < out_h_; ++oy) {
        const Tap& a = ty[static_cast<std::size_t>(oy)];
        const float* r0 = xc + a.i0 * in_w_;
        const float* r1 = xc + a.i1 * in_w_;
        for (int ox = 0; ox < out_w_; ++ox) {
          const Tap& b = tx[static_cast<std::size_t>(ox)];
          const float top = r0[b.i0] + b.w1 * (r0[b.i1] - r0[b.i0]);
          const float bot = r1[b.i0] + b.w1 * (r1[b.i1] - r1[b.i0]);
          yc[oy * out_w_ + ox] = top + a.w1 * (bot - top);
        }
      }
    }
  }
  return y;
}

Tensor BilinearResize::backward(const Tensor& dy) const {
  if (dy.n() != in_n_ || dy.c() != in_c_ || dy.h() != out_h_ || dy.w() != out_w_)
    throw ValidationError("BilinearResize: gradient shape mismatch");
  const auto ty = taps(in_h_, out_h_);
  const auto tx = taps(in_w_, out_w_);
  Tensor dx(in_n_, in_c_, in_h_, in_w_);
  for (int i = 0; i < in_n_; ++i) {
    for (int c = 0; c < in_c_; ++c) {
      const float* g = dy.channel(i, c);
      float* d = dx.channel(i, c);
      for (int oy = 0; oy < out_h_; ++oy) {
        const Tap& a = ty[static_cast<std::size_t>(oy)];
        for (int ox = 0; ox < out_w_; ++ox) {
          const Tap& b = tx[static_cast<std::size_t>(ox)];
          const float v = g[oy * out_w_ + ox];
          const float vt = v * (1.0f - a.w1), vb = v * a.w1;
          d[a.i0 * in_w_ + b.i0] += vt * (1.0f - b.w1);
          d[a.i0 * in_w_ + b.i1] += vt * b.w1;
          d[a.i1 * in_w_ + b.i0] += vb * (1.0f - b.w1);
          d[a.i1 * in_w_ + b.i1] += vb * b.w1;
        }
      }
    }
  }
  return dx;
}

float sigmoid(float z) {
  if (z >= 0.0f) return 1.0f / (1.0f + std::exp(-z));
  const float e = std::exp(z);
  return e / (1.0f + e);
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace patchmil
