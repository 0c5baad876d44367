#include "patchmil/render.hpp"

#include <algorithm>
#include <cmath>

#include "patchmil/error.hpp"
#include "patchmil/layers.hpp"

namespace patchmil {

namespace {

// Piecewise-linear blue -> cyan -> yellow -> red.
void colormap(double s, double rgb[3]) {
  static constexpr double stops[4][3] = {{0, 0, 255}, {0, 255, 255}, {255, 255, 0}, {255, 0, 0}};
  const double t = std::clamp(s, 0.0, 1.0) * 3.0;
  const int i = std::min(2, static_cast<int>(t));
  const double f = t - i;
  for (int c = 0; c < 3; ++c) rgb[c] = stops[i][c] + f * (stops[i + 1][c] - stops[i][c]);
}

}  // namespace

std::vector<double> upsample_scores(const PredictionTensor& pred, int class_index, int width, int height) {
  if (class_index < 0 || class_index >= pred.num_classes)
    throw ValidationError("render: class " + std::to_string(class_index) + " out of range");
  const int p = pred.grid.grid_size;
  const auto ty = BilinearResize::taps(p, height);
  const auto tx = BilinearResize::taps(p, width);
  std::vector<double> out(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    const auto& a = ty[static_cast<std::size_t>(y)];
    for (int x = 0; x < width; ++x) {
      const auto& b = tx[static_cast<std::size_t>(x)];
      const double top = pred.at(a.i0, b.i0, class_index) + b.w1 * (pred.at(a.i0, b.i1, class_index) - pred.at(a.i0, b.i0, class_index));
      const double bot = pred.at(a.i1, b.i0, class_index) + b.w1 * (pred.at(a.i1, b.i1, class_index) - pred.at(a.i1, b.i0, class_index));
      out[static_cast<std::size_t>(y) * width + x] = top + a.w1 * (bot - top);
    }
  }
  return out;
}

Image render_overlay(const Image& image, const PredictionTensor& pred, int class_index,
                     const std::vector<BoundingBox>& boxes, const RenderOptions& options) {
  const int w = image.width, h = image.height;
  const auto scores = upsample_scores(pred, class_index, w, h);
  Image out(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double s = scores[static_cast<std::size_t>(y) * w + x];
      double heat[3];
      colormap(s, heat);
      const double a = options.alpha * std::clamp(s, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) {
        const double base = image.at(x, y, image.channels >= 3 ? c : 0);
        out.at(x, y, c) = static_cast<std::uint8_t>(std::lround((1.0 - a) * base + a * heat[c]));
      }
    }
  for (const auto& box : boxes) {
    const BoundingBox b = clamp_box(box, w, h);
    if (!(b.w > 0.0) || !(b.h > 0.0)) continue;
    const int x0 = static_cast<int>(std::floor(b.x)), y0 = static_cast<int>(std::floor(b.y));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(b.right())) - 1);
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(b.bottom())) - 1);
    auto plot = [&](int x, int y) {
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = options.box_rgb[c];
    };
    for (int x = x0; x <= x1; ++x) plot(x, y0), plot(x, y1);
    for (int y = y0; y <= y1; ++y) plot(x0, y), plot(x1, y);
  }
  return out;
}

}  // namespace patchmil
