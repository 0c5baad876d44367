#pragma once
// Heatmap overlays: one class's patch scores, bilinearly upsampled to the
// image, colour-mapped and alpha-blended, with ground-truth boxes outlined.

#include <vector>

#include "patchmil/geometry.hpp"
#include "patchmil/image_io.hpp"
#include "patchmil/model.hpp"

namespace patchmil {

struct RenderOptions {
  double alpha = 0.45;  // heatmap opacity at score 1; scales with the score
  std::uint8_t box_rgb[3] = {40, 255, 40};
};

// RGB image of the same size as `image`. Boxes are in `image` pixels.
Image render_overlay(const Image& image, const PredictionTensor& pred, int class_index,
                     const std::vector<BoundingBox>& boxes, const RenderOptions& options = {});

// Score map of one class resampled to width x height (half-pixel centres).
std::vector<double> upsample_scores(const PredictionTensor& pred, int class_index, int width, int height);

}  // namespace patchmil
