#include "patchmil/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "patchmil/error.hpp"

namespace patchmil {

PatchGrid::PatchGrid(int width, int height, int p)
    : image_width(width), image_height(height), grid_size(p) {
  if (width < 1 || height < 1) throw ValidationError("PatchGrid: image dimensions must be positive");
  if (p < 1) throw ValidationError("PatchGrid: grid size must be >= 1");
}

int PatchGrid::patch_of_pixel(int x, int y) const {
  // Centre (x + 0.5) lies in column c iff c * W <= (x + 0.5) * P < (c + 1) * W;
  // doubled to stay in integers.
  const int col = std::min(grid_size - 1, ((2 * x + 1) * grid_size) / (2 * image_width));
  const int row = std::min(grid_size - 1, ((2 * y + 1) * grid_size) / (2 * image_height));
  return index(row, col);
}

BoundingBox clamp_box(const BoundingBox& box, int width, int height) {
  const double x0 = std::clamp(box.x, 0.0, static_cast<double>(width));
  const double y0 = std::clamp(box.y, 0.0, static_cast<double>(height));
  const double x1 = std::clamp(box.x + box.w, 0.0, static_cast<double>(width));
  const double y1 = std::clamp(box.y + box.h, 0.0, static_cast<double>(height));
  return BoundingBox{x0, y0, x1 - x0, y1 - y0, box.class_index};
}

bool PatchLabelSet::contains(int j) const {
  return std::binary_search(positives.begin(), positives.end(), j);
}

std::vector<std::uint8_t> PatchLabelSet::membership() const {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(grid.patch_count()), 0);
  for (int j : positives) out[static_cast<std::size_t>(j)] = 1;
  return out;
}

void PatchLabelSet::merge(const PatchLabelSet& other) {
  if (!(other.grid == grid)) throw ValidationError("PatchLabelSet::merge: grid mismatch");
  std::vector<int> merged;
  merged.reserve(positives.size() + other.positives.size());
  std::set_union(positives.begin(), positives.end(), other.positives.begin(),
                 other.positives.end(), std::back_inserter(merged));
  positives = std::move(merged);
}

namespace {

// Cells [first, last] along one axis whose interval [c*side/P, (c+1)*side/P)
// overlaps [lo, hi) with positive length. Compares lo*P against c*side so
// integer-valued inputs are tested exactly.
std::pair<int, int> overlapped_cells(double lo, double hi, int side, int p) {
  int first = p, last = -1;
  for (int c = 0; c < p; ++c) {
    const double cell_lo = static_cast<double>(c) * side;
    const double cell_hi = static_cast<double>(c + 1) * side;
    if (lo * p < cell_hi && hi * p > cell_lo) {
      first = std::min(first, c);
      last = std::max(last, c);
    }
  }
  return {first, last};
}

}  // namespace

PatchLabelSet bbox_to_patch_labels(const BoundingBox& box, const PatchGrid& grid) {
  if (!(box.w > 0.0) || !(box.h > 0.0))
    throw ValidationError("bbox_to_patch_labels: degenerate box (w and h must be > 0)");
  const BoundingBox b = clamp_box(box, grid.image_width, grid.image_height);
  if (!(b.w > 0.0) || !(b.h > 0.0))
    throw ValidationError("bbox_to_patch_labels: box lies outside the image");

  const int p = grid.grid_size;
  const auto [c0, c1] = overlapped_cells(b.x, b.right(), grid.image_width, p);
  const auto [r0, r1] = overlapped_cells(b.y, b.bottom(), grid.image_height, p);

  PatchLabelSet out;
  out.grid = grid;
  out.class_index = box.class_index;
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c) out.positives.push_back(grid.index(r, c));
  return out;
}

int downsample_kernel_size(int input_side, int target_side) {
  if (target_side < 1) throw ValidationError("downsample_kernel_size: target side must be >= 1");
  if (input_side < target_side)
    throw ValidationError("downsample_kernel_size: input smaller than target; upsample instead");
  return input_side - target_side + 1;
}

ResamplePlan resample_plan(int feature_side, int grid_size) {
  if (feature_side < 1 || grid_size < 1)
    throw ValidationError("resample_plan: sides must be >= 1");
  ResamplePlan plan;
  plan.input_side = feature_side;
  plan.output_side = grid_size;
  if (feature_side < grid_size) {
    plan.kind = ResamplePlan::Kind::Upsample;
  } else if (feature_side > grid_size) {
    plan.kind = ResamplePlan::Kind::Downsample;
    plan.kernel = downsample_kernel_size(feature_side, grid_size);
  }
  return plan;
}

std::string to_string(const ResamplePlan& plan) {
  switch (plan.kind) {
    case ResamplePlan::Kind::Identity:
      return "identity";
    case ResamplePlan::Kind::Upsample:
      return "upsample(bilinear)";
    case ResamplePlan::Kind::Downsample:
      return "downsample(maxpool,f=" + std::to_string(plan.kernel) + ")";
  }
  return "?";
}

}  // namespace patchmil
