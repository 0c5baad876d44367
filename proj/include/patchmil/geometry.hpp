#pragma once
// Patch-grid geometry. Coordinates: origin top-left, x rightward, y downward,
// all extents in pixels. The grid partitions [0, width) x [0, height) into
// P x P continuous cells of size (width / P) x (height / P); patch index
// j = row * P + col.

#include <cstdint>
#include <string>
#include <vector>

namespace patchmil {

struct PatchGrid {
  int image_width = 0;
  int image_height = 0;
  int grid_size = 0;  // P

  PatchGrid() = default;
  PatchGrid(int width, int height, int p);

  int patch_count() const { return grid_size * grid_size; }
  int index(int row, int col) const { return row * grid_size + col; }
  int row_of(int j) const { return j / grid_size; }
  int col_of(int j) const { return j % grid_size; }

  double cell_width() const { return static_cast<double>(image_width) / grid_size; }
  double cell_height() const { return static_cast<double>(image_height) / grid_size; }

  // Cell containing the centre of pixel (x, y).
  int patch_of_pixel(int x, int y) const;

  bool operator==(const PatchGrid&) const = default;
};

struct BoundingBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
  int class_index = 0;

  double right() const { return x + w; }
  double bottom() const { return y + h; }
  double area() const { return w * h; }
  bool contains_point(double px, double py) const {
    return px >= x && px < x + w && py >= y && py < y + h;
  }
  bool operator==(const BoundingBox&) const = default;
};

// Clips a box to [0, width) x [0, height). The result may be degenerate.
BoundingBox clamp_box(const BoundingBox& box, int width, int height);

// Patches positive for one class: every cell overlapped by the box.
struct PatchLabelSet {
  std::vector<int> positives;  // sorted, unique patch indices
  PatchGrid grid;
  int class_index = 0;

  std::size_t size() const { return positives.size(); }
  bool contains(int j) const;
  // Dense 0/1 membership vector of length m.
  std::vector<std::uint8_t> membership() const;
  // Union with another set on the same grid (multiple boxes of one class).
  void merge(const PatchLabelSet& other);
};

// Cells whose rectangle has positive-area intersection with the box. The box
// is clamped to the image first; a degenerate box throws ValidationError.
PatchLabelSet bbox_to_patch_labels(const BoundingBox& box, const PatchGrid& grid);

// Kernel size of a stride-1, unpadded max-pool that maps an input_side-wide
// map to target_side: f = w - o + 1. Requires input_side >= target_side >= 1.
int downsample_kernel_size(int input_side, int target_side);

struct ResamplePlan {
  enum class Kind { Identity, Upsample, Downsample };
  Kind kind = Kind::Identity;
  int input_side = 0;
  int output_side = 0;
  int kernel = 1;  // pooling kernel for Downsample, 1 otherwise

  bool operator==(const ResamplePlan&) const = default;
};

ResamplePlan resample_plan(int feature_side, int grid_size);
std::string to_string(const ResamplePlan& plan);

}  // namespace patchmil
