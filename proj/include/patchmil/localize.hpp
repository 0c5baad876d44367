#pragma once
// Class-wise localization from patch scores: every patch scoring strictly
// above T_s is activated, and all activated patches of a class form a single
// (possibly non-rectangular, possibly disconnected) region.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "patchmil/geometry.hpp"
#include "patchmil/model.hpp"

namespace patchmil {

inline constexpr double kDefaultActivationThreshold = 0.5;

struct RegionPrediction {
  int class_index = 0;
  std::vector<int> activated;  // sorted patch indices
  PatchGrid grid;

  bool empty() const { return activated.empty(); }
  bool operator==(const RegionPrediction&) const = default;
};

// One region per class; threshold must lie in (0, 1).
std::vector<RegionPrediction> extract_regions(const PredictionTensor& pred, double threshold);

// Binary image-resolution mask.
struct PixelMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  PixelMask() = default;
  PixelMask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}
  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y) { bits[static_cast<std::size_t>(y) * width + x] = 1; }
  std::size_t count() const;
};

// Pixels whose centre falls in an activated cell.
PixelMask region_to_pixel_mask(const RegionPrediction& region);
// Pixels whose centre falls inside any of the boxes.
PixelMask boxes_to_pixel_mask(const std::vector<BoundingBox>& boxes, int width, int height);

// Text form, one line per region:  <image_id>,<class_index>,<r>:<c>;<r>:<c>;...
// An empty region has an empty third field. The image id must not contain commas.
// read_regions skips blank lines and lines starting with '#'.
struct RegionRecord {
  std::string image_id;
  int class_index = 0;
  std::vector<std::pair<int, int>> cells;  // (row, col)
  bool operator==(const RegionRecord&) const = default;
};

std::string format_region(const std::string& image_id, const RegionPrediction& region);
RegionRecord parse_region(const std::string& line);
void write_regions(std::ostream& out, const std::string& image_id,
                   const std::vector<RegionPrediction>& regions);
std::vector<RegionRecord> read_regions(std::istream& in);

}  // namespace patchmil
