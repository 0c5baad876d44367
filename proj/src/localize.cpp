#include "patchmil/localize.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "patchmil/error.hpp"

namespace patchmil {

std::vector<RegionPrediction> extract_regions(const PredictionTensor& pred, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw ValidationError("extract_regions: threshold must lie in (0, 1)");
  const int m = pred.grid.patch_count();
  std::vector<RegionPrediction> out(static_cast<std::size_t>(pred.num_classes));
  for (int k = 0; k < pred.num_classes; ++k) {
    RegionPrediction& r = out[static_cast<std::size_t>(k)];
    r.class_index = k;
    r.grid = pred.grid;
    for (int j = 0; j < m; ++j)
      if (pred.scores[static_cast<std::size_t>(j * pred.num_classes + k)] > threshold) r.activated.push_back(j);
  }
  return out;
}

std::size_t PixelMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

PixelMask region_to_pixel_mask(const RegionPrediction& region) {
  const PatchGrid& g = region.grid;
  PixelMask mask(g.image_width, g.image_height);
  if (region.empty()) return mask;
  std::vector<std::uint8_t> active(static_cast<std::size_t>(g.patch_count()), 0);
  for (int j : region.activated) active[static_cast<std::size_t>(j)] = 1;
  for (int y = 0; y < g.image_height; ++y)
    for (int x = 0; x < g.image_width; ++x)
      if (active[static_cast<std::size_t>(g.patch_of_pixel(x, y))]) mask.set(x, y);
  return mask;
}

PixelMask boxes_to_pixel_mask(const std::vector<BoundingBox>& boxes, int width, int height) {
  PixelMask mask(width, height);
  for (const BoundingBox& b : boxes) {
    // Centre x + 0.5 inside [b.x, b.x + b.w)  <=>  x in [ceil(b.x - 0.5), ceil(b.x + b.w - 0.5)).
    const int x0 = std::max(0, static_cast<int>(std::ceil(b.x - 0.5)));
    const int x1 = std::min(width, static_cast<int>(std::ceil(b.x + b.w - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(b.y - 0.5)));
    const int y1 = std::min(height, static_cast<int>(std::ceil(b.y + b.h - 0.5)));
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) mask.set(x, y);
  }
  return mask;
}

std::string format_region(const std::string& image_id, const RegionPrediction& region) {
  std::ostringstream os;
  os << image_id << ',' << region.class_index << ',';
  for (std::size_t i = 0; i < region.activated.size(); ++i) {
    const int j = region.activated[i];
    if (i) os << ';';
    os << region.grid.row_of(j) << ':' << region.grid.col_of(j);
  }
  return os.str();
}

RegionRecord parse_region(const std::string& line) {
  const auto c1 = line.find(',');
  const auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
  if (c2 == std::string::npos) throw ValidationError("region line needs three fields: '" + line + "'");
  RegionRecord rec;
  rec.image_id = line.substr(0, c1);
  try {
    rec.class_index = std::stoi(line.substr(c1 + 1, c2 - c1 - 1));
  } catch (const std::exception&) {
    throw ValidationError("region line has a bad class index: '" + line + "'");
  }
  std::istringstream cells(line.substr(c2 + 1));
  std::string cell;
  while (std::getline(cells, cell, ';')) {
    if (cell.empty()) continue;
    int r = 0, c = 0;
    char colon = 0;
    std::istringstream cs(cell);
    if (!(cs >> r >> colon >> c) || colon != ':')
      throw ValidationError("region line has a bad cell '" + cell + "'");
    rec.cells.emplace_back(r, c);
  }
  return rec;
}

void write_regions(std::ostream& out, const std::string& image_id,
                   const std::vector<RegionPrediction>& regions) {
  for (const auto& r : regions) out << format_region(image_id, r) << '\n';
}

std::vector<RegionRecord> read_regions(std::istream& in) {
  std::vector<RegionRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    out.push_back(parse_region(line));
  }
  return out;
}

}  // namespace patchmil
