#pragma once
// Synthetic shape dataset: noisy gray backgrounds with up to three shapes of
// distinct classes, every shape's tight box recorded. A chosen subset of the
// shape-bearing images keeps its boxes in the manifest (the annotated pool);
// the rest are label-only.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "patchmil/data.hpp"
#include "patchmil/image_io.hpp"

namespace patchmil {

inline const std::vector<std::string>& shape_class_names() {
  static const std::vector<std::string> names{"disk",  "square",   "bar_h", "bar_v",
                                              "ring",  "triangle", "cross", "checker"};
  return names;
}

struct SynthConfig {
  int num_classes = 4;  // <= 8, taken in shape_class_names() order
  int image_side = 64;
  int samples = 100;
  std::uint64_t seed = 0;
  double annotated_fraction = 0.1;  // of all samples, drawn from shape-bearing ones
  bool stratified = false;          // balance annotated picks across classes
  int max_shapes = 3;               // shapes per image uniform in [0, max_shapes]
  int min_size = 10;
  int max_size = 18;
  double noise_sigma = 12.0;
  int max_retries = 200;            // placement attempts per shape

  void validate() const;
};

struct ShapeRecord {
  int class_index = 0;
  BoundingBox box;
};

struct SyntheticImageLog {
  std::string image_id;
  std::vector<ShapeRecord> shapes;
  bool annotated = false;
};

struct SyntheticDataset {
  DatasetManifest manifest;
  std::vector<Image> images;  // parallel to manifest.samples
  std::vector<SyntheticImageLog> log;
  SynthConfig config;

  std::size_t shape_count() const;
};

SyntheticDataset generate_synthetic(const SynthConfig& config);

// Writes images/<id>.png, manifest.csv and provenance.json under dir.
// Returns the manifest path.
std::filesystem::path write_synthetic(const SyntheticDataset& data, const std::filesystem::path& dir);

}  // namespace patchmil
