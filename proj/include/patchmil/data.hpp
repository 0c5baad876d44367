#pragma once
// Dataset manifests and preprocessing.
//
// Manifest CSV (UTF-8). The first line declares the classes, each following
// line is one image:
//
//   classes,Effusion;Mass;Nodule
//   img1.png,Effusion;Mass,Mass:100,100,50,50
//   img2.png,,
//
// Columns: path (relative to the manifest's directory), semicolon-separated
// labels, then everything after the second comma is a semicolon-separated list
// of class:x,y,w,h boxes in original image pixels. A box implies its class
// label. Rows with at least one box form the annotated pool.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "patchmil/geometry.hpp"
#include "patchmil/image_io.hpp"

namespace patchmil {

struct ImageSample {
  std::string image_id;  // the path as written in the manifest
  std::string path;
  std::vector<std::uint8_t> labels;  // one 0/1 entry per class
  std::vector<BoundingBox> boxes;
  std::string split;

  bool annotated() const { return !boxes.empty(); }
  std::vector<BoundingBox> boxes_of(int k) const;
  bool operator==(const ImageSample&) const = default;
};

struct DatasetManifest {
  std::vector<std::string> class_names;
  std::vector<ImageSample> samples;
  std::filesystem::path root;  // directory relative paths resolve against

  int num_classes() const { return static_cast<int>(class_names.size()); }
  int class_index(const std::string& name) const;  // -1 when unknown
  std::filesystem::path resolve(const ImageSample& s) const;
  const ImageSample* find(const std::string& image_id) const;
  std::size_t box_count() const;
};

// Collected per-line problems; what() lists all of them.
class ManifestError : public std::runtime_error {
 public:
  explicit ManifestError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct ManifestOptions {
  bool verify_images = true;  // require every path to be a readable PNG
};

DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& root,
                               const ManifestOptions& options = {});
DatasetManifest load_manifest(const std::filesystem::path& path, const ManifestOptions& options = {});
std::string format_manifest(const DatasetManifest& manifest);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

enum class ChannelPolicy {
  Replicate,  // gray -> 3 channels; alpha dropped
  Strict,     // anything but 3-channel RGB is rejected
};

// Model-ready pixels: channel-major [3, side, side] with values in [-1, 1].
struct PreparedImage {
  int side = 0;
  std::vector<float> pixels;
  std::vector<BoundingBox> boxes;  // rescaled to side x side
};

// Bilinear resize to side x side (half-pixel centres), v / 127.5 - 1, boxes
// clamped to the original image and scaled per axis. side must be a multiple of 32.
PreparedImage preprocess(const Image& image, const std::vector<BoundingBox>& boxes, int side,
                         ChannelPolicy policy = ChannelPolicy::Replicate);

// Scales a box from a (from_w x from_h) image to (to_w x to_h).
BoundingBox scale_box(const BoundingBox& box, int from_w, int from_h, int to_w, int to_h);

}  // namespace patchmil
