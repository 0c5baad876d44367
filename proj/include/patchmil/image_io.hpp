#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace patchmil {

// 8-bit image, interleaved channels, row-major.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c, fill) {}
  std::uint8_t& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool operator==(const Image&) const = default;
};

// Reads 8/16-bit gray, gray+alpha, RGB, RGBA or palette PNGs; 16-bit samples
// are reduced to 8 bits and palettes expanded. Throws IoError.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);
// True when the file exists and starts with the PNG signature.
bool looks_like_png(const std::filesystem::path& path);

}  // namespace patchmil
