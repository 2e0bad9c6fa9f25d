#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace hcbm {

using Rgb = std::array<std::uint8_t, 3>;

/// 8-bit RGB raster, row-major, channels interleaved.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h, Rgb fill = {0, 0, 0});

  [[nodiscard]] Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Writes a non-interlaced 8-bit RGB PNG. Output bytes depend only on the
/// pixels (no timestamps or text chunks).
void write_png(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_png(const std::filesystem::path& path);

}  // namespace hcbm
