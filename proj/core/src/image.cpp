#include "hcbm/image.hpp"

#include <png.h>


#include "hcbm/error.hpp"

namespace hcbm {

RgbImage::RgbImage(int w, int h, Rgb fill) : width(w), height(h) {
  if (w < 0 || h < 0) throw InvalidConfigError("image dimensions must be non-negative");
  pixels.resize(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3);
  for (std::size_t i = 0; i < pixels.size(); i += 3) {
    pixels[i] = fill[0];
    pixels[i + 1] = fill[1];
    pixels[i + 2] = fill[2];
  }
}

Rgb RgbImage::at(int x, int y) const {
  const auto i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x)) * 3;
  return {pixels[i], pixels[i + 1], pixels[i + 2]};
}

void RgbImage::set(int x, int y, Rgb c) {
  const auto i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x)) * 3;
  pixels[i] = c[0];
  pixels[i + 1] = c[1];
  pixels[i + 2] = c[2];
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(image.width);
  desc.height = static_cast<png_uint_32>(image.height);
  desc.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&desc, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    const std::string msg = desc.message;
    png_image_free(&desc);
    throw IoError("cannot write " + path.string() + ": " + msg);
  }
}

RgbImage read_png(const std::filesystem::path& path) {
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&desc, path.c_str())) {
    throw IoError("cannot read " + path.string() + ": " + desc.message);
  }
  desc.format = PNG_FORMAT_RGB;
  RgbImage image(static_cast<int>(desc.width), static_cast<int>(desc.height));
  if (!png_image_finish_read(&desc, nullptr, image.pixels.data(), 0, nullptr)) {
    const std::string msg = desc.message;
    png_image_free(&desc);
    throw IoError("cannot decode " + path.string() + ": " + msg);
  }
  return image;
}

}  // namespace hcbm
