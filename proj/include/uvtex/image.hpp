#pragma once

#include <string>
#include <vector>

namespace uvtex {

// Row-major interleaved RGB image with components in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

  double& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  double at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  bool same_size(const Image& o) const { return width == o.width && height == o.height; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

// Binary PPM (P6, maxval 255). Components quantized with round(v * 255) on
// write and mapped back as byte / 255 on read. Read rejects other magics,
// other maxvals, and truncated payloads.
Image read_ppm(const std::string& path);
void write_ppm(const Image& img, const std::string& path);

std::vector<std::uint8_t> image_to_rgb8(const Image& img);
Image image_from_rgb8(int width, int height, const std::vector<std::uint8_t>& bytes);

}  // namespace uvtex
