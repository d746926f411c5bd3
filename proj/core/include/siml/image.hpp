#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace siml {

/// Row-major H x W x 3 raster, channel-interleaved, values nominally in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> pix;

  Image() = default;
  Image(int h, int w, double fill = 0.0)
      : height(h), width(w), pix(static_cast<std::size_t>(h) * w * 3, fill) {}

  double& at(int y, int x, int c) {
    return pix[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  double at(int y, int x, int c) const {
    return pix[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::size_t size() const { return pix.size(); }
};

/// Row-major h x w binary mask; 0 = background, 1 = foreground.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> m;

  Mask() = default;
  Mask(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), m(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int y, int x) { return m[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return m[static_cast<std::size_t>(y) * width + x]; }

  std::size_t foreground_count() const {
    std::size_t n = 0;
    for (std::uint8_t v : m) n += v;
    return n;
  }
};

}  // namespace siml
