#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sdsf {

struct PngImage {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 gray, 3 rgb, 4 rgba
  std::vector<std::uint8_t> pixels;  // row-major, interleaved

  std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

// 8-bit PNG, no palette, no interlace.
void write_png(const std::string& path, const std::uint8_t* pixels, int width,
               int height, int channels);
PngImage read_png(const std::string& path);

}  // namespace sdsf
