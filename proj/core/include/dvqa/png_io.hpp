#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dvqa {

// Interleaved 8-bit RGB, row-major.
struct ImageU8 {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  ImageU8() = default;
  ImageU8(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

  std::uint8_t& at(int y, int x, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
};

// Truecolor 8-bit PNG, no interlace. Writing always emits filter 0 rows and a
// fixed zlib level, so identical pixels produce identical bytes.
std::vector<std::uint8_t> encode_png(const ImageU8& image);
ImageU8 decode_png(const std::uint8_t* data, std::size_t size);

void write_png(const std::string& path, const ImageU8& image);
ImageU8 read_png(const std::string& path);

}  // namespace dvqa
