#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dvqa::font {

inline constexpr int kGlyphWidth = 5;
inline constexpr int kGlyphHeight = 7;
inline constexpr int kAdvance = 6;  // glyph plus one blank column, at scale 1

bool has_glyph(char c);

// Column bitmap for one glyph: 5 bytes, bit 0 is the top row.
const std::uint8_t* glyph(char c);

// Rendered width in pixels (trailing spacing column excluded). advance is the
// per-character pitch in glyph units at scale 1; kAdvance unless widened.
int text_width(const std::string& text, int scale, int advance = kAdvance);

// Stamps text into an interleaved H x W x channels byte image. Pixels outside
// the canvas are clipped; callers that care about overflow measure first.
void draw_text(std::vector<std::uint8_t>& image, int height, int width, int channels, int x, int y,
               const std::string& text, int scale, std::uint8_t value, int advance = kAdvance);

}  // namespace dvqa::font
