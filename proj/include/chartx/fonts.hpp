#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "chartx/common.hpp"

namespace chartx::gen {

// Alphabet shared by the generator and the recognizer. Index IS the symbol id.
extern const std::string kAlphabet;  // a-z 0-9 space % . -
int symbol_id(char c);               // throws InputError for unknown chars
bool text_in_alphabet(const std::string& s);

// Bitmap glyph: up to 16x16 at base scale, row bits MSB-first from the left.
struct Glyph {
  int width = 0;
  std::array<uint16_t, 16> rows{};
  bool bit(int x, int y) const { return (rows[static_cast<size_t>(y)] >> (15 - x)) & 1u; }
};

struct Font {
  std::string name;
  int base_height = 7;
  bool monospace = true;
  std::vector<Glyph> glyphs;  // indexed by symbol id

  const Glyph& glyph(char c) const { return glyphs[static_cast<size_t>(symbol_id(c))]; }
  // horizontal advance at base scale (glyph width + 1 column of spacing)
  int advance(char c) const { return glyph(c).width + 1; }
};

// Bundled deterministic fonts: two monospace designs, a proportional trim and
// a bold variant. Rasterization is nearest-neighbor everywhere.
const std::vector<Font>& builtin_fonts();

// Size of `text` rendered horizontally at size_px (glyph box height). Width 0
// for empty text.
struct TextMetrics {
  int width = 0;
  int height = 0;
};
TextMetrics measure_text(const std::string& text, const Font& font, int size_px);

// Rasterize to a row-major mask (1 = ink) of measure_text dims.
std::vector<uint8_t> raster_text(const std::string& text, const Font& font, int size_px,
                                 int* out_w, int* out_h);

// Nearest-neighbor rotation of a mask by angle_deg (visual CCW, y down).
// Exact for multiples of 90. Returns the rotated mask and its dims.
std::vector<uint8_t> rotate_mask(const std::vector<uint8_t>& mask, int w, int h,
                                 double angle_deg, int* out_w, int* out_h);

}  // namespace chartx::gen
