#include "chartx/fonts.hpp"

#include <cmath>

namespace chartx::gen {

const std::string kAlphabet = "abcdefghijklmnopqrstuvwxyz0123456789 %.-";

int symbol_id(char c) {
  size_t pos = kAlphabet.find(c);
  if (pos == std::string::npos)
    throw InputError(std::string("symbol_id: character not in alphabet: '") + c + "'");
  return static_cast<int>(pos);
}

bool text_in_alphabet(const std::string& s) {
  for (char c : s)
    if (kAlphabet.find(c) == std::string::npos) return false;
  return true;
}

namespace {

// 5x7 base design, one row per byte, low 5 bits used (MSB of the 5 = left).
struct Raw57 {
  uint8_t rows[7];
};

// clang-format off
const Raw57 kBase57[40] = {
    /* a */ {{0b00000, 0b00000, 0b01110, 0b00001, 0b01111, 0b10001, 0b01111}},
    /* b */ {{0b10000, 0b10000, 0b10110, 0b11001, 0b10001, 0b10001, 0b11110}},
    /* c */ {{0b00000, 0b00000, 0b01110, 0b10000, 0b10000, 0b10001, 0b01110}},
    /* d */ {{0b00001, 0b00001, 0b01101, 0b10011, 0b10001, 0b10001, 0b01111}},
    /* e */ {{0b00000, 0b00000, 0b01110, 0b10001, 0b11111, 0b10000, 0b01110}},
    /* f */ {{0b00110, 0b01001, 0b01000, 0b11100, 0b01000, 0b01000, 0b01000}},
    /* g */ {{0b00000, 0b01111, 0b10001, 0b10001, 0b01111, 0b00001, 0b01110}},
    /* h */ {{0b10000, 0b10000, 0b10110, 0b11001, 0b10001, 0b10001, 0b10001}},
    /* i */ {{0b00100, 0b00000, 0b01100, 0b00100, 0b00100, 0b00100, 0b01110}},
    /* j */ {{0b00010, 0b00000, 0b00110, 0b00010, 0b00010, 0b10010, 0b01100}},
    /* k */ {{0b10000, 0b10000, 0b10010, 0b10100, 0b11000, 0b10100, 0b10010}},
    /* l */ {{0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110}},
    /* m */ {{0b00000, 0b00000, 0b11010, 0b10101, 0b10101, 0b10101, 0b10101}},
    /* n */ {{0b00000, 0b00000, 0b10110, 0b11001, 0b10001, 0b10001, 0b10001}},
    /* o */ {{0b00000, 0b00000, 0b01110, 0b10001, 0b10001, 0b10001, 0b01110}},
    /* p */ {{0b00000, 0b00000, 0b11110, 0b10001, 0b11110, 0b10000, 0b10000}},
    /* q */ {{0b00000, 0b00000, 0b01101, 0b10011, 0b01111, 0b00001, 0b00001}},
    /* r */ {{0b00000, 0b00000, 0b10110, 0b11001, 0b10000, 0b10000, 0b10000}},
    /* s */ {{0b00000, 0b00000, 0b01110, 0b10000, 0b01110, 0b00001, 0b11110}},
    /* t */ {{0b01000, 0b01000, 0b11100, 0b01000, 0b01000, 0b01001, 0b00110}},
    /* u */ {{0b00000, 0b00000, 0b10001, 0b10001, 0b10001, 0b10011, 0b01101}},
    /* v */ {{0b00000, 0b00000, 0b10001, 0b10001, 0b10001, 0b01010, 0b00100}},
    /* w */ {{0b00000, 0b00000, 0b10001, 0b10101, 0b10101, 0b10101, 0b01010}},
    /* x */ {{0b00000, 0b00000, 0b10001, 0b01010, 0b00100, 0b01010, 0b10001}},
    /* y */ {{0b00000, 0b00000, 0b10001, 0b10001, 0b01111, 0b00001, 0b01110}},
    /* z */ {{0b00000, 0b00000, 0b11111, 0b00010, 0b00100, 0b01000, 0b11111}},
    /* 0 */ {{0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110}},
    /* 1 */ {{0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110}},
    /* 2 */ {{0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111}},
    /* 3 */ {{0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110}},
    /* 4 */ {{0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010}},
    /* 5 */ {{0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110}},
    /* 6 */ {{0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110}},
    /* 7 */ {{0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000}},
    /* 8 */ {{0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110}},
    /* 9 */ {{0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100}},
    /*   */ {{0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b00000}},
    /* % */ {{0b11000, 0b11001, 0b00010, 0b00100, 0b01000, 0b10011, 0b00011}},
    /* . */ {{0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b01100, 0b01100}},
    /* - */ {{0b00000, 0b00000, 0b00000, 0b11111, 0b00000, 0b00000, 0b00000}},
};
// clang-format on

Glyph make_glyph_5wide(const Raw57& raw, int height) {
  Glyph g;
  g.width = 5;
  for (int y = 0; y < height && y < 16; ++y)
    g.rows[static_cast<size_t>(y)] = static_cast<uint16_t>(raw.rows[y] << 11);
  return g;
}

Font make_mono57() {
  Font f;
  f.name = "mono57";
  f.base_height = 7;
  f.monospace = true;
  for (const Raw57& raw : kBase57) f.glyphs.push_back(make_glyph_5wide(raw, 7));
  return f;
}

Font make_bold57() {
  Font f;
  f.name = "bold57";
  f.base_height = 7;
  f.monospace = true;
  for (const Raw57& raw : kBase57) {
    Glyph g;
    g.width = 6;
    for (int y = 0; y < 7; ++y) {
      uint16_t row = static_cast<uint16_t>(raw.rows[y] << 11);
      g.rows[static_cast<size_t>(y)] = static_cast<uint16_t>(row | (row >> 1));
    }
    f.glyphs.push_back(g);
  }
  return f;
}

Font make_prop57() {
  Font f;
  f.name = "prop57";
  f.base_height = 7;
  f.monospace = false;
  for (const Raw57& raw : kBase57) {
    int lo = 5, hi = -1;
    for (int y = 0; y < 7; ++y) {
      for (int x = 0; x < 5; ++x) {
        if ((raw.rows[y] >> (4 - x)) & 1) {
          lo = std::min(lo, x);
          hi = std::max(hi, x);
        }
      }
    }
    Glyph g;
    if (hi < 0) {  // space
      g.width = 3;
    } else {
      g.width = hi - lo + 1;
      for (int y = 0; y < 7; ++y)
        g.rows[static_cast<size_t>(y)] =
            static_cast<uint16_t>((raw.rows[y] << (11 + lo)) & 0xffff);
    }
    f.glyphs.push_back(g);
  }
  return f;
}

Font make_tall59() {
  // 5x9 variant: rows 2 and 4 of the base design are duplicated.
  Font f;
  f.name = "tall59";
  f.base_height = 9;
  f.monospace = true;
  const int src_row[9] = {0, 1, 2, 2, 3, 4, 4, 5, 6};
  for (const Raw57& raw : kBase57) {
    Glyph g;
    g.width = 5;
    for (int y = 0; y < 9; ++y)
      g.rows[static_cast<size_t>(y)] = static_cast<uint16_t>(raw.rows[src_row[y]] << 11);
    f.glyphs.push_back(g);
  }
  return f;
}

}  // namespace

const std::vector<Font>& builtin_fonts() {
  static const std::vector<Font> fonts = {make_mono57(), make_bold57(), make_prop57(),
                                          make_tall59()};
  return fonts;
}

TextMetrics measure_text(const std::string& text, const Font& font, int size_px) {
  if (size_px < 4) throw ConfigError("measure_text: size_px must be >= 4");
  if (text.empty()) return {0, size_px};
  double f = static_cast<double>(size_px) / font.base_height;
  int width = 0;
  for (size_t i = 0; i < text.size(); ++i) {
    const Glyph& g = font.glyph(text[i]);
    int gw = std::max(1, static_cast<int>(std::lround(g.width * f)));
    int gap = (i + 1 < text.size()) ? std::max(1, static_cast<int>(std::lround(f))) : 0;
    width += gw + gap;
  }
  return {width, size_px};
}

std::vector<uint8_t> raster_text(const std::string& text, const Font& font, int size_px,
                                 int* out_w, int* out_h) {
  TextMetrics m = measure_text(text, font, size_px);
  *out_w = m.width;
  *out_h = m.height;
  std::vector<uint8_t> mask(static_cast<size_t>(m.width) * m.height, 0);
  if (text.empty()) return mask;
  double f = static_cast<double>(size_px) / font.base_height;
  int pen = 0;
  for (size_t i = 0; i < text.size(); ++i) {
    const Glyph& g = font.glyph(text[i]);
    int gw = std::max(1, static_cast<int>(std::lround(g.width * f)));
    for (int y = 0; y < size_px; ++y) {
      int sy = std::min(font.base_height - 1, static_cast<int>(y / f));
      for (int x = 0; x < gw; ++x) {
        int sx = std::min(g.width - 1, static_cast<int>(x / f));
        if (g.bit(sx, sy))
          mask[static_cast<size_t>(y) * m.width + (pen + x)] = 1;
      }
    }
    pen += gw + ((i + 1 < text.size()) ? std::max(1, static_cast<int>(std::lround(f))) : 0);
  }
  return mask;
}

std::vector<uint8_t> rotate_mask(const std::vector<uint8_t>& mask, int w, int h,
                                 double angle_deg, int* out_w, int* out_h) {
  double a = std::fmod(angle_deg, 360.0);
  if (a < 0) a += 360;
  // exact quarter turns
  if (a == 0.0) {
    *out_w = w;
    *out_h = h;
    return mask;
  }
  if (a == 90.0 || a == 270.0 || a == 180.0) {
    int nw = (a == 180.0) ? w : h;
    int nh = (a == 180.0) ? h : w;
    std::vector<uint8_t> out(static_cast<size_t>(nw) * nh, 0);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!mask[static_cast<size_t>(y) * w + x]) continue;
        int nx, ny;
        if (a == 90.0) {  // visual CCW quarter turn
          nx = y;
          ny = (w - 1) - x;
        } else if (a == 270.0) {
          nx = (h - 1) - y;
          ny = x;
        } else {
          nx = (w - 1) - x;
          ny = (h - 1) - y;
        }
        out[static_cast<size_t>(ny) * nw + nx] = 1;
      }
    }
    *out_w = nw;
    *out_h = nh;
    return out;
  }
  // general angle: nearest-neighbor over the rotated bounding box
  double th = a * M_PI / 180.0;
  double c = std::cos(th), s = std::sin(th);
  int nw = static_cast<int>(std::ceil(std::abs(w * c) + std::abs(h * s)));
  int nh = static_cast<int>(std::ceil(std::abs(w * s) + std::abs(h * c)));
  std::vector<uint8_t> out(static_cast<size_t>(nw) * nh, 0);
  double cx = 0.5 * (w - 1), cy = 0.5 * (h - 1);
  double ncx = 0.5 * (nw - 1), ncy = 0.5 * (nh - 1);
  for (int y = 0; y < nh; ++y) {
    for (int x = 0; x < nw; ++x) {
      // inverse of the visual-CCW forward map
      double dx = x - ncx, dy = y - ncy;
      int sx = static_cast<int>(std::lround(cx + c * dx - s * dy));
      int sy = static_cast<int>(std::lround(cy + s * dx + c * dy));
      if (sx >= 0 && sx < w && sy >= 0 && sy < h && mask[static_cast<size_t>(sy) * w + sx])
        out[static_cast<size_t>(y) * nw + x] = 1;
    }
  }
  *out_w = nw;
  *out_h = nh;
  return out;
}

}  // namespace chartx::gen
