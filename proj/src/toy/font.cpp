#include "seq2seq/toy/font.hpp"

#include "seq2seq/common.hpp"

namespace seq2seq::toy {

const std::array<std::array<std::uint8_t, kGlyphRows>, 26>& font_bitmaps() {
  static const std::array<std::array<std::uint8_t, kGlyphRows>, 26> glyphs = {{
      {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11},  // A
      {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E},  // B
      {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E},  // C
      {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C},  // D
      {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F},  // E
      {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10},  // F
      {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F},  // G
      {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11},  // H
      {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E},  // I
      {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C},  // J
      {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11},  // K
      {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F},  // L
      {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11},  // M
      {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11},  // N
      {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E},  // O
      {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10},  // P
      {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D},  // Q
      {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11},  // R
      {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E},  // S
      {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04},  // T
      {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E},  // U
      {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04},  // V
      {0x11, 0x11, 0x11, 0x15, 0x15, 0x1B, 0x11},  // W
      {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11},  // X
      {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04},  // Y
      {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F},  // Z
  }};
  return glyphs;
}

bool glyph_bit(int letter, int row, int col) {
  if (letter < 0 || letter >= 26) throw ShapeError("glyph letter out of range");
  if (row < 0 || row >= kGlyphRows || col < 0 || col >= kGlyphCols) return false;
  return (font_bitmaps()[static_cast<std::size_t>(letter)][static_cast<std::size_t>(row)] >>
          (kGlyphCols - 1 - col)) &
         1;
}

namespace {

template <typename Fn>
void for_each_glyph_pixel(const nn::Tensor<float>& img, int letter, int top, int left, int scale,
                          Fn&& fn) {
  int h = img.dim(0), w = img.dim(1);
  for (int r = 0; r < kGlyphRows; ++r)
    for (int c = 0; c < kGlyphCols; ++c) {
      if (!glyph_bit(letter, r, c)) continue;
      for (int dy = 0; dy < scale; ++dy)
        for (int dx = 0; dx < scale; ++dx) {
          int y = top + r * scale + dy;
          int x = left + c * scale + dx;
          if (y >= 0 && y < h && x >= 0 && x < w) fn(y, x);
        }
    }
}

}  // namespace

void render_glyph(nn::Tensor<float>& img, int letter, int top, int left, int scale,
                  float intensity) {
  if (img.ndim() != 2) throw ShapeError("render_glyph expects (H,W)");
  for_each_glyph_pixel(img, letter, top, left, scale, [&](int y, int x) {
    img.data[static_cast<std::size_t>(y) * img.dim(1) + x] = intensity;
  });
}

void glyph_coverage(nn::Tensor<float>& mask, int letter, int top, int left, int scale) {
  if (mask.ndim() != 2) throw ShapeError("glyph_coverage expects (H,W)");
  for_each_glyph_pixel(mask, letter, top, left, scale, [&](int y, int x) {
    mask.data[static_cast<std::size_t>(y) * mask.dim(1) + x] = 1.f;
  });
}

}  // namespace seq2seq::toy
