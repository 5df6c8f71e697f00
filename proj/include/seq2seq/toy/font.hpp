#pragma once

#include <array>
#include <cstdint>

#include "seq2seq/nn/tensor.hpp"

namespace seq2seq::toy {

inline constexpr int kGlyphRows = 7;
inline constexpr int kGlyphCols = 5;

// 5x7 uppercase bitmaps, one byte per row, bit 4 = leftmost column
const std::array<std::array<std::uint8_t, kGlyphRows>, 26>& font_bitmaps();

bool glyph_bit(int letter, int row, int col);

// paint glyph pixels at the given intensity; box is (7*scale) x (5*scale)
void render_glyph(nn::Tensor<float>& img, int letter, int top, int left, int scale,
                  float intensity);

// stroke coverage of a glyph into a 0/1 mask of the same image size
void glyph_coverage(nn::Tensor<float>& mask, int letter, int top, int left, int scale);

}  // namespace seq2seq::toy
