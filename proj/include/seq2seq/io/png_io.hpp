#pragma once

#include <string>

#include "seq2seq/nn/tensor.hpp"

namespace seq2seq::io {

// Grayscale PNG -> (H,W) floats in [0,1]. RGB input is converted by luminance.
nn::Tensor<float> load_png_gray(const std::string& path);

// (H,W) floats in [0,1] -> 8-bit grayscale PNG. Values are clamped.
void save_png_gray(const nn::Tensor<float>& img, const std::string& path);

// (3,H,W) floats in [0,1] -> 8-bit RGB PNG.
void save_png_rgb(const nn::Tensor<float>& img, const std::string& path);

}  // namespace seq2seq::io
