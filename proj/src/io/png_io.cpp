#include "seq2seq/io/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

#include "seq2seq/common.hpp"

namespace seq2seq::io {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

nn::Tensor<float> load_png_gray(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("cannot open PNG: " + path);
  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
    throw DataError("not a PNG file: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("PNG decode failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  int channels = png_get_channels(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(w) * channels);
  nn::Tensor<float> out({static_cast<int>(h), static_cast<int>(w)});
  for (png_uint_32 y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (png_uint_32 x = 0; x < w; ++x) {
      float v;
      if (channels >= 3) {
        v = (0.299f * row[x * channels] + 0.587f * row[x * channels + 1] +
             0.114f * row[x * channels + 2]) /
            255.f;
      } else {
        v = row[x * channels] / 255.f;
      }
      out.data[static_cast<std::size_t>(y) * w + x] = v;
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

namespace {

void write_png(const std::string& path, const std::vector<png_byte>& pixels, int h, int w,
               int channels) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw DataError("cannot write PNG: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("PNG encode failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y)
    rows[static_cast<std::size_t>(y)] =
        const_cast<png_bytep>(pixels.data() + static_cast<std::size_t>(y) * w * channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

png_byte to_byte(float v) {
  v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
  return static_cast<png_byte>(v * 255.f + 0.5f);
}

}  // namespace

void save_png_gray(const nn::Tensor<float>& img, const std::string& path) {
  if (img.ndim() != 2) throw ShapeError("save_png_gray expects (H,W), got " + img.shape_str());
  int h = img.dim(0), w = img.dim(1);
  std::vector<png_byte> pixels(static_cast<std::size_t>(h) * w);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = to_byte(img.data[i]);
  write_png(path, pixels, h, w, 1);
}

void save_png_rgb(const nn::Tensor<float>& img, const std::string& path) {
  if (img.ndim() != 3 || img.dim(0) != 3)
    throw ShapeError("save_png_rgb expects (3,H,W), got " + img.shape_str());
  int h = img.dim(1), w = img.dim(2);
  std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<png_byte> pixels(plane * 3);
  for (std::size_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c)
      pixels[i * 3 + c] = to_byte(img.data[c * plane + i]);
  write_png(path, pixels, h, w, 3);
}

}  // namespace seq2seq::io
