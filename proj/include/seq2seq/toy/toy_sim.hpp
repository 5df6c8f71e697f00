#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "seq2seq/io/volume.hpp"

namespace seq2seq::toy {

struct ToyLayout {
  int circle_cy = 0, circle_cx = 0, circle_r = 0;
  int shared_top = 0, shared_left = 0;
  int diff_top = 0, diff_left = 0;
  int glyph_scale = 4;

  int glyph_h() const;
  int glyph_w() const;
};

// gray level per structure, one entry per sequence
struct ToyIntensities {
  std::array<float, 2> background{}, circle{}, shared{}, diff{};
};

// Two aligned single-channel images: same circle and shared glyph, one glyph
// slot rendering a different letter per image.
struct ToySubject {
  io::Volume x1, x2;
  int label1 = 0;        // letter in x1's differing slot
  int label2 = 0;        // letter in x2's differing slot
  int shared_label = 0;  // letter both images share
  ToyLayout layout;
  ToyIntensities intensities;
};

ToySubject generate_subject(std::uint64_t seed, int image_size = 128);

// 1 where either differing letter paints a stroke, 0 elsewhere
nn::Tensor<float> difference_mask(const ToySubject& s);

struct ToyManifestEntry {
  std::string id;
  std::string split;  // train | val | test
  int label1 = 0, label2 = 0;
  std::string x1_path, x2_path;
  std::uint64_t seed = 0;
};

struct ToyManifest {
  std::uint64_t seed = 0;
  int n = 0;
  int image_size = 128;
  std::array<int, 3> split_counts{};  // train, val, test
  std::vector<ToyManifestEntry> entries;
};

struct ToyGenConfig {
  int n = 0;
  std::uint64_t seed = 0;
  std::array<int, 3> split{};  // must sum to n
  std::string out_dir;
  int image_size = 128;
  bool write_masks = false;
};

// Writes PNGs, optional ground-truth masks, and manifest.json; returns the
// manifest that was written.
ToyManifest generate_dataset(const ToyGenConfig& cfg);

void save_toy_manifest(const ToyManifest& m, const std::string& path);
ToyManifest load_toy_manifest(const std::string& path);

}  // namespace seq2seq::toy
