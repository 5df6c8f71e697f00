#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seq2seq/common.hpp"
#include "seq2seq/nn/tensor.hpp"

namespace seq2seq::io {

// 2D (H,W) or 3D (D,H,W) image with the pre-normalization intensity range
// kept for provenance.
struct Volume {
  nn::Tensor<float> data;
  std::vector<float> spacing;  // per-axis mm, optional
  float range_min = 0.f, range_max = 0.f;

  bool is3d() const { return data.ndim() == 3; }
  int depth() const { return is3d() ? data.dim(0) : 1; }
  int height() const { return data.dim(data.ndim() - 2); }
  int width() const { return data.dim(data.ndim() - 1); }
};

enum class Axis4D { timepoint, parameter };

// Ordered frames of one acquisition (DCE timepoints, diffusion b-values).
struct Series4D {
  std::vector<Volume> frames;
  Axis4D axis_meaning = Axis4D::timepoint;
  std::vector<std::string> frame_labels;

  void validate() const;
};

// One subject: S sequence slots, each holding a volume, a 4D series, or
// nothing (missing sequence).
struct Study {
  std::string subject_id;
  std::map<int, Volume> volumes;
  std::map<int, Series4D> series;
  std::vector<bool> availability;

  void validate() const;
};

enum class VolumeFormat { nifti, png_stack, raw_npy_like };

Volume load_volume(const std::string& path, VolumeFormat format);

// Percentile min-max rescale to [0,1]; (0,100) is plain min-max. A constant
// volume comes back all zeros with a warning so blank inputs keep flowing.
Volume normalize_minmax(const Volume& v, double clip_lo = 0.0, double clip_hi = 100.0);

// Centered crop; when pad is true, short axes are zero-padded symmetrically
// instead of erroring. Tie windows shift toward the lower index.
Volume center_crop(const Volume& v, const std::vector<int>& target_shape, bool pad = false);

// Three adjacent axial slices as channels (k-1, k, k+1); edges replicate.
nn::Tensor<float> extract_25d_slab(const Volume& v, int axial_index);

// Base image with a heat colormap blended on top, written as RGB PNG.
void save_overlay(const nn::Tensor<float>& base, const nn::Tensor<float>& map,
                  const std::string& path);

// reference percentile: linear interpolation on the sorted array
double percentile_sorted(const std::vector<float>& sorted, double p);

Volume load_nifti(const std::string& path);
void save_nifti(const Volume& v, const std::string& path);
nn::Tensor<float> load_npy(const std::string& path);
void save_npy(const nn::Tensor<float>& t, const std::string& path);

}  // namespace seq2seq::io
