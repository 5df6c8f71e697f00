#include "seq2seq/io/volume.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "seq2seq/io/png_io.hpp"
#include "seq2seq/sha256.hpp"

namespace seq2seq::io {

namespace fs = std::filesystem;

void Series4D::validate() const {
  if (frames.empty()) throw DataError("4D series with no frames");
  for (const Volume& f : frames) {
    if (!f.data.same_shape(frames[0].data))
      throw DataError("4D series frames disagree on shape: " + f.data.shape_str() + " vs " +
                      frames[0].data.shape_str());
  }
  if (!frame_labels.empty() && frame_labels.size() != frames.size())
    throw DataError("4D series label count does not match frame count");
}

void Study::validate() const {
  if (availability.empty()) throw DataError("study " + subject_id + " has empty availability");
  bool any = false;
  for (std::size_t i = 0; i < availability.size(); ++i) {
    bool has = volumes.count(static_cast<int>(i)) > 0 || series.count(static_cast<int>(i)) > 0;
    if (has != availability[i])
      throw DataError("study " + subject_id + ": availability[" + std::to_string(i) +
                      "] disagrees with stored sequences");
    any = any || has;
  }
  if (!any) throw DataError("study " + subject_id + " has no available sequence");
  for (const auto& [idx, s] : series) {
    (void)idx;
    s.validate();
  }
}

Volume load_volume(const std::string& path, VolumeFormat format) {
  switch (format) {
    case VolumeFormat::nifti:
      return load_nifti(path);
    case VolumeFormat::png_stack: {
      if (fs::is_directory(path)) {
        std::vector<std::string> slices;
        for (const auto& e : fs::directory_iterator(path)) {
          if (e.path().extension() == ".png") slices.push_back(e.path().string());
        }
        if (slices.empty()) throw DataError("no PNG slices in " + path);
        std::sort(slices.begin(), slices.end());
        nn::Tensor<float> first = load_png_gray(slices[0]);
        Volume v;
        v.data = nn::Tensor<float>({static_cast<int>(slices.size()), first.dim(0), first.dim(1)});
        std::size_t plane = first.data.size();
        std::copy(first.data.begin(), first.data.end(), v.data.data.begin());
        for (std::size_t k = 1; k < slices.size(); ++k) {
          nn::Tensor<float> s = load_png_gray(slices[k]);
          if (!s.same_shape(first))
            throw DataError("slice shape mismatch in stack: " + slices[k] + " is " +
                            s.shape_str() + ", expected " + first.shape_str());
          std::copy(s.data.begin(), s.data.end(), v.data.data.begin() + k * plane);
        }
        v.range_min = v.data.min();
        v.range_max = v.data.max();
        return v;
      }
      Volume v;
      v.data = load_png_gray(path);
      v.range_min = v.data.min();
      v.range_max = v.data.max();
      return v;
    }
    case VolumeFormat::raw_npy_like: {
      nn::Tensor<float> t = load_npy(path);
      if (t.ndim() != 2 && t.ndim() != 3)
        throw DataError("expected 2D or 3D array in " + path + ", got " + t.shape_str());
      Volume v;
      v.data = std::move(t);
      v.range_min = v.data.min();
      v.range_max = v.data.max();
      return v;
    }
  }
  throw DataError("unknown volume format");
}

double percentile_sorted(const std::vector<float>& sorted, double p) {
  if (sorted.empty()) throw DataError("percentile of empty array");
  if (p <= 0) return sorted.front();
  if (p >= 100) return sorted.back();
  double rank = p / 100.0 * (static_cast<double>(sorted.size()) - 1.0);
  std::size_t lo = static_cast<std::size_t>(rank);
  double frac = rank - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

Volume normalize_minmax(const Volume& v, double clip_lo, double clip_hi) {
  if (clip_lo >= clip_hi) throw ConfigError("normalize_minmax: clip_lo must be below clip_hi");
  if (!v.data.all_finite()) throw DataError("normalize_minmax: NaN/Inf in input");

  double lo, hi;
  if (clip_lo <= 0.0 && clip_hi >= 100.0) {
    lo = v.data.min();
    hi = v.data.max();
  } else {
    std::vector<float> sorted(v.data.data.begin(), v.data.data.end());
    std::sort(sorted.begin(), sorted.end());
    lo = percentile_sorted(sorted, clip_lo);
    hi = percentile_sorted(sorted, clip_hi);
  }

  Volume out;
  out.spacing = v.spacing;
  out.range_min = static_cast<float>(lo);
  out.range_max = static_cast<float>(hi);
  out.data = nn::Tensor<float>(v.data.shape);
  if (hi <= lo) {
    warn("normalize_minmax: constant volume, returning zeros");
    return out;
  }
  double inv = 1.0 / (hi - lo);
  for (std::size_t i = 0; i < v.data.data.size(); ++i) {
    double x = (static_cast<double>(v.data.data[i]) - lo) * inv;
    out.data.data[i] = static_cast<float>(x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x));
  }
  return out;
}

Volume center_crop(const Volume& v, const std::vector<int>& target_shape, bool pad) {
  if (static_cast<int>(target_shape.size()) != v.data.ndim())
    throw ShapeError("center_crop: rank mismatch");
  for (int d : target_shape)
    if (d <= 0) throw ShapeError("center_crop: non-positive target dim");
  if (!pad) {
    for (std::size_t i = 0; i < target_shape.size(); ++i)
      if (target_shape[i] > v.data.dim(static_cast<int>(i)))
        throw ShapeError("center_crop: target " + std::to_string(target_shape[i]) +
                         " exceeds input " + std::to_string(v.data.dim(static_cast<int>(i))) +
                         " with padding disabled");
  }

  int nd = v.data.ndim();
  // source window start per axis; negative start means left padding
  std::vector<int> start(static_cast<std::size_t>(nd));
  for (int i = 0; i < nd; ++i)
    start[static_cast<std::size_t>(i)] = (v.data.dim(i) - target_shape[static_cast<std::size_t>(i)]) / 2;

  Volume out;
  out.spacing = v.spacing;
  out.range_min = v.range_min;
  out.range_max = v.range_max;
  out.data = nn::Tensor<float>(target_shape);

  auto src_index = [&](int axis, int t) { return start[static_cast<std::size_t>(axis)] + t; };
  if (nd == 1) {
    for (int x = 0; x < target_shape[0]; ++x) {
      int sx = src_index(0, x);
      out.data.data[static_cast<std::size_t>(x)] =
          (sx >= 0 && sx < v.data.dim(0)) ? v.data.data[static_cast<std::size_t>(sx)] : 0.f;
    }
  } else if (nd == 2) {
    int th = target_shape[0], tw = target_shape[1];
    for (int y = 0; y < th; ++y)
      for (int x = 0; x < tw; ++x) {
        int sy = src_index(0, y), sx = src_index(1, x);
        bool in = sy >= 0 && sy < v.data.dim(0) && sx >= 0 && sx < v.data.dim(1);
        out.data.data[static_cast<std::size_t>(y) * tw + x] =
            in ? v.data.data[static_cast<std::size_t>(sy) * v.data.dim(1) + sx] : 0.f;
      }
  } else if (nd == 3) {
    int td = target_shape[0], th = target_shape[1], tw = target_shape[2];
    for (int z = 0; z < td; ++z)
      for (int y = 0; y < th; ++y)
        for (int x = 0; x < tw; ++x) {
          int sz = src_index(0, z), sy = src_index(1, y), sx = src_index(2, x);
          bool in = sz >= 0 && sz < v.data.dim(0) && sy >= 0 && sy < v.data.dim(1) && sx >= 0 &&
                    sx < v.data.dim(2);
          out.data.data[(static_cast<std::size_t>(z) * th + y) * tw + x] =
              in ? v.data.data[(static_cast<std::size_t>(sz) * v.data.dim(1) + sy) * v.data.dim(2) +
                               sx]
                 : 0.f;
        }
  } else {
    throw ShapeError("center_crop supports up to 3D, got " + v.data.shape_str());
  }
  return out;
}

nn::Tensor<float> extract_25d_slab(const Volume& v, int axial_index) {
  if (!v.is3d()) throw ShapeError("extract_25d_slab expects a 3D volume");
  int d = v.depth(), h = v.height(), w = v.width();
  if (axial_index < 0 || axial_index >= d)
    throw ShapeError("extract_25d_slab: index " + std::to_string(axial_index) +
                     " out of range [0," + std::to_string(d) + ")");
  nn::Tensor<float> out({3, h, w});
  std::size_t plane = static_cast<std::size_t>(h) * w;
  int ks[3] = {std::max(axial_index - 1, 0), axial_index, std::min(axial_index + 1, d - 1)};
  for (int c = 0; c < 3; ++c)
    std::copy_n(v.data.ptr() + static_cast<std::size_t>(ks[c]) * plane, plane,
                out.ptr() + static_cast<std::size_t>(c) * plane);
  return out;
}

namespace {

// black-red-yellow-white ramp
void heat_rgb(float t, float& r, float& g, float& b) {
  r = std::min(1.f, 3.f * t);
  g = std::clamp(3.f * t - 1.f, 0.f, 1.f);
  b = std::clamp(3.f * t - 2.f, 0.f, 1.f);
}

}  // namespace

void save_overlay(const nn::Tensor<float>& base, const nn::Tensor<float>& map,
                  const std::string& path) {
  if (base.ndim() != 2 || !base.same_shape(map))
    throw ShapeError("save_overlay: base " + base.shape_str() + " vs map " + map.shape_str());
  float mx = map.max();
  int h = base.dim(0), w = base.dim(1);
  nn::Tensor<float> rgb({3, h, w});
  std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t i = 0; i < plane; ++i) {
    float g = std::clamp(base.data[i], 0.f, 1.f);
    float t = mx > 0.f ? map.data[i] / mx : 0.f;
    float cr, cg, cb;
    heat_rgb(t, cr, cg, cb);
    float a = 0.6f * t;
    rgb.data[i] = (1.f - a) * g + a * cr;
    rgb.data[plane + i] = (1.f - a) * g + a * cg;
    rgb.data[2 * plane + i] = (1.f - a) * g + a * cb;
  }
  save_png_rgb(rgb, path);
}

}  // namespace seq2seq::io

namespace seq2seq {

std::string sha256_file_hex(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot hash, missing file: " + path);
  Sha256 h;
  char buf[1 << 16];
  while (f) {
    f.read(buf, sizeof(buf));
    std::streamsize n = f.gcount();
    if (n > 0) h.update(buf, static_cast<std::size_t>(n));
  }
  return h.hex_digest();
}

}  // namespace seq2seq
