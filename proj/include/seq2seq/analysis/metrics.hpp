#pragma once

#include <string>
#include <vector>

#include "seq2seq/model/features.hpp"
#include "seq2seq/nn/tensor.hpp"

namespace seq2seq::analysis {

inline constexpr double kPsnrCap = 100.0;  // reported for zero-MSE pairs

// 10*log10(range^2 / MSE) over all elements, capped for identical inputs
double psnr(const nn::Tensor<float>& a, const nn::Tensor<float>& b, double data_range = 1.0);

// Gaussian-window SSIM (11x11, sigma 1.5, k1 0.01, k2 0.03) averaged over
// valid window positions. Tensors with leading dims are scored per 2D plane
// and averaged. Images smaller than the window fall back to the largest odd
// window that fits, with a warning.
double ssim(const nn::Tensor<float>& a, const nn::Tensor<float>& b, double data_range = 1.0);

// Perceptual distance: squared L2 between channel-unit-normalized feature
// maps, averaged over space and tap layers. Zero for identical inputs,
// symmetric.
double lpips_like(const model::FeatureNet<float>& net, const nn::Tensor<float>& a,
                  const nn::Tensor<float>& b);

// S x S metric matrix with a support mask for pairs that were never
// co-available.
struct MetricMatrix {
  int S = 0;
  std::vector<double> v;
  std::vector<char> known;

  MetricMatrix() = default;
  explicit MetricMatrix(int s)
      : S(s),
        v(static_cast<std::size_t>(s) * s, 0.0),
        known(static_cast<std::size_t>(s) * s, 0) {}

  double& at(int i, int j) { return v[static_cast<std::size_t>(i) * S + j]; }
  double at(int i, int j) const { return v[static_cast<std::size_t>(i) * S + j]; }
  bool is_known(int i, int j) const { return known[static_cast<std::size_t>(i) * S + j] != 0; }
  void set(int i, int j, double val) {
    at(i, j) = val;
    known[static_cast<std::size_t>(i) * S + j] = 1;
  }
};

// z-score over the evaluated support; the diagonal is part of the support
// only when include_diagonal is set. Degenerate (constant) input maps to all
// zeros with a warning.
MetricMatrix normalize_metric(const MetricMatrix& m, bool include_diagonal = false);

}  // namespace seq2seq::analysis
