#include "seq2seq/analysis/metrics.hpp"

#include <cmath>

#include "seq2seq/common.hpp"

namespace seq2seq::analysis {

double psnr(const nn::Tensor<float>& a, const nn::Tensor<float>& b, double data_range) {
  if (!a.same_shape(b)) throw ShapeError("psnr: shape mismatch");
  if (a.numel() == 0) throw ShapeError("psnr: empty input");
  double mse = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    double d = static_cast<double>(a.data[i]) - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.numel());
  if (mse <= 0) return kPsnrCap;
  double val = 10.0 * std::log10(data_range * data_range / mse);
  return std::min(val, kPsnrCap);
}

namespace {

// one 2D plane against another, valid windows only
double ssim_plane(const float* a, const float* b, int h, int w, double data_range) {
  int win = std::min({11, h, w});
  if (win % 2 == 0) --win;
  if (win < 11)
    warn("ssim: image " + std::to_string(h) + "x" + std::to_string(w) +
         " smaller than the 11x11 window, using " + std::to_string(win) + "x" +
         std::to_string(win));
  const double sigma = 1.5;
  std::vector<double> g(static_cast<std::size_t>(win) * win);
  double gsum = 0;
  int half = win / 2;
  for (int y = 0; y < win; ++y)
    for (int x = 0; x < win; ++x) {
      double dy = y - half, dx = x - half;
      double val = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
      g[static_cast<std::size_t>(y) * win + x] = val;
      gsum += val;
    }
  for (double& val : g) val /= gsum;

  const double c1 = (0.01 * data_range) * (0.01 * data_range);
  const double c2 = (0.03 * data_range) * (0.03 * data_range);
  double total = 0;
  long long count = 0;
  for (int oy = 0; oy + win <= h; ++oy)
    for (int ox = 0; ox + win <= w; ++ox) {
      double ma = 0, mb = 0;
      for (int y = 0; y < win; ++y)
        for (int x = 0; x < win; ++x) {
          double wgt = g[static_cast<std::size_t>(y) * win + x];
          ma += wgt * a[(oy + y) * w + ox + x];
          mb += wgt * b[(oy + y) * w + ox + x];
        }
      double va = 0, vb = 0, cov = 0;
      for (int y = 0; y < win; ++y)
        for (int x = 0; x < win; ++x) {
          double wgt = g[static_cast<std::size_t>(y) * win + x];
          double da = a[(oy + y) * w + ox + x] - ma;
          double db = b[(oy + y) * w + ox + x] - mb;
          va += wgt * da * da;
          vb += wgt * db * db;
          cov += wgt * da * db;
        }
      double num = (2 * ma * mb + c1) * (2 * cov + c2);
      double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
      total += num / den;
      ++count;
    }
  return total / static_cast<double>(count);
}

}  // namespace

double ssim(const nn::Tensor<float>& a, const nn::Tensor<float>& b, double data_range) {
  if (!a.same_shape(b)) throw ShapeError("ssim: shape mismatch");
  if (a.ndim() < 2) throw ShapeError("ssim: needs at least 2 dims, got " + a.shape_str());
  int h = a.dim(a.ndim() - 2), w = a.dim(a.ndim() - 1);
  long long planes = a.numel() / (static_cast<long long>(h) * w);
  double total = 0;
  for (long long p = 0; p < planes; ++p) {
    std::size_t off = static_cast<std::size_t>(p) * h * w;
    total += ssim_plane(a.data.data() + off, b.data.data() + off, h, w, data_range);
  }
  return total / static_cast<double>(planes);
}

namespace {

nn::Tensor<float> as_nchw(const nn::Tensor<float>& x) {
  if (x.ndim() == 2) return x.reshaped({1, 1, x.dim(0), x.dim(1)});
  if (x.ndim() == 3) return x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)});
  if (x.ndim() == 4) return x;
  throw ShapeError("lpips_like: expects 2D..4D input, got " + x.shape_str());
}

}  // namespace

double lpips_like(const model::FeatureNet<float>& net, const nn::Tensor<float>& a,
                  const nn::Tensor<float>& b) {
  if (!a.same_shape(b)) throw ShapeError("lpips_like: shape mismatch");
  nn::Tape<float> t(false);
  auto fa = net.forward(t, t.constant(as_nchw(a)));
  auto fb = net.forward(t, t.constant(as_nchw(b)));

  double total = 0;
  for (std::size_t tap = 0; tap < fa.size(); ++tap) {
    const nn::Tensor<float>& xa = fa[tap].value();
    const nn::Tensor<float>& xb = fb[tap].value();
    int c = xa.dim(1), hw = xa.dim(2) * xa.dim(3);
    double tap_sum = 0;
    for (int p = 0; p < hw; ++p) {
      double na = 0, nb = 0;
      for (int ch = 0; ch < c; ++ch) {
        double va = xa.data[static_cast<std::size_t>(ch) * hw + p];
        double vb = xb.data[static_cast<std::size_t>(ch) * hw + p];
        na += va * va;
        nb += vb * vb;
      }
      na = std::sqrt(na) + 1e-10;
      nb = std::sqrt(nb) + 1e-10;
      for (int ch = 0; ch < c; ++ch) {
        double va = xa.data[static_cast<std::size_t>(ch) * hw + p] / na;
        double vb = xb.data[static_cast<std::size_t>(ch) * hw + p] / nb;
        tap_sum += (va - vb) * (va - vb);
      }
    }
    total += tap_sum / static_cast<double>(hw);
  }
  return total / static_cast<double>(fa.size());
}

MetricMatrix normalize_metric(const MetricMatrix& m, bool include_diagonal) {
  if (m.S < 1) throw ConfigError("normalize_metric: empty matrix");
  std::vector<std::size_t> support;
  for (int i = 0; i < m.S; ++i)
    for (int j = 0; j < m.S; ++j) {
      if (!include_diagonal && i == j) continue;
      if (m.is_known(i, j)) support.push_back(static_cast<std::size_t>(i) * m.S + j);
    }
  if (support.size() < 2)
    throw DataError("normalize_metric: needs at least 2 evaluated entries, have " +
                    std::to_string(support.size()));

  double mean = 0;
  for (std::size_t k : support) mean += m.v[k];
  mean /= static_cast<double>(support.size());
  double var = 0;
  for (std::size_t k : support) var += (m.v[k] - mean) * (m.v[k] - mean);
  var /= static_cast<double>(support.size());
  double sd = std::sqrt(var);

  MetricMatrix out(m.S);
  if (sd == 0) {
    warn("normalize_metric: constant matrix, normalized entries set to zero");
    for (std::size_t k : support) {
      out.v[k] = 0;
      out.known[k] = 1;
    }
    return out;
  }
  for (std::size_t k : support) {
    out.v[k] = (m.v[k] - mean) / sd;
    out.known[k] = 1;
  }
  return out;
}

}  // namespace seq2seq::analysis
