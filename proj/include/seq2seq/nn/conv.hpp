#pragma once

#include <Eigen/Core>

#include "seq2seq/nn/graph.hpp"

namespace seq2seq::nn {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapRM = Eigen::Map<const RowMat<T>>;

// (C,H,W) image -> (C*KH*KW, OH*OW) patch matrix, zero padding
template <typename T>
void im2col(const T* img, int c, int h, int w, int kh, int kw, int stride, int pad, int oh, int ow,
            T* col) {
  for (int ci = 0; ci < c; ++ci)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        T* dst = col + ((static_cast<std::size_t>(ci) * kh + ky) * kw + kx) *
                           (static_cast<std::size_t>(oh) * ow);
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) {
            for (int ox = 0; ox < ow; ++ox) dst[oy * ow + ox] = T(0);
            continue;
          }
          const T* src_row = img + (static_cast<std::size_t>(ci) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * stride - pad + kx;
            dst[oy * ow + ox] = (ix >= 0 && ix < w) ? src_row[ix] : T(0);
          }
        }
      }
}

// scatter-add the patch matrix back onto the image grid
template <typename T>
void col2im_accum(const T* col, int c, int h, int w, int kh, int kw, int stride, int pad, int oh,
                  int ow, T* img) {
  for (int ci = 0; ci < c; ++ci)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        const T* src = col + ((static_cast<std::size_t>(ci) * kh + ky) * kw + kx) *
                                 (static_cast<std::size_t>(oh) * ow);
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          T* dst_row = img + (static_cast<std::size_t>(ci) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst_row[ix] += src[oy * ow + ox];
          }
        }
      }
}

}  // namespace detail

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// x (N,IC,H,W), w (OC,IC,KH,KW) -> (N,OC,OH,OW). Bias is a separate op so the
// kernel can itself be a differentiable node (HyperConv).
template <typename T>
Val<T> conv2d(Val<T> x, Val<T> w, int stride = 1, int pad = -1) {
  Tape<T>& t = *x.tape;
  const Tensor<T>&xv = x.value(), &wv = w.value();
  if (xv.ndim() != 4 || wv.ndim() != 4) throw ShapeError("conv2d expects 4D input and weight");
  int n = xv.dim(0), ic = xv.dim(1), h = xv.dim(2), ww = xv.dim(3);
  int oc = wv.dim(0), wic = wv.dim(1), kh = wv.dim(2), kw = wv.dim(3);
  if (ic != wic)
    throw ShapeError("conv2d: input channels " + std::to_string(ic) + " != weight channels " +
                     std::to_string(wic));
  if (pad < 0) pad = kh / 2;  // same-size default for odd kernels at stride 1
  int oh = conv_out_dim(h, kh, stride, pad), ow = conv_out_dim(ww, kw, stride, pad);
  if (oh <= 0 || ow <= 0) throw ShapeError("conv2d: empty output");
  int k = ic * kh * kw;
  std::size_t patch = static_cast<std::size_t>(oh) * ow;

  Tensor<T> out({n, oc, oh, ow});
  std::vector<T> col(static_cast<std::size_t>(k) * patch);
  detail::CMapRM<T> wmat(wv.ptr(), oc, k);
  for (int ni = 0; ni < n; ++ni) {
    detail::im2col(xv.ptr() + static_cast<std::size_t>(ni) * ic * h * ww, ic, h, ww, kh, kw, stride,
                   pad, oh, ow, col.data());
    detail::CMapRM<T> cmat(col.data(), k, static_cast<Eigen::Index>(patch));
    detail::MapRM<T> ymat(out.ptr() + static_cast<std::size_t>(ni) * oc * patch, oc,
                          static_cast<Eigen::Index>(patch));
    ymat.noalias() = wmat * cmat;
  }

  int xid = x.id, wid = w.id;
  int id = t.add_node(std::move(out), detail::wants_grad<T>({x, w}), nullptr);
  if (t.node(id).needs_grad)
    t.node(id).backprop = [id, xid, wid, n, ic, h, ww, oc, kh, kw, stride, pad, oh, ow, k,
                           patch](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_of(id);
      const Tensor<T>&xv2 = tp.node(xid).value, &wv2 = tp.node(wid).value;
      bool need_x = tp.node(xid).needs_grad, need_w = tp.node(wid).needs_grad;
      std::vector<T> col(static_cast<std::size_t>(k) * patch);
      std::vector<T> dcol;
      if (need_x) dcol.resize(static_cast<std::size_t>(k) * patch);
      detail::CMapRM<T> wmat(wv2.ptr(), oc, k);
      for (int ni = 0; ni < n; ++ni) {
        detail::CMapRM<T> gmat(g.ptr() + static_cast<std::size_t>(ni) * oc * patch, oc,
                               static_cast<Eigen::Index>(patch));
        if (need_w) {
          detail::im2col(xv2.ptr() + static_cast<std::size_t>(ni) * ic * h * ww, ic, h, ww, kh, kw,
                         stride, pad, oh, ow, col.data());
          detail::CMapRM<T> cmat(col.data(), k, static_cast<Eigen::Index>(patch));
          detail::MapRM<T> gw(tp.grad_of(wid).ptr(), oc, k);
          gw.noalias() += gmat * cmat.transpose();
        }
        if (need_x) {
          detail::MapRM<T> dcmat(dcol.data(), k, static_cast<Eigen::Index>(patch));
          dcmat.noalias() = wmat.transpose() * gmat;
          detail::col2im_accum(dcol.data(), ic, h, ww, kh, kw, stride, pad, oh, ow,
                               tp.grad_of(xid).ptr() + static_cast<std::size_t>(ni) * ic * h * ww);
        }
      }
    };
  return {&t, id};
}

// x (N,C,H,W) + b (C), broadcast over N,H,W
template <typename T>
Val<T> add_channel_bias(Val<T> x, Val<T> b) {
  Tape<T>& t = *x.tape;
  const Tensor<T>&xv = x.value(), &bv = b.value();
  if (xv.ndim() != 4 || bv.numel() != xv.dim(1)) throw ShapeError("add_channel_bias: shape mismatch");
  int n = xv.dim(0), c = xv.dim(1);
  std::size_t m = static_cast<std::size_t>(xv.dim(2)) * xv.dim(3);
  Tensor<T> out = xv;
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci) {
      T* dst = out.ptr() + (static_cast<std::size_t>(ni) * c + ci) * m;
      T bias = bv.data[ci];
      for (std::size_t i = 0; i < m; ++i) dst[i] += bias;
    }
  int xid = x.id, bid = b.id;
  int id = t.add_node(std::move(out), detail::wants_grad<T>({x, b}), nullptr);
  if (t.node(id).needs_grad)
    t.node(id).backprop = [id, xid, bid, n, c, m](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_of(id);
      if (tp.node(xid).needs_grad) detail::accum(tp, xid, g);
      if (tp.node(bid).needs_grad) {
        Tensor<T>& gb = tp.grad_of(bid);
        for (int ni = 0; ni < n; ++ni)
          for (int ci = 0; ci < c; ++ci) {
            const T* src = g.ptr() + (static_cast<std::size_t>(ni) * c + ci) * m;
            double acc = 0;
            for (std::size_t i = 0; i < m; ++i) acc += src[i];
            gb.data[ci] += static_cast<T>(acc);
          }
      }
    };
  return {&t, id};
}

}  // namespace seq2seq::nn
