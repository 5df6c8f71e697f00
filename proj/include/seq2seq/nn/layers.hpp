#pragma once

#include <string>
#include <vector>

#include "seq2seq/nn/conv.hpp"
#include "seq2seq/nn/graph.hpp"
#include "seq2seq/rng.hpp"

namespace seq2seq::nn {

template <typename T>
using ParamList = std::vector<Param<T>*>;

template <typename T>
Tensor<T> kaiming_normal(Rng& rng, std::vector<int> shape, int fan_in, double gain_sq = 2.0) {
  Tensor<T> t(std::move(shape));
  double std_dev = std::sqrt(gain_sq / static_cast<double>(fan_in));
  for (T& v : t.data) v = static_cast<T>(rng.normal() * std_dev);
  return t;
}

template <typename T>
struct Conv2dLayer {
  Param<T> w, b;
  int stride = 1, pad = -1;
  bool has_bias = true;

  Conv2dLayer() = default;
  Conv2dLayer(const std::string& name, Rng& rng, int oc, int ic, int k, int stride_ = 1,
              bool bias = true, int pad_ = -1)
      : stride(stride_), pad(pad_), has_bias(bias) {
    w = Param<T>(name + ".w", kaiming_normal<T>(rng, {oc, ic, k, k}, ic * k * k));
    if (bias) b = Param<T>(name + ".b", Tensor<T>::zeros({oc}));
  }

  Val<T> forward(Tape<T>& t, Val<T> x) {
    Val<T> y = conv2d(x, t.leaf(w), stride, pad);
    if (has_bias) y = add_channel_bias(y, t.leaf(b));
    return y;
  }

  void collect(ParamList<T>& out) {
    out.push_back(&w);
    if (has_bias) out.push_back(&b);
  }
};

template <typename T>
struct LinearLayer {
  Param<T> w, b;

  LinearLayer() = default;
  LinearLayer(const std::string& name, Rng& rng, int out_dim, int in_dim) {
    w = Param<T>(name + ".w", kaiming_normal<T>(rng, {out_dim, in_dim}, in_dim, 1.0));
    b = Param<T>(name + ".b", Tensor<T>::zeros({out_dim}));
  }

  Val<T> forward(Tape<T>& t, Val<T> x) { return linear(x, t.leaf(w), t.leaf(b)); }

  void collect(ParamList<T>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

template <typename T>
struct InstanceNormLayer {
  Param<T> gamma, beta;

  InstanceNormLayer() = default;
  InstanceNormLayer(const std::string& name, int channels) {
    gamma = Param<T>(name + ".g", Tensor<T>::full({channels}, T(1)));
    beta = Param<T>(name + ".b", Tensor<T>::zeros({channels}));
  }

  Val<T> forward(Tape<T>& t, Val<T> x) {
    return instance_norm(x, t.leaf(gamma), t.leaf(beta));
  }

  void collect(ParamList<T>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

// Kernel-shape descriptor for a code-conditioned convolution.
struct HyperConvSpec {
  int oc = 1, ic = 1, kh = 3, kw = 3;
  int code_dim = 1;   // c_s
  int bank_dim = 1;   // c_w
  bool bias = false;

  long long bank_params() const {
    return static_cast<long long>(oc) * ic * kh * kw * bank_dim;
  }
  long long mlp_params() const { return static_cast<long long>(code_dim + 1) * bank_dim; }
  long long total_params() const {
    return bank_params() + mlp_params() + (bias ? oc : 0);
  }
};

// Convolution whose kernel is a learned weight bank contracted with an affine
// embedding of the target-sequence code. The kernel is linear in the
// embedding, so switching codes switches kernels inside one parameter set.
template <typename T>
struct HyperConv {
  HyperConvSpec spec;
  Param<T> bank;    // (oc*ic*kh*kw, c_w)
  Param<T> mlp_w;   // (c_w, c_s)
  Param<T> mlp_b;   // (c_w)
  Param<T> bias;    // (oc), optional and code-independent
  int stride = 1, pad = -1;

  HyperConv() = default;
  HyperConv(const std::string& name, Rng& rng, HyperConvSpec s, int stride_ = 1, int pad_ = -1)
      : spec(s), stride(stride_), pad(pad_) {
    int kcount = s.oc * s.ic * s.kh * s.kw;
    // bank entries sized like a plain conv kernel; the embedding has unit
    // variance per component so the contracted kernel keeps that scale
    bank = Param<T>(name + ".bank",
                    kaiming_normal<T>(rng, {kcount, s.bank_dim}, s.ic * s.kh * s.kw));
    Tensor<T> mw({s.bank_dim, s.code_dim});
    double std_dev = 1.0 / std::sqrt(static_cast<double>(s.bank_dim));
    for (T& v : mw.data) v = static_cast<T>(rng.normal() * std_dev);
    mlp_w = Param<T>(name + ".mlp_w", std::move(mw));
    mlp_b = Param<T>(name + ".mlp_b", Tensor<T>::zeros({s.bank_dim}));
    if (s.bias) bias = Param<T>(name + ".bias", Tensor<T>::zeros({s.oc}));
  }

  // code: (c_s) one-hot (or any real vector; the map is affine)
  Val<T> kernel(Tape<T>& t, Val<T> code) {
    Val<T> f = add(matvec(t.leaf(mlp_w), code), t.leaf(mlp_b));
    Val<T> flat = matvec(t.leaf(bank), f);
    return reshape(flat, {spec.oc, spec.ic, spec.kh, spec.kw});
  }

  Val<T> forward(Tape<T>& t, Val<T> x, Val<T> code) {
    Val<T> y = conv2d(x, kernel(t, code), stride, pad);
    if (spec.bias) y = add_channel_bias(y, t.leaf(bias));
    return y;
  }

  void collect(ParamList<T>& out) {
    out.push_back(&bank);
    out.push_back(&mlp_w);
    out.push_back(&mlp_b);
    if (spec.bias) out.push_back(&bias);
  }
};

// conv-norm-relu-conv-norm + skip
template <typename T>
struct ResBlock {
  Conv2dLayer<T> conv1, conv2;
  InstanceNormLayer<T> norm1, norm2;

  ResBlock() = default;
  ResBlock(const std::string& name, Rng& rng, int channels)
      : conv1(name + ".c1", rng, channels, channels, 3, 1, false),
        conv2(name + ".c2", rng, channels, channels, 3, 1, false),
        norm1(name + ".n1", channels),
        norm2(name + ".n2", channels) {}

  Val<T> forward(Tape<T>& t, Val<T> x) {
    Val<T> y = relu(norm1.forward(t, conv1.forward(t, x)));
    y = norm2.forward(t, conv2.forward(t, y));
    return add(x, y);
  }

  void collect(ParamList<T>& out) {
    conv1.collect(out);
    conv2.collect(out);
    norm1.collect(out);
    norm2.collect(out);
  }
};

// residual block with both convolutions code-conditioned
template <typename T>
struct HyperResBlock {
  HyperConv<T> conv1, conv2;
  InstanceNormLayer<T> norm1, norm2;

  HyperResBlock() = default;
  HyperResBlock(const std::string& name, Rng& rng, int channels, int code_dim, int bank_dim)
      : conv1(name + ".c1", rng,
              HyperConvSpec{channels, channels, 3, 3, code_dim, bank_dim, false}),
        conv2(name + ".c2", rng,
              HyperConvSpec{channels, channels, 3, 3, code_dim, bank_dim, false}),
        norm1(name + ".n1", channels),
        norm2(name + ".n2", channels) {}

  Val<T> forward(Tape<T>& t, Val<T> x, Val<T> code) {
    Val<T> y = relu(norm1.forward(t, conv1.forward(t, x, code)));
    y = norm2.forward(t, conv2.forward(t, y, code));
    return add(x, y);
  }

  void collect(ParamList<T>& out) {
    conv1.collect(out);
    conv2.collect(out);
    norm1.collect(out);
    norm2.collect(out);
  }
};

// Single-layer ConvLSTM, 3x3 gates, zero initial state. Gate channel order
// is i, f, o, g.
template <typename T>
struct ConvLSTM {
  Param<T> w;  // (4*hidden, in+hidden, 3, 3)
  Param<T> b;  // (4*hidden)
  int hidden = 0;

  ConvLSTM() = default;
  ConvLSTM(const std::string& name, Rng& rng, int in_channels, int hidden_channels)
      : hidden(hidden_channels) {
    w = Param<T>(name + ".w", kaiming_normal<T>(rng,
                                                {4 * hidden_channels, in_channels + hidden_channels,
                                                 3, 3},
                                                (in_channels + hidden_channels) * 9, 1.0));
    Tensor<T> bias = Tensor<T>::zeros({4 * hidden_channels});
    // forget gate opens at init
    for (int i = hidden_channels; i < 2 * hidden_channels; ++i) bias.data[i] = T(1);
    b = Param<T>(name + ".b", std::move(bias));
  }

  struct State {
    Val<T> h, c;
  };

  State zero_state(Tape<T>& t, int n, int sh, int sw) {
    Val<T> z = t.constant(Tensor<T>::zeros({n, hidden, sh, sw}));
    return {z, z};
  }

  State step(Tape<T>& t, Val<T> x, State s) {
    Val<T> gates = add_channel_bias(conv2d(concat_channels(x, s.h), t.leaf(w), 1, 1), t.leaf(b));
    Val<T> i = sigmoid(slice_channels(gates, 0, hidden));
    Val<T> f = sigmoid(slice_channels(gates, hidden, 2 * hidden));
    Val<T> o = sigmoid(slice_channels(gates, 2 * hidden, 3 * hidden));
    Val<T> g = tanh_op(slice_channels(gates, 3 * hidden, 4 * hidden));
    Val<T> c_next = add(mul(f, s.c), mul(i, g));
    Val<T> h_next = mul(o, tanh_op(c_next));
    return {h_next, c_next};
  }

  // hidden-state outputs for every step of the input sequence
  std::vector<Val<T>> run(Tape<T>& t, const std::vector<Val<T>>& xs) {
    if (xs.empty()) throw ShapeError("ConvLSTM.run: empty sequence");
    const Tensor<T>& x0 = xs[0].value();
    State s = zero_state(t, x0.dim(0), x0.dim(2), x0.dim(3));
    std::vector<Val<T>> hs;
    hs.reserve(xs.size());
    for (const Val<T>& x : xs) {
      s = step(t, x, s);
      hs.push_back(s.h);
    }
    return hs;
  }

  void collect(ParamList<T>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

// ---- optimizer ----

template <typename T>
struct AdamConfig {
  T lr = static_cast<T>(2e-4);
  T beta1 = static_cast<T>(0.9);
  T beta2 = static_cast<T>(0.999);
  T eps = static_cast<T>(1e-8);
};

template <typename T>
class Adam {
 public:
  Adam(ParamList<T> params, AdamConfig<T> cfg) : params_(std::move(params)), cfg_(cfg) {}

  void zero_grad() {
    for (Param<T>* p : params_) p->zero_grad();
  }

  void step() {
    ++t_;
    T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(cfg_.beta1), t_));
    T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(cfg_.beta2), t_));
    for (Param<T>* p : params_) {
      if (p->grad.empty()) continue;
      if (p->adam_m.empty()) {
        p->adam_m = Tensor<T>::zeros(p->value.shape);
        p->adam_v = Tensor<T>::zeros(p->value.shape);
      }
      for (std::size_t i = 0; i < p->value.data.size(); ++i) {
        T g = p->grad.data[i];
        p->adam_m.data[i] = cfg_.beta1 * p->adam_m.data[i] + (T(1) - cfg_.beta1) * g;
        p->adam_v.data[i] = cfg_.beta2 * p->adam_v.data[i] + (T(1) - cfg_.beta2) * g * g;
        T mhat = p->adam_m.data[i] / bc1;
        T vhat = p->adam_v.data[i] / bc2;
        p->value.data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  long long iterations() const { return t_; }
  void set_iterations(long long t) { t_ = t; }
  AdamConfig<T>& config() { return cfg_; }

 private:
  ParamList<T> params_;
  AdamConfig<T> cfg_;
  long long t_ = 0;
};

template <typename T>
long long param_count(const ParamList<T>& params) {
  long long n = 0;
  for (const Param<T>* p : params) n += p->value.numel();
  return n;
}

}  // namespace seq2seq::nn
