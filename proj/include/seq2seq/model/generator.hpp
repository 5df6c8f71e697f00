#pragma once

#include <string>
#include <vector>

#include "seq2seq/config.hpp"
#include "seq2seq/nn/layers.hpp"

namespace seq2seq::model {

using nn::Param;
using nn::ParamList;
using nn::Tape;
using nn::Tensor;
using nn::Val;

// One-hot selector for a target sequence.
struct SequenceCode {
  int index = 0;
  int S = 1;

  SequenceCode() = default;
  SequenceCode(int idx, int count) : index(idx), S(count) {
    if (count < 1 || idx < 0 || idx >= count)
      throw ConfigError("sequence code " + std::to_string(idx) + " out of range for S=" +
                        std::to_string(count));
  }

  template <typename T>
  Tensor<T> onehot() const {
    Tensor<T> t = Tensor<T>::zeros({S});
    t.data[static_cast<std::size_t>(index)] = T(1);
    return t;
  }
};

struct GeneratorConfig {
  int S = 2;
  int in_channels = 1;
  int base_channels = 32;
  int downsample_factor = 4;  // fixed by the architecture
  int n_residual_blocks = 6;
  int n_hyper_residual_blocks = 6;
  int n_hyperconv_tail = 3;  // fixed by the architecture
  int convlstm_hidden_channels = -1;  // -1: same as feature channels
  int c_w = 64;

  int feature_channels() const { return 2 * base_channels; }
  int lstm_hidden() const {
    return convlstm_hidden_channels > 0 ? convlstm_hidden_channels : feature_channels();
  }

  void validate() const {
    if (S < 1) throw ConfigError("generator: S must be >= 1");
    if (in_channels < 1) throw ConfigError("generator: in_channels must be >= 1");
    if (base_channels < 1) throw ConfigError("generator: base_channels must be >= 1");
    if (downsample_factor != 4)
      throw ConfigError("generator: downsample factor is fixed at 4 by the two stride-2 layers");
    if (n_residual_blocks < 0 || n_hyper_residual_blocks < 0)
      throw ConfigError("generator: negative block count");
    if (n_hyperconv_tail != 3)
      throw ConfigError("generator: decoder tail is fixed at 3 hyper layers");
    if (c_w < 1) throw ConfigError("generator: c_w must be >= 1");
    if (convlstm_hidden_channels != -1 && convlstm_hidden_channels != feature_channels())
      throw ConfigError("generator: convlstm hidden channels must match feature channels");
  }

  Json to_json() const;
  static GeneratorConfig from_json(const Json& j);
};

// Encoder -> ConvLSTM fuse/expand -> code-conditioned decoder. One model
// serves every source/target pair; the target enters only through the code.
template <typename T>
struct Generator {
  GeneratorConfig cfg;

  nn::Conv2dLayer<T> enc1, enc2;
  nn::InstanceNormLayer<T> enc_n1, enc_n2;
  std::vector<nn::ResBlock<T>> res;
  nn::ConvLSTM<T> lstm;
  std::vector<nn::HyperResBlock<T>> hres;
  nn::HyperConv<T> dec1, dec2, dec3;
  nn::InstanceNormLayer<T> dec_n1, dec_n2;

  Generator(const GeneratorConfig& config, Rng& rng) : cfg(config) {
    cfg.validate();
    int c = cfg.base_channels, fc = cfg.feature_channels();
    enc1 = nn::Conv2dLayer<T>("enc1", rng, c, cfg.in_channels, 7, 2, false);
    enc_n1 = nn::InstanceNormLayer<T>("enc1.n", c);
    enc2 = nn::Conv2dLayer<T>("enc2", rng, fc, c, 3, 2, false);
    enc_n2 = nn::InstanceNormLayer<T>("enc2.n", fc);
    for (int i = 0; i < cfg.n_residual_blocks; ++i)
      res.emplace_back("res" + std::to_string(i), rng, fc);
    lstm = nn::ConvLSTM<T>("lstm", rng, fc, cfg.lstm_hidden());
    for (int i = 0; i < cfg.n_hyper_residual_blocks; ++i)
      hres.emplace_back("hres" + std::to_string(i), rng, fc, cfg.S, cfg.c_w);
    dec1 = nn::HyperConv<T>("dec1", rng, nn::HyperConvSpec{fc, fc, 3, 3, cfg.S, cfg.c_w, false});
    dec_n1 = nn::InstanceNormLayer<T>("dec1.n", fc);
    dec2 = nn::HyperConv<T>("dec2", rng, nn::HyperConvSpec{c, fc, 3, 3, cfg.S, cfg.c_w, false});
    dec_n2 = nn::InstanceNormLayer<T>("dec2.n", c);
    dec3 = nn::HyperConv<T>("dec3", rng,
                            nn::HyperConvSpec{cfg.in_channels, c, 7, 7, cfg.S, cfg.c_w, true});
  }

  // (N, in_channels, H, W) -> (N, feature_channels, H/4, W/4)
  Val<T> encode(Tape<T>& t, Val<T> x) {
    const Tensor<T>& xv = x.value();
    if (xv.ndim() != 4 || xv.dim(1) != cfg.in_channels)
      throw ShapeError("encode expects (N," + std::to_string(cfg.in_channels) + ",H,W), got " +
                       xv.shape_str());
    if (xv.dim(2) % 4 != 0 || xv.dim(3) % 4 != 0)
      throw ShapeError("encode: spatial dims must be divisible by 4, got " + xv.shape_str());
    Val<T> h = relu(enc_n1.forward(t, enc1.forward(t, x)));
    h = relu(enc_n2.forward(t, enc2.forward(t, h)));
    for (auto& block : res) h = block.forward(t, h);
    return h;
  }

  // frames -> ConvLSTM -> per-frame hidden states averaged into one map
  Val<T> fuse_4d(Tape<T>& t, const std::vector<Val<T>>& frames) {
    if (frames.empty()) throw ShapeError("fuse_4d: no frames");
    std::vector<Val<T>> hs = lstm.run(t, frames);
    return nn::average(hs);
  }

  // copy t_out times, ConvLSTM disentangles per-frame features
  std::vector<Val<T>> expand_4d(Tape<T>& t, Val<T> fused, int t_out) {
    if (t_out < 1) throw ConfigError("expand_4d: frame count must be >= 1");
    std::vector<Val<T>> copies(static_cast<std::size_t>(t_out), fused);
    return lstm.run(t, copies);
  }

  // (N, feature_channels, h, w) -> (N, in_channels, 4h, 4w), in [0,1]
  Val<T> decode(Tape<T>& t, Val<T> features, const SequenceCode& code) {
    if (code.S != cfg.S)
      throw ConfigError("decode: code for S=" + std::to_string(code.S) + " but model has S=" +
                        std::to_string(cfg.S));
    const Tensor<T>& fv = features.value();
    if (fv.ndim() != 4 || fv.dim(1) != cfg.feature_channels())
      throw ShapeError("decode expects (N," + std::to_string(cfg.feature_channels()) +
                       ",h,w), got " + fv.shape_str());
    Val<T> s = t.constant(code.template onehot<T>());
    Val<T> h = features;
    for (auto& block : hres) h = block.forward(t, h, s);
    h = relu(dec_n1.forward(t, dec1.forward(t, h, s)));
    h = upsample2x(h);
    h = relu(dec_n2.forward(t, dec2.forward(t, h, s)));
    h = upsample2x(h);
    return sigmoid(dec3.forward(t, h, s));
  }

  // full path: per-frame encode (shared weights), fuse, expand, per-frame decode
  std::vector<Val<T>> translate(Tape<T>& t, const std::vector<Val<T>>& source_frames,
                                const SequenceCode& target, int t_out) {
    std::vector<Val<T>> encoded;
    encoded.reserve(source_frames.size());
    for (const Val<T>& f : source_frames) encoded.push_back(encode(t, f));
    Val<T> fused = fuse_4d(t, encoded);
    std::vector<Val<T>> expanded = expand_4d(t, fused, t_out);
    std::vector<Val<T>> out;
    out.reserve(expanded.size());
    for (const Val<T>& f : expanded) out.push_back(decode(t, f, target));
    return out;
  }

  void collect(ParamList<T>& out) {
    enc1.collect(out);
    enc_n1.collect(out);
    enc2.collect(out);
    enc_n2.collect(out);
    for (auto& b : res) b.collect(out);
    lstm.collect(out);
    for (auto& b : hres) b.collect(out);
    dec1.collect(out);
    dec_n1.collect(out);
    dec2.collect(out);
    dec_n2.collect(out);
    dec3.collect(out);
  }

  ParamList<T> params() {
    ParamList<T> out;
    collect(out);
    return out;
  }

  long long param_count() {
    ParamList<T> p = params();
    return nn::param_count(p);
  }
};

}  // namespace seq2seq::model
