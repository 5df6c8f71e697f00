#pragma once

#include <memory>
#include <string>
#include <vector>

#include "seq2seq/config.hpp"
#include "seq2seq/nn/layers.hpp"

namespace seq2seq::model {

// Which fixed feature network backs the perceptual loss and deep-feature
// metric. "random": deterministic seeded filters (self-contained, the
// default). "file": weights loaded from disk in this project's weight format.
struct FeatureConfig {
  std::string backend = "random";
  std::uint64_t seed = 1234;
  std::string path;

  void validate() const {
    if (backend != "random" && backend != "file")
      throw ConfigError("feature backend must be 'random' or 'file', got '" + backend + "'");
  }
  Json to_json() const;
  static FeatureConfig from_json(const Json& j);
};

// Fixed (non-trainable) conv stack; activations are tapped after the 2nd,
// 4th, and 8th conv layers. Gradients flow through to the inputs only.
template <typename T>
class FeatureNet {
 public:
  FeatureNet(const FeatureConfig& cfg, Rng& rng) : cfg_(cfg) {
    struct L {
      int oc, ic, stride;
    };
    // 3->16,16 | /2 ->32,32 | /2 ->64,64,64,64
    const L plan[8] = {{16, 3, 1},  {16, 16, 1}, {32, 16, 2}, {32, 32, 1},
                       {64, 32, 2}, {64, 64, 1}, {64, 64, 1}, {64, 64, 1}};
    for (int i = 0; i < 8; ++i) {
      convs_.emplace_back("feat" + std::to_string(i), rng, plan[i].oc, plan[i].ic, 3,
                          plan[i].stride, true);
      convs_.back().w.trainable = false;
      convs_.back().b.trainable = false;
    }
  }

  // x: (N,1,H,W) or (N,3,H,W); single channel is replicated
  std::vector<nn::Val<T>> forward(nn::Tape<T>& t, nn::Val<T> x) const {
    const nn::Tensor<T>& xv = x.value();
    if (xv.ndim() != 4 || (xv.dim(1) != 1 && xv.dim(1) != 3))
      throw ShapeError("feature net expects 1 or 3 channels, got " + xv.shape_str());
    nn::Val<T> h = x;
    if (xv.dim(1) == 1) h = concat_channels(concat_channels(x, x), x);
    std::vector<nn::Val<T>> taps;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      h = relu(const_cast<nn::Conv2dLayer<T>&>(convs_[i]).forward(t, h));
      if (i == 1 || i == 3 || i == 7) taps.push_back(h);
    }
    return taps;
  }

  std::vector<nn::Param<T>*> weights() {
    std::vector<nn::Param<T>*> out;
    for (auto& c : convs_) c.collect(out);
    return out;
  }

  const FeatureConfig& config() const { return cfg_; }

 private:
  FeatureConfig cfg_;
  std::vector<nn::Conv2dLayer<T>> convs_;
};

// Build per config; the "file" backend loads weights or explains how to get
// them.
template <typename T>
std::shared_ptr<FeatureNet<T>> make_feature_net(const FeatureConfig& cfg);

extern template std::shared_ptr<FeatureNet<float>> make_feature_net<float>(const FeatureConfig&);
extern template std::shared_ptr<FeatureNet<double>> make_feature_net<double>(const FeatureConfig&);

}  // namespace seq2seq::model
