#pragma once

#include <utility>
#include <vector>

#include "seq2seq/model/features.hpp"
#include "seq2seq/nn/layers.hpp"

namespace seq2seq::model {

struct LossWeights {
  double lambda_r = 10.0;
  double lambda_p = 0.01;
  double lambda_adv = 1.0;
  double lambda_cyc = 10.0;
  bool use_adversarial = false;  // paired toy data trains on Eq.-style recon alone
  bool use_cycle = false;

  void validate() const {
    if (lambda_r < 0 || lambda_p < 0 || lambda_adv < 0 || lambda_cyc < 0)
      throw ConfigError("loss weights must be non-negative");
  }
  Json to_json() const;
  static LossWeights from_json(const Json& j);
};

// 70x70-receptive-field patch discriminator: four stride-2-ish conv layers
// then a 1-channel score map.
template <typename T>
struct PatchDiscriminator {
  nn::Conv2dLayer<T> c1, c2, c3, c4, c5;
  nn::InstanceNormLayer<T> n2, n3, n4;

  PatchDiscriminator() = default;
  PatchDiscriminator(const std::string& name, Rng& rng, int in_channels, int base = 64)
      : c1(name + ".c1", rng, base, in_channels, 4, 2, true, 1),
        c2(name + ".c2", rng, 2 * base, base, 4, 2, false, 1),
        c3(name + ".c3", rng, 4 * base, 2 * base, 4, 2, false, 1),
        c4(name + ".c4", rng, 8 * base, 4 * base, 4, 1, false, 1),
        c5(name + ".c5", rng, 1, 8 * base, 4, 1, true, 1),
        n2(name + ".n2", 2 * base),
        n3(name + ".n3", 4 * base),
        n4(name + ".n4", 8 * base) {}

  // frozen=true runs the same weights as constants, so generator updates
  // cannot leak gradients into the discriminator
  nn::Val<T> forward(nn::Tape<T>& t, nn::Val<T> x, bool frozen = false) {
    auto weight = [&](nn::Param<T>& p) { return frozen ? t.constant(p.value) : t.leaf(p); };
    auto conv = [&](nn::Conv2dLayer<T>& c, nn::Val<T> h) {
      nn::Val<T> y = nn::conv2d(h, weight(c.w), c.stride, c.pad);
      if (c.has_bias) y = nn::add_channel_bias(y, weight(c.b));
      return y;
    };
    auto norm = [&](nn::InstanceNormLayer<T>& n, nn::Val<T> h) {
      return nn::instance_norm(h, weight(n.gamma), weight(n.beta));
    };
    nn::Val<T> h = nn::leaky_relu(conv(c1, x), T(0.2));
    h = nn::leaky_relu(norm(n2, conv(c2, h)), T(0.2));
    h = nn::leaky_relu(norm(n3, conv(c3, h)), T(0.2));
    h = nn::leaky_relu(norm(n4, conv(c4, h)), T(0.2));
    return conv(c5, h);
  }

  void collect(nn::ParamList<T>& out) {
    c1.collect(out);
    c2.collect(out);
    c3.collect(out);
    c4.collect(out);
    c5.collect(out);
    n2.collect(out);
    n3.collect(out);
    n4.collect(out);
  }
};

// One discriminator per sequence.
template <typename T>
struct DiscriminatorBank {
  std::vector<PatchDiscriminator<T>> discs;

  DiscriminatorBank() = default;
  DiscriminatorBank(Rng& rng, int S, int in_channels, int base = 64) {
    for (int j = 0; j < S; ++j)
      discs.emplace_back("disc" + std::to_string(j), rng, in_channels, base);
  }

  PatchDiscriminator<T>& at(int j) {
    if (j < 0 || j >= static_cast<int>(discs.size()))
      throw ConfigError("discriminator index " + std::to_string(j) + " out of range");
    return discs[static_cast<std::size_t>(j)];
  }

  void collect(nn::ParamList<T>& out) {
    for (auto& d : discs) d.collect(out);
  }
};

template <typename T>
nn::Val<T> perceptual_loss(nn::Tape<T>& t, const FeatureNet<T>& net, nn::Val<T> pred,
                           nn::Val<T> target) {
  if (!pred.value().same_shape(target.value()))
    throw ShapeError("perceptual_loss: shape mismatch " + pred.value().shape_str() + " vs " +
                     target.value().shape_str());
  std::vector<nn::Val<T>> fp = net.forward(t, pred);
  std::vector<nn::Val<T>> ft = net.forward(t, target);
  nn::Val<T> total = nn::mean_abs_diff(fp[0], ft[0]);
  for (std::size_t i = 1; i < fp.size(); ++i)
    total = nn::add(total, nn::mean_abs_diff(fp[i], ft[i]));
  return nn::scale(total, T(1) / static_cast<T>(fp.size()));
}

// lambda_r * L1 + lambda_p * perceptual; net may be null when lambda_p == 0
template <typename T>
nn::Val<T> reconstruction_loss(nn::Tape<T>& t, nn::Val<T> pred, nn::Val<T> target,
                               const LossWeights& w, const FeatureNet<T>* net) {
  if (!pred.value().same_shape(target.value()))
    throw ShapeError("reconstruction_loss: shape mismatch " + pred.value().shape_str() + " vs " +
                     target.value().shape_str());
  nn::Val<T> loss = nn::scale(nn::mean_abs_diff(pred, target), static_cast<T>(w.lambda_r));
  if (w.lambda_p > 0) {
    if (net == nullptr)
      throw ConfigError("reconstruction_loss: lambda_p > 0 needs a feature network");
    loss = nn::add(loss, nn::scale(perceptual_loss(t, *net, pred, target),
                                   static_cast<T>(w.lambda_p)));
  }
  return loss;
}

// least-squares GAN pair: d_loss trains D (fake detached), g_loss trains G
// (D frozen)
template <typename T>
std::pair<nn::Val<T>, nn::Val<T>> adversarial_losses(nn::Tape<T>& t, PatchDiscriminator<T>& d,
                                                     nn::Val<T> real, nn::Val<T> fake) {
  nn::Val<T> d_real = d.forward(t, real, false);
  nn::Val<T> d_fake = d.forward(t, nn::detach(fake), false);
  nn::Val<T> ones = t.constant(nn::Tensor<T>::full(d_real.value().shape, T(1)));
  nn::Val<T> zeros = t.constant(nn::Tensor<T>::zeros(d_fake.value().shape));
  nn::Val<T> d_loss = nn::add(nn::mean_sq_diff(d_real, ones), nn::mean_sq_diff(d_fake, zeros));

  nn::Val<T> g_score = d.forward(t, fake, true);
  nn::Val<T> g_ones = t.constant(nn::Tensor<T>::full(g_score.value().shape, T(1)));
  nn::Val<T> g_loss = nn::mean_sq_diff(g_score, g_ones);
  return {d_loss, g_loss};
}

template <typename T>
nn::Val<T> cycle_loss(nn::Tape<T>& t, nn::Val<T> x, nn::Val<T> x_cycled) {
  (void)t;
  if (!x.value().same_shape(x_cycled.value()))
    throw ShapeError("cycle_loss: shape mismatch");
  return nn::mean_abs_diff(x_cycled, x);
}

}  // namespace seq2seq::model
