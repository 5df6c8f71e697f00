#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gradcheck.hpp"
#include "seq2seq/model/generator.hpp"

using namespace seq2seq;
using namespace seq2seq::nn;
using namespace seq2seq::model;
using seq2seq::testing::gradcheck;
using seq2seq::testing::random_tensor;

namespace {

GeneratorConfig tiny_config() {
  GeneratorConfig cfg;
  cfg.S = 2;
  cfg.in_channels = 2;
  cfg.base_channels = 2;
  cfg.n_residual_blocks = 1;
  cfg.n_hyper_residual_blocks = 1;
  cfg.c_w = 2;
  return cfg;
}

}  // namespace

TEST_CASE("hyperconv hand example: bank contraction then convolution") {
  Rng rng(1);
  HyperConv<double> hc("hc", rng, HyperConvSpec{1, 1, 1, 1, 2, 2, false});
  hc.bank.value.data = {2.0, 3.0};  // single kernel position, c_w = 2
  // mlp pinned so any code maps to f = (0.5, 0.5)
  std::fill(hc.mlp_w.value.data.begin(), hc.mlp_w.value.data.end(), 0.0);
  hc.mlp_b.value.data = {0.5, 0.5};

  Tape<double> t;
  Tensor<double> x({1, 1, 1, 1});
  x.data[0] = 4.0;
  Tensor<double> code = Tensor<double>::zeros({2});
  code.data[0] = 1.0;
  Val<double> y = hc.forward(t, t.constant(x), t.constant(code));
  // kernel = 2*0.5 + 3*0.5 = 2.5; output = 2.5 * 4
  CHECK(y.value().data[0] == doctest::Approx(10.0));
}

TEST_CASE("hyperconv one-hot embedding selects a bank slice") {
  Rng rng(2);
  HyperConvSpec spec{3, 2, 3, 3, 4, 4, false};
  HyperConv<double> hc("hc", rng, spec);
  // identity mlp: f = code, so code e_k picks bank column k
  std::fill(hc.mlp_w.value.data.begin(), hc.mlp_w.value.data.end(), 0.0);
  for (int i = 0; i < 4; ++i) hc.mlp_w.value.data[static_cast<std::size_t>(i) * 4 + i] = 1.0;
  std::fill(hc.mlp_b.value.data.begin(), hc.mlp_b.value.data.end(), 0.0);

  Tensor<double> x = random_tensor<double>(rng, {1, 2, 6, 6});
  for (int k = 0; k < 4; ++k) {
    Tensor<double> code = Tensor<double>::zeros({4});
    code.data[static_cast<std::size_t>(k)] = 1.0;
    Tape<double> t;
    Val<double> y = hc.forward(t, t.constant(x), t.constant(code));

    // reference: plain convolution with kernel = bank[..., k]
    Tensor<double> kernel({3, 2, 3, 3});
    for (int i = 0; i < 54; ++i)
      kernel.data[static_cast<std::size_t>(i)] = hc.bank.value.data[static_cast<std::size_t>(i) * 4 + k];
    Tape<double> t2;
    Val<double> ref = conv2d(t2.constant(x), t2.constant(kernel), 1);
    CHECK(max_abs_diff(y.value(), ref.value()) < 1e-12);
  }
}

TEST_CASE("hyperconv zero bank annihilates") {
  Rng rng(3);
  HyperConv<double> hc("hc", rng, HyperConvSpec{2, 2, 3, 3, 3, 4, false});
  std::fill(hc.bank.value.data.begin(), hc.bank.value.data.end(), 0.0);
  Tape<double> t;
  Tensor<double> x = random_tensor<double>(rng, {1, 2, 5, 5});
  Tensor<double> code = Tensor<double>::zeros({3});
  code.data[1] = 1.0;
  Val<double> y = hc.forward(t, t.constant(x), t.constant(code));
  for (double v : y.value().data) CHECK(v == 0.0);
}

TEST_CASE("hyperconv kernel is linear in the embedding") {
  Rng rng(4);
  HyperConvSpec spec{2, 3, 3, 3, 4, 4, false};
  HyperConv<double> hc("hc", rng, spec);
  // identity mlp exposes f directly through the code argument
  std::fill(hc.mlp_w.value.data.begin(), hc.mlp_w.value.data.end(), 0.0);
  for (int i = 0; i < 4; ++i) hc.mlp_w.value.data[static_cast<std::size_t>(i) * 4 + i] = 1.0;
  std::fill(hc.mlp_b.value.data.begin(), hc.mlp_b.value.data.end(), 0.0);

  Tensor<double> f1 = random_tensor<double>(rng, {4});
  Tensor<double> f2 = random_tensor<double>(rng, {4});
  double alpha = 0.7, beta = -1.3;
  Tensor<double> mix({4});
  for (int i = 0; i < 4; ++i)
    mix.data[static_cast<std::size_t>(i)] =
        alpha * f1.data[static_cast<std::size_t>(i)] + beta * f2.data[static_cast<std::size_t>(i)];

  Tape<double> t;
  Tensor<double> k1 = hc.kernel(t, t.constant(f1)).value();
  Tensor<double> k2 = hc.kernel(t, t.constant(f2)).value();
  Tensor<double> km = hc.kernel(t, t.constant(mix)).value();
  for (std::size_t i = 0; i < km.data.size(); ++i)
    CHECK(km.data[i] == doctest::Approx(alpha * k1.data[i] + beta * k2.data[i]).epsilon(1e-6));
}

TEST_CASE("hyperconv parameter count formula") {
  HyperConvSpec big{64, 64, 3, 3, 4, 64, false};
  CHECK(big.bank_params() == 2359296);
  CHECK(big.mlp_params() == 320);
  CHECK(big.total_params() == 2359616);

  HyperConvSpec unit{1, 1, 1, 1, 1, 1, false};
  CHECK(unit.bank_params() == 1);
  CHECK(unit.mlp_params() == 2);
  CHECK(unit.total_params() == 3);

  HyperConvSpec biased{8, 4, 3, 3, 2, 5, true};
  CHECK(biased.total_params() == biased.bank_params() + biased.mlp_params() + 8);
}

TEST_CASE("encode shape contract and divisibility guard") {
  Rng rng(5);
  GeneratorConfig cfg = tiny_config();
  cfg.in_channels = 3;
  Generator<float> g(cfg, rng);
  Tape<float> t(false);
  Val<float> z = g.encode(t, t.constant(Tensor<float>::zeros({1, 3, 32, 32})));
  CHECK(z.value().shape == std::vector<int>({1, cfg.feature_channels(), 8, 8}));
  CHECK_THROWS_AS(g.encode(t, t.constant(Tensor<float>::zeros({1, 3, 30, 32}))), ShapeError);
  CHECK_THROWS_AS(g.encode(t, t.constant(Tensor<float>::zeros({1, 2, 32, 32}))), ShapeError);
}

TEST_CASE("encode is deterministic and finite over random draws") {
  Rng rng(6);
  Generator<float> g(tiny_config(), rng);
  for (int i = 0; i < 100; ++i) {
    Tensor<float> x = random_tensor<float>(rng, {1, 2, 8, 8}, 0.0, 1.0);
    Tape<float> t1(false), t2(false);
    const Tensor<float>& a = g.encode(t1, t1.constant(x)).value();
    const Tensor<float>& b = g.encode(t2, t2.constant(x)).value();
    REQUIRE(a.all_finite());
    REQUIRE(max_abs_diff(a, b) == 0.f);
  }
}

TEST_CASE("fuse of one frame equals a single lstm step") {
  Rng rng(7);
  Generator<double> g(tiny_config(), rng);
  Tape<double> t(false);
  Tensor<double> f = random_tensor<double>(rng, {1, 4, 6, 6});
  Val<double> fused = g.fuse_4d(t, {t.constant(f)});
  auto hs = g.lstm.run(t, {t.constant(f)});
  CHECK(max_abs_diff(fused.value(), hs[0].value()) == 0.0);
}

TEST_CASE("fuse with pinned gates matches the closed form") {
  Rng rng(8);
  GeneratorConfig cfg = tiny_config();
  Generator<double> g(cfg, rng);
  int fc = cfg.feature_channels();
  // gate order i,f,o,g; open i and o, close f, and give g an identity center
  // tap from x, so every step yields h = tanh(tanh(x))
  std::fill(g.lstm.w.value.data.begin(), g.lstm.w.value.data.end(), 0.0);
  std::fill(g.lstm.b.value.data.begin(), g.lstm.b.value.data.end(), 0.0);
  for (int c = 0; c < fc; ++c) {
    g.lstm.b.value.data[static_cast<std::size_t>(c)] = 30.0;               // i
    g.lstm.b.value.data[static_cast<std::size_t>(fc + c)] = -30.0;        // f
    g.lstm.b.value.data[static_cast<std::size_t>(2 * fc + c)] = 30.0;     // o
    // g-gate weight block: out channel 3*fc+c, in channel c, center of 3x3
    std::size_t base = ((static_cast<std::size_t>(3 * fc + c) * (2 * fc) + c) * 9) + 4;
    g.lstm.w.value.data[base] = 1.0;
  }
  Tensor<double> x = random_tensor<double>(rng, {1, fc, 5, 5});
  Tape<double> t(false);
  for (int k : {1, 3}) {
    std::vector<Val<double>> frames(static_cast<std::size_t>(k), t.constant(x));
    const Tensor<double>& fused = g.fuse_4d(t, frames).value();
    for (std::size_t i = 0; i < x.data.size(); ++i)
      CHECK(fused.data[i] == doctest::Approx(std::tanh(std::tanh(x.data[i]))).epsilon(1e-9));
  }
}

TEST_CASE("fuse is order sensitive") {
  Rng rng(9);
  Generator<double> g(tiny_config(), rng);
  Tape<double> t(false);
  Tensor<double> a = random_tensor<double>(rng, {1, 4, 6, 6});
  Tensor<double> b = random_tensor<double>(rng, {1, 4, 6, 6});
  Val<double> ab = g.fuse_4d(t, {t.constant(a), t.constant(b)});
  Val<double> ba = g.fuse_4d(t, {t.constant(b), t.constant(a)});
  CHECK(max_abs_diff(ab.value(), ba.value()) > 1e-6);
}

TEST_CASE("expand produces the requested frame count") {
  Rng rng(10);
  Generator<float> g(tiny_config(), rng);
  Tape<float> t(false);
  Tensor<float> fused = random_tensor<float>(rng, {1, 4, 6, 6});
  for (int t_out : {1, 4, 6}) {
    auto frames = g.expand_4d(t, t.constant(fused), t_out);
    CHECK(static_cast<int>(frames.size()) == t_out);
    for (const auto& f : frames) CHECK(f.value().shape == fused.shape);
  }
  CHECK_THROWS_AS(g.expand_4d(t, t.constant(fused), 0), ConfigError);
}

TEST_CASE("decode shape contract and code validation") {
  Rng rng(11);
  GeneratorConfig cfg = tiny_config();
  Generator<float> g(cfg, rng);
  Tape<float> t(false);
  Tensor<float> feat = random_tensor<float>(rng, {1, cfg.feature_channels(), 8, 8});
  Val<float> img = g.decode(t, t.constant(feat), SequenceCode(1, 2));
  CHECK(img.value().shape == std::vector<int>({1, cfg.in_channels, 32, 32}));
  CHECK(img.value().min() >= 0.f);
  CHECK(img.value().max() <= 1.f);
  CHECK_THROWS_AS(g.decode(t, t.constant(feat), SequenceCode(0, 3)), ConfigError);
  CHECK_THROWS_AS(SequenceCode(2, 2), ConfigError);
}

TEST_CASE("decode differs across codes") {
  Rng rng(12);
  Generator<float> g(tiny_config(), rng);
  Tape<float> t(false);
  Tensor<float> feat = random_tensor<float>(rng, {1, 4, 8, 8});
  Tensor<float> y0 = g.decode(t, t.constant(feat), SequenceCode(0, 2)).value();
  Tensor<float> y1 = g.decode(t, t.constant(feat), SequenceCode(1, 2)).value();
  CHECK(max_abs_diff(y0, y1) > 1e-6f);
}

TEST_CASE("decode-encode round trip preserves spatial dims") {
  Rng rng(13);
  Generator<float> g(tiny_config(), rng);
  for (int size : {8, 16, 24}) {
    Tape<float> t(false);
    Tensor<float> x = random_tensor<float>(rng, {1, 2, size, size}, 0.0, 1.0);
    Val<float> z = g.encode(t, t.constant(x));
    Val<float> y = g.decode(t, z, SequenceCode(0, 2));
    CHECK(y.value().shape == x.shape);
  }
}

TEST_CASE("translate composes and weight sharing dedups leaves") {
  Rng rng(14);
  Generator<float> g(tiny_config(), rng);
  Tape<float> t;
  Tensor<float> f1 = random_tensor<float>(rng, {1, 2, 8, 8}, 0.0, 1.0);
  Tensor<float> f2 = random_tensor<float>(rng, {1, 2, 8, 8}, 0.0, 1.0);
  auto out = g.translate(t, {t.constant(f1), t.constant(f2)}, SequenceCode(1, 2), 3);
  REQUIRE(out.size() == 3);
  for (const auto& o : out) CHECK(o.value().shape == std::vector<int>({1, 2, 8, 8}));
  // both encoder applications resolve to one leaf per parameter
  Val<float> w1 = t.leaf(g.enc1.w);
  Val<float> w2 = t.leaf(g.enc1.w);
  CHECK(w1.id == w2.id);
}

TEST_CASE("gradients flow through the full translate composition") {
  Rng rng(15);
  Generator<double> g(tiny_config(), rng);
  Tensor<double> x1 = random_tensor<double>(rng, {1, 2, 8, 8}, 0.0, 1.0);
  Tensor<double> x2 = random_tensor<double>(rng, {1, 2, 8, 8}, 0.0, 1.0);
  Tensor<double> target = random_tensor<double>(rng, {1, 2, 8, 8}, 0.0, 1.0);
  auto loss = [&](Tape<double>& t) {
    auto out = g.translate(t, {t.constant(x1), t.constant(x2)}, SequenceCode(0, 2), 2);
    return mean_sq_diff(out[1], t.constant(target));
  };
  // spot-check one parameter from each stage; the acceptance suite covers all
  std::vector<Param<double>*> subset = {&g.enc1.w, &g.res[0].norm1.gamma, &g.lstm.w,
                                        &g.hres[0].conv1.bank, &g.dec3.mlp_w, &g.dec3.bias};
  double err = gradcheck(subset, loss, 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("generator config validation and json round trip") {
  GeneratorConfig cfg = tiny_config();
  GeneratorConfig back = GeneratorConfig::from_json(cfg.to_json());
  CHECK(back.base_channels == cfg.base_channels);
  CHECK(back.c_w == cfg.c_w);

  GeneratorConfig bad = cfg;
  bad.downsample_factor = 8;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  Json j = cfg.to_json();
  j["typo_key"] = 1;
  CHECK_THROWS_AS(GeneratorConfig::from_json(j), ConfigError);
}

TEST_CASE("full-size parameter count lands near the reported budget") {
  Rng rng(16);
  GeneratorConfig cfg;
  cfg.S = 4;
  cfg.in_channels = 3;
  cfg.base_channels = 32;
  cfg.c_w = 64;
  Generator<float> g(cfg, rng);
  long long n = g.param_count();
  // reported reference is 35.8M; exact widths are a judgment call, so only
  // the magnitude is pinned
  CHECK(n > 25'000'000);
  CHECK(n < 50'000'000);
  MESSAGE("full-size generator parameters: ", n);
}
