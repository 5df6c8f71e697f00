#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gradcheck.hpp"
#include "seq2seq/model/objectives.hpp"
#include "seq2seq/toy/toy_sim.hpp"

using namespace seq2seq;
using namespace seq2seq::nn;
using namespace seq2seq::model;
using seq2seq::testing::gradcheck;
using seq2seq::testing::random_tensor;

namespace {

template <typename T>
Tensor<T> image_tensor(Rng& rng, int c, int h, int w) {
  return random_tensor<T>(rng, {1, c, h, w}, 0.0, 1.0);
}

// brute-force least-squares GAN terms from raw score maps
double lsgan_d(const Tensor<double>& s_real, const Tensor<double>& s_fake) {
  double a = 0, b = 0;
  for (double v : s_real.data) a += (v - 1.0) * (v - 1.0);
  for (double v : s_fake.data) b += v * v;
  return a / static_cast<double>(s_real.numel()) + b / static_cast<double>(s_fake.numel());
}

double lsgan_g(const Tensor<double>& s_fake) {
  double a = 0;
  for (double v : s_fake.data) a += (v - 1.0) * (v - 1.0);
  return a / static_cast<double>(s_fake.numel());
}

template <typename T>
void zero_all(PatchDiscriminator<T>& d) {
  ParamList<T> ps;
  d.collect(ps);
  for (Param<T>* p : ps) std::fill(p->value.data.begin(), p->value.data.end(), T(0));
}

Tensor<double> to_input(const nn::Tensor<float>& img) {
  Tensor<double> out({1, 1, img.dim(0), img.dim(1)});
  for (std::size_t i = 0; i < img.data.size(); ++i) out.data[i] = img.data[i];
  return out;
}

}  // namespace

TEST_CASE("loss weights defaults, validation, json round trip") {
  LossWeights w;
  CHECK(w.lambda_r == doctest::Approx(10.0));
  CHECK(w.lambda_p == doctest::Approx(0.01));
  CHECK(w.lambda_adv == doctest::Approx(1.0));
  CHECK(w.lambda_cyc == doctest::Approx(10.0));
  CHECK_FALSE(w.use_adversarial);
  CHECK_FALSE(w.use_cycle);

  w.lambda_p = 0.5;
  w.use_cycle = true;
  LossWeights back = LossWeights::from_json(w.to_json());
  CHECK(back.lambda_p == doctest::Approx(0.5));
  CHECK(back.use_cycle);

  Json bad = w.to_json();
  bad["lambda_q"] = 1.0;
  CHECK_THROWS_AS(LossWeights::from_json(bad), ConfigError);

  Json neg = w.to_json();
  neg["lambda_r"] = -1.0;
  CHECK_THROWS_AS(LossWeights::from_json(neg), ConfigError);
}

TEST_CASE("reconstruction loss is zero on identical inputs") {
  Rng rng(41);
  Tape<double> t;
  Tensor<double> img = image_tensor<double>(rng, 1, 12, 12);
  Val<double> pred = t.constant(img);
  Val<double> target = t.constant(img);

  LossWeights w;
  w.lambda_p = 0;
  CHECK(reconstruction_loss<double>(t, pred, target, w, nullptr).value().data[0] ==
        doctest::Approx(0.0).epsilon(1e-7));

  FeatureConfig fc;
  auto net = make_feature_net<double>(fc);
  w.lambda_p = 0.01;
  CHECK(reconstruction_loss(t, pred, target, w, net.get()).value().data[0] ==
        doctest::Approx(0.0).epsilon(1e-7));
}

TEST_CASE("reconstruction loss closed form for a constant offset") {
  Rng rng(42);
  Tape<double> t;
  Tensor<double> tgt = random_tensor<double>(rng, {1, 1, 10, 10}, 0.0, 0.8);
  Tensor<double> prd = tgt;
  for (double& v : prd.data) v += 0.1;

  LossWeights w;
  w.lambda_r = 10.0;
  w.lambda_p = 0.0;
  Val<double> loss = reconstruction_loss<double>(t, t.constant(prd), t.constant(tgt), w, nullptr);
  CHECK(loss.value().data[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("reconstruction loss splits into weighted l1 and perceptual parts") {
  Rng rng(43);
  FeatureConfig fc;
  auto net = make_feature_net<double>(fc);

  Tape<double> t;
  Val<double> pred = t.constant(image_tensor<double>(rng, 1, 16, 16));
  Val<double> target = t.constant(image_tensor<double>(rng, 1, 16, 16));

  LossWeights w;
  Val<double> total = reconstruction_loss(t, pred, target, w, net.get());
  double l1 = mean_abs_diff(pred, target).value().data[0];
  double perc = perceptual_loss(t, *net, pred, target).value().data[0];
  CHECK(total.value().data[0] ==
        doctest::Approx(w.lambda_r * l1 + w.lambda_p * perc).epsilon(1e-9));
  CHECK(perc > 0.0);

  Val<double> wrong = t.constant(image_tensor<double>(rng, 1, 16, 15));
  CHECK_THROWS_AS(reconstruction_loss(t, pred, wrong, w, net.get()), ShapeError);
  CHECK_THROWS_AS(reconstruction_loss<double>(t, pred, target, w, nullptr), ConfigError);
}

TEST_CASE("perceptual loss is symmetric, zero on equal, positive on a toy pair") {
  FeatureConfig fc;
  auto net = make_feature_net<double>(fc);

  toy::ToySubject s = toy::generate_subject(7, 64);
  Tape<double> t;
  Val<double> a = t.constant(to_input(s.x1.data));
  Val<double> b = t.constant(to_input(s.x2.data));

  double lab = perceptual_loss(t, *net, a, b).value().data[0];
  double lba = perceptual_loss(t, *net, b, a).value().data[0];
  CHECK(lab == doctest::Approx(lba).epsilon(1e-12));
  CHECK(lab > 0.0);
  CHECK(perceptual_loss(t, *net, a, a).value().data[0] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("feature net file backend reports missing weights") {
  FeatureConfig fc;
  fc.backend = "file";
  fc.path = "/nonexistent/feature_weights.bin";
  CHECK_THROWS_AS(make_feature_net<double>(fc), ConfigError);
  try {
    make_feature_net<double>(fc);
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    CHECK(msg.find("feature") != std::string::npos);
    CHECK(msg.find("random") != std::string::npos);
  }
}

TEST_CASE("feature net is deterministic for a fixed seed") {
  Rng rng(44);
  Tensor<double> img = image_tensor<double>(rng, 1, 12, 12);

  FeatureConfig fc;
  auto n1 = make_feature_net<double>(fc);
  auto n2 = make_feature_net<double>(fc);
  Tape<double> t(false);
  auto f1 = n1->forward(t, t.constant(img));
  auto f2 = n2->forward(t, t.constant(img));
  REQUIRE(f1.size() == 3);
  for (std::size_t i = 0; i < f1.size(); ++i)
    CHECK(max_abs_diff(f1[i].value(), f2[i].value()) == 0.0);

  FeatureConfig other;
  other.seed = 99;
  auto n3 = make_feature_net<double>(other);
  auto f3 = n3->forward(t, t.constant(img));
  CHECK(max_abs_diff(f1[0].value(), f3[0].value()) > 0.0);
}

TEST_CASE("adversarial losses match the score-map oracle") {
  Rng rng(45);
  PatchDiscriminator<double> d("d", rng, 1, 4);
  Tape<double> t;
  Val<double> real = t.constant(image_tensor<double>(rng, 1, 32, 32));
  Val<double> fake = t.constant(image_tensor<double>(rng, 1, 32, 32));

  auto [d_loss, g_loss] = adversarial_losses(t, d, real, fake);
  Tensor<double> s_real = d.forward(t, real).value();
  Tensor<double> s_fake = d.forward(t, fake).value();

  CHECK(d_loss.value().data[0] == doctest::Approx(lsgan_d(s_real, s_fake)).epsilon(1e-9));
  CHECK(g_loss.value().data[0] == doctest::Approx(lsgan_g(s_fake)).epsilon(1e-9));

  // a perfect discriminator scores real as 1 and fake as 0
  Tensor<double> ones = Tensor<double>::full(s_real.shape, 1.0);
  Tensor<double> zeros = Tensor<double>::zeros(s_fake.shape);
  CHECK(lsgan_d(ones, zeros) == doctest::Approx(0.0));
  CHECK(lsgan_g(ones) == doctest::Approx(0.0));
}

TEST_CASE("rigged discriminator gives exact adversarial values") {
  Rng rng(46);
  PatchDiscriminator<double> d("d", rng, 1, 4);
  zero_all(d);
  Tensor<double> real_img = image_tensor<double>(rng, 1, 32, 32);
  Tensor<double> fake_img = image_tensor<double>(rng, 1, 32, 32);

  // all-zero weights make the score map equal the last bias everywhere;
  // leaves snapshot values, so each rig needs a fresh tape
  auto run = [&](double bias) {
    d.c5.b.value.data[0] = bias;
    Tape<double> t;
    auto [dl, gl] = adversarial_losses(t, d, t.constant(real_img), t.constant(fake_img));
    return std::pair<double, double>{dl.value().data[0], gl.value().data[0]};
  };
  {
    auto [dl, gl] = run(0.5);
    CHECK(dl == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(gl == doctest::Approx(0.25).epsilon(1e-12));
  }
  {
    auto [dl, gl] = run(1.0);
    CHECK(dl == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(gl == doctest::Approx(0.0).epsilon(1e-12));
  }
  {
    auto [dl, gl] = run(0.0);
    CHECK(dl == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(gl == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("discriminator emits a patch score map and frozen forward matches") {
  Rng rng(47);
  PatchDiscriminator<double> d("d", rng, 1, 8);
  Tape<double> t;
  Val<double> x = t.constant(image_tensor<double>(rng, 1, 64, 64));

  Tensor<double> live = d.forward(t, x, false).value();
  Tensor<double> frozen = d.forward(t, x, true).value();
  CHECK(live.shape == std::vector<int>{1, 1, 6, 6});
  CHECK(max_abs_diff(live, frozen) == 0.0);
}

TEST_CASE("discriminator bank holds one instance per sequence") {
  Rng rng(48);
  DiscriminatorBank<double> bank(rng, 3, 1, 4);
  CHECK(bank.discs.size() == 3);
  CHECK_THROWS_AS(bank.at(3), ConfigError);
  CHECK_THROWS_AS(bank.at(-1), ConfigError);

  Tape<double> t;
  Val<double> x = t.constant(image_tensor<double>(rng, 1, 32, 32));
  Tensor<double> s0 = bank.at(0).forward(t, x).value();
  Tensor<double> s1 = bank.at(1).forward(t, x).value();
  CHECK(max_abs_diff(s0, s1) > 0.0);
}

TEST_CASE("generator and discriminator gradients stay separated") {
  Rng rng(49);
  PatchDiscriminator<double> d("d", rng, 1, 4);
  Conv2dLayer<double> gen("gen", rng, 1, 1, 3, 1, true);

  Tape<double> t;
  Val<double> noise = t.constant(image_tensor<double>(rng, 1, 32, 32));
  Val<double> real = t.constant(image_tensor<double>(rng, 1, 32, 32));
  Val<double> fake = sigmoid(gen.forward(t, noise));
  auto [d_loss, g_loss] = adversarial_losses(t, d, real, fake);

  ParamList<double> d_params, g_params;
  d.collect(d_params);
  gen.collect(g_params);

  auto grad_norm = [](const ParamList<double>& ps) {
    double n = 0;
    for (const Param<double>* p : ps)
      for (double g : p->grad.data) n += g * g;
    return n;
  };

  t.backward(d_loss);
  CHECK(grad_norm(g_params) == 0.0);
  CHECK(grad_norm(d_params) > 0.0);

  for (Param<double>* p : d_params) p->zero_grad();
  for (Param<double>* p : g_params) p->zero_grad();
  t.clear_grads();

  t.backward(g_loss);
  CHECK(grad_norm(d_params) == 0.0);
  CHECK(grad_norm(g_params) > 0.0);
}

TEST_CASE("cycle loss closed forms") {
  Tape<double> t;
  Val<double> a = t.constant(Tensor<double>::full({1, 1, 6, 6}, 0.3));
  Val<double> b = t.constant(Tensor<double>::full({1, 1, 6, 6}, 0.55));
  CHECK(cycle_loss(t, a, b).value().data[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(cycle_loss(t, a, a).value().data[0] == doctest::Approx(0.0));

  Rng rng(50);
  Val<double> r1 = t.constant(image_tensor<double>(rng, 1, 6, 6));
  Val<double> r2 = t.constant(image_tensor<double>(rng, 1, 6, 6));
  CHECK(cycle_loss(t, r1, r2).value().data[0] >= 0.0);
  Val<double> bad = t.constant(image_tensor<double>(rng, 1, 6, 5));
  CHECK_THROWS_AS(cycle_loss(t, r1, bad), ShapeError);
}

TEST_CASE("adversarial gradients pass finite differences") {
  Rng rng(51);
  PatchDiscriminator<double> d("d", rng, 1, 2);
  Tensor<double> real_img = image_tensor<double>(rng, 1, 32, 32);
  Tensor<double> fake_img = image_tensor<double>(rng, 1, 32, 32);

  ParamList<double> probe{&d.c1.w, &d.c5.b};
  double err = gradcheck(
      probe,
      [&](Tape<double>& t) {
        Val<double> real = t.constant(real_img);
        Val<double> fake = t.constant(fake_img);
        auto [dl, gl] = adversarial_losses(t, d, real, fake);
        (void)gl;
        return dl;
      },
      1e-5);
  CHECK(err < 1e-6);

  Param<double> p_fake("p_fake", random_tensor<double>(rng, {1, 1, 32, 32}, -0.5, 0.5));
  ParamList<double> gprobe{&p_fake};
  double gerr = gradcheck(
      gprobe,
      [&](Tape<double>& t) {
        Val<double> real = t.constant(real_img);
        Val<double> fake = sigmoid(t.leaf(p_fake));
        auto [dl, gl] = adversarial_losses(t, d, real, fake);
        (void)dl;
        return gl;
      },
      1e-4);
  // looser bound: the path runs through three instance norms, whose
  // normalization cancels most of a single-pixel nudge and leaves the
  // finite-difference quotient noisy (error shrinks as h grows)
  CHECK(gerr < 1e-5);
}

TEST_CASE("reconstruction gradient with perceptual term passes finite differences") {
  Rng rng(52);
  FeatureConfig fc;
  auto net = make_feature_net<double>(fc);
  Tensor<double> target = image_tensor<double>(rng, 1, 10, 10);
  Param<double> p_pred("p_pred", random_tensor<double>(rng, {1, 1, 10, 10}, -0.5, 0.5));

  LossWeights w;
  ParamList<double> probe{&p_pred};
  double err = gradcheck(
      probe,
      [&](Tape<double>& t) {
        Val<double> pred = sigmoid(t.leaf(p_pred));
        return reconstruction_loss(t, pred, t.constant(target), w, net.get());
      },
      1e-5);
  CHECK(err < 1e-6);
}
