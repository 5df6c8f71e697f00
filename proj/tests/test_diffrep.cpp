#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "seq2seq/analysis/diffrep.hpp"
#include "seq2seq/toy/toy_sim.hpp"

namespace fs = std::filesystem;
using namespace seq2seq;
using namespace seq2seq::analysis;

namespace {

struct WarnCapture {
  std::vector<std::string> messages;
  WarnCapture() {
    set_warn_handler([this](const std::string& m) { messages.push_back(m); });
  }
  ~WarnCapture() { set_warn_handler({}); }
  bool saw(const std::string& needle) const {
    for (const std::string& m : messages)
      if (m.find(needle) != std::string::npos) return true;
    return false;
  }
};

nn::Tensor<float> random_image(Rng& rng, int h, int w) {
  nn::Tensor<float> t({h, w});
  for (float& v : t.data) v = static_cast<float>(rng.uniform());
  return t;
}

// textbook formula, computed independently in double
double psnr_reference(const nn::Tensor<float>& a, const nn::Tensor<float>& b, double range) {
  double mse = 0;
  for (std::size_t k = 0; k < a.data.size(); ++k) {
    double d = static_cast<double>(a.data[k]) - static_cast<double>(b.data[k]);
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse == 0) return kPsnrCap;
  return 10.0 * std::log10(range * range / mse);
}

// independent sliding-window implementation with an explicitly centered
// variance form
double ssim_reference(const nn::Tensor<float>& a, const nn::Tensor<float>& b, double range) {
  const int win = 11;
  const double sigma = 1.5, k1 = 0.01, k2 = 0.03;
  const double c1 = (k1 * range) * (k1 * range), c2 = (k2 * range) * (k2 * range);
  int h = a.dim(0), w = a.dim(1);
  std::vector<double> g(win * win);
  double gs = 0;
  for (int y = 0; y < win; ++y)
    for (int x = 0; x < win; ++x) {
      double dy = y - (win - 1) / 2.0, dx = x - (win - 1) / 2.0;
      g[static_cast<std::size_t>(y * win + x)] = std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
      gs += g[static_cast<std::size_t>(y * win + x)];
    }
  for (double& v : g) v /= gs;

  double total = 0;
  int windows = 0;
  for (int y = 0; y + win <= h; ++y)
    for (int x = 0; x + win <= w; ++x) {
      double mua = 0, mub = 0;
      for (int j = 0; j < win; ++j)
        for (int i = 0; i < win; ++i) {
          double wgt = g[static_cast<std::size_t>(j * win + i)];
          mua += wgt * a.data[static_cast<std::size_t>((y + j) * w + x + i)];
          mub += wgt * b.data[static_cast<std::size_t>((y + j) * w + x + i)];
        }
      double va = 0, vb = 0, cov = 0;
      for (int j = 0; j < win; ++j)
        for (int i = 0; i < win; ++i) {
          double wgt = g[static_cast<std::size_t>(j * win + i)];
          double da = a.data[static_cast<std::size_t>((y + j) * w + x + i)] - mua;
          double db = b.data[static_cast<std::size_t>((y + j) * w + x + i)] - mub;
          va += wgt * da * da;
          vb += wgt * db * db;
          cov += wgt * da * db;
        }
      total += ((2 * mua * mub + c1) * (2 * cov + c2)) /
               ((mua * mua + mub * mub + c1) * (va + vb + c2));
      ++windows;
    }
  return total / windows;
}

nn::Tensor<float> as_input(const io::Volume& v) {
  return v.data.reshaped({1, 1, v.height(), v.width()});
}

MetricMatrix off_diag_matrix(const std::vector<std::vector<double>>& rows) {
  int S = static_cast<int>(rows.size());
  MetricMatrix m(S);
  for (int i = 0; i < S; ++i)
    for (int j = 0; j < S; ++j)
      if (i != j) m.set(i, j, rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
  return m;
}

}  // namespace

TEST_CASE("psnr matches the textbook formula") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    nn::Tensor<float> a = random_image(rng, 8, 8);
    nn::Tensor<float> b = random_image(rng, 8, 8);
    CHECK(psnr(a, b) == doctest::Approx(psnr_reference(a, b, 1.0)).epsilon(0).scale(1).epsilon(1e-9));
  }
  nn::Tensor<float> x = random_image(rng, 8, 8);
  CHECK(psnr(x, x) == kPsnrCap);
  nn::Tensor<float> z = nn::Tensor<float>::zeros({4, 4});
  nn::Tensor<float> o = nn::Tensor<float>::full({4, 4}, 1.0f);
  CHECK(psnr(z, o) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("ssim matches a sliding window reference") {
  Rng rng(77);
  for (int trial = 0; trial < 5; ++trial) {
    nn::Tensor<float> a = random_image(rng, 16, 16);
    nn::Tensor<float> b = random_image(rng, 16, 16);
    double ref = ssim_reference(a, b, 1.0);
    CHECK(std::abs(ssim(a, b) - ref) < 1e-6);
  }
  nn::Tensor<float> a = random_image(rng, 16, 16);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-9));

  nn::Tensor<float> neg(a.shape);
  for (std::size_t k = 0; k < a.data.size(); ++k) neg.data[k] = 1.0f - a.data[k];
  CHECK(ssim(a, neg) < 0.2);
}

TEST_CASE("ssim averages planes and handles small images") {
  Rng rng(5);
  nn::Tensor<float> p0 = random_image(rng, 16, 16);
  nn::Tensor<float> q0 = random_image(rng, 16, 16);
  nn::Tensor<float> p1 = random_image(rng, 16, 16);
  nn::Tensor<float> q1 = random_image(rng, 16, 16);
  nn::Tensor<float> p({2, 1, 16, 16}), q({2, 1, 16, 16});
  std::copy(p0.data.begin(), p0.data.end(), p.data.begin());
  std::copy(p1.data.begin(), p1.data.end(), p.data.begin() + 256);
  std::copy(q0.data.begin(), q0.data.end(), q.data.begin());
  std::copy(q1.data.begin(), q1.data.end(), q.data.begin() + 256);
  CHECK(ssim(p, q) == doctest::Approx((ssim(p0, q0) + ssim(p1, q1)) / 2).epsilon(1e-12));

  WarnCapture wc;
  nn::Tensor<float> sa = random_image(rng, 8, 8);
  nn::Tensor<float> sb = random_image(rng, 8, 8);
  double v = ssim(sa, sb);
  CHECK(std::isfinite(v));
  CHECK(wc.saw("window"));
}

TEST_CASE("deep feature distance separates structure from brightness") {
  auto net = model::make_feature_net<float>(model::FeatureConfig{});
  toy::ToySubject s = toy::generate_subject(21, 64);
  nn::Tensor<float> x1 = as_input(s.x1);
  nn::Tensor<float> x2 = as_input(s.x2);

  CHECK(lpips_like(*net, x1, x1) == 0.0);
  CHECK(lpips_like(*net, x1, x2) == lpips_like(*net, x2, x1));

  nn::Tensor<float> offset = x1;
  for (float& v : offset.data) v += 0.01f;
  double glyph_swap = lpips_like(*net, x1, x2);
  double brightness = lpips_like(*net, x1, offset);
  CHECK(glyph_swap > brightness);
  CHECK(brightness > 0);
}

TEST_CASE("metric normalization is a population z-score over the support") {
  MetricMatrix m(2);
  m.set(0, 1, 1.0);
  m.set(1, 0, 3.0);
  MetricMatrix n = normalize_metric(m);
  CHECK(n.at(0, 1) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(n.at(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_FALSE(n.is_known(0, 0));

  WarnCapture wc;
  MetricMatrix c(3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) c.set(i, j, 4.2);
  MetricMatrix nc = normalize_metric(c);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) CHECK(nc.at(i, j) == 0.0);
  CHECK(wc.saw("constant"));

  Rng rng(9);
  MetricMatrix r(4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (i != j) r.set(i, j, rng.uniform(0, 10));
  MetricMatrix nr = normalize_metric(r);
  double mean = 0, var = 0;
  int cnt = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (i != j) {
        mean += nr.at(i, j);
        ++cnt;
      }
  mean /= cnt;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (i != j) var += (nr.at(i, j) - mean) * (nr.at(i, j) - mean) / cnt;
  CHECK(mean == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(var == doctest::Approx(1.0).epsilon(1e-12));

  MetricMatrix single(2);
  single.set(0, 1, 5.0);
  CHECK_THROWS_AS(normalize_metric(single), DataError);
}

TEST_CASE("pair accumulator averages per study metrics") {
  auto net = model::make_feature_net<float>(model::FeatureConfig{});
  Rng rng(13);
  PairAccumulator acc(2, *net);
  double psum = 0, ssum = 0, lsum = 0;
  std::vector<std::pair<nn::Tensor<float>, nn::Tensor<float>>> studies;
  for (int k = 0; k < 3; ++k)
    studies.emplace_back(random_image(rng, 16, 16).reshaped({1, 1, 16, 16}),
                         random_image(rng, 16, 16).reshaped({1, 1, 16, 16}));
  for (auto& [pred, target] : studies) {
    acc.add(0, 1, pred, target);
    acc.add(1, 0, random_image(rng, 16, 16).reshaped({1, 1, 16, 16}),
            random_image(rng, 16, 16).reshaped({1, 1, 16, 16}));
    psum += psnr(pred, target);
    ssum += ssim(pred, target);
    lsum += lpips_like(*net, pred, target);
  }
  AdjacencyMatrix adj = acc.finish();
  CHECK(adj.psnr.at(0, 1) == doctest::Approx(psum / 3).epsilon(1e-12));
  CHECK(adj.ssim.at(0, 1) == doctest::Approx(ssum / 3).epsilon(1e-12));
  CHECK(adj.lpips.at(0, 1) == doctest::Approx(lsum / 3).epsilon(1e-12));
  CHECK(adj.a.is_known(0, 1));
  CHECK(adj.a.at(0, 1) ==
        doctest::Approx(adj.npsnr.at(0, 1) + adj.nssim.at(0, 1) - adj.nlpips.at(0, 1))
            .epsilon(1e-12));
}

TEST_CASE("perfect translations collapse the adjacency matrix to zero") {
  auto net = model::make_feature_net<float>(model::FeatureConfig{});
  Rng rng(3);
  PairAccumulator acc(3, *net);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      if (i == j) continue;
      nn::Tensor<float> img = random_image(rng, 16, 16).reshaped({1, 1, 16, 16});
      acc.add(i, j, img, img);
    }
  WarnCapture wc;
  AdjacencyMatrix adj = acc.finish();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      if (i == j) continue;
      CHECK(adj.psnr.at(i, j) == kPsnrCap);
      CHECK(adj.ssim.at(i, j) == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(adj.lpips.at(i, j) == 0.0);
      CHECK(adj.a.at(i, j) == 0.0);
    }
  CHECK(wc.saw("constant"));

  CentralityReport rep = centrality(adj);
  for (int i = 0; i < 3; ++i) {
    CHECK(rep.c_t[static_cast<std::size_t>(i)] == 0.0);
    CHECK(rep.c_d[static_cast<std::size_t>(i)] == 0.0);
    CHECK(rep.rank_t[static_cast<std::size_t>(i)] == i + 1);
    CHECK(rep.rank_d[static_cast<std::size_t>(i)] == i + 1);
  }
}

TEST_CASE("centrality reproduces the hand worked example") {
  MetricMatrix a = off_diag_matrix({{0, 2, 1}, {0, 0, 1}, {0, 0, 0}});
  CentralityReport rep = centrality(a);
  CHECK(rep.c_t[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rep.c_t[1] == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(rep.c_t[2] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(rep.c_d[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(rep.c_d[1] == doctest::Approx(-2.0 / 3).epsilon(1e-12));
  CHECK(rep.c_d[2] == doctest::Approx(-2.0 / 3).epsilon(1e-12));
  CHECK(rep.rank_t == std::vector<int>{1, 2, 3});
  CHECK(rep.rank_d == std::vector<int>{1, 2, 3});  // tie between 1 and 2 keeps index order
}

TEST_CASE("centrality rejects missing support entries") {
  MetricMatrix a(3);
  a.set(0, 1, 1.0);
  a.set(1, 0, 2.0);  // (0,2), (2,0), (1,2), (2,1) missing
  try {
    centrality(a);
    CHECK(false);
  } catch (const DataError& e) {
    std::string msg = e.what();
    CHECK(msg.find("impute") != std::string::npos);
  }
}

TEST_CASE("centrality is permutation equivariant") {
  Rng rng(17);
  for (int S = 2; S <= 8; ++S) {
    MetricMatrix a(S);
    for (int i = 0; i < S; ++i)
      for (int j = 0; j < S; ++j)
        if (i != j) a.set(i, j, rng.uniform(-3, 3));
    std::vector<int> pi(static_cast<std::size_t>(S));
    std::iota(pi.begin(), pi.end(), 0);
    for (int i = S - 1; i > 0; --i)
      std::swap(pi[static_cast<std::size_t>(i)], pi[static_cast<std::size_t>(rng.uniform_int(i + 1))]);

    MetricMatrix ap(S);
    for (int i = 0; i < S; ++i)
      for (int j = 0; j < S; ++j)
        if (i != j)
          ap.set(pi[static_cast<std::size_t>(i)], pi[static_cast<std::size_t>(j)], a.at(i, j));

    CentralityReport r = centrality(a);
    CentralityReport rp = centrality(ap);
    for (int i = 0; i < S; ++i) {
      CHECK(rp.c_t[static_cast<std::size_t>(pi[static_cast<std::size_t>(i)])] ==
            r.c_t[static_cast<std::size_t>(i)]);
      CHECK(rp.c_d[static_cast<std::size_t>(pi[static_cast<std::size_t>(i)])] ==
            r.c_d[static_cast<std::size_t>(i)]);
      CHECK(rp.rank_t[static_cast<std::size_t>(pi[static_cast<std::size_t>(i)])] ==
            r.rank_t[static_cast<std::size_t>(i)]);
      CHECK(rp.rank_d[static_cast<std::size_t>(pi[static_cast<std::size_t>(i)])] ==
            r.rank_d[static_cast<std::size_t>(i)]);
    }
  }
}

TEST_CASE("constant shifts of a raw metric cancel in normalization") {
  Rng rng(41);
  MetricMatrix m(4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (i != j) m.set(i, j, rng.uniform(10, 40));
  MetricMatrix shifted = m;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (i != j) shifted.at(i, j) += 7.5;
  MetricMatrix n0 = normalize_metric(m);
  MetricMatrix n1 = normalize_metric(shifted);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (i != j) CHECK(n0.at(i, j) == doctest::Approx(n1.at(i, j)).epsilon(1e-10));
}

TEST_CASE("diff map from predictions follows the averaging rule") {
  nn::Tensor<float> target = nn::Tensor<float>::full({1, 1, 8, 8}, 0.5f);
  nn::Tensor<float> pred = nn::Tensor<float>::full({1, 1, 8, 8}, 0.3f);
  DiffMap d = diff_map_from({pred}, target, 2);
  CHECK(d.source_counts == 1);
  CHECK(d.map.shape == target.shape);
  for (float v : d.map.data) CHECK(v == doctest::Approx(0.1).epsilon(1e-7));

  DiffMap zero = diff_map_from({target, target}, target, 2);
  for (float v : zero.map.data) CHECK(v == 0.0f);

  Rng rng(8);
  nn::Tensor<float> p1 = random_image(rng, 8, 8).reshaped({1, 1, 8, 8});
  nn::Tensor<float> p2 = random_image(rng, 8, 8).reshaped({1, 1, 8, 8});
  nn::Tensor<float> p3 = random_image(rng, 8, 8).reshaped({1, 1, 8, 8});
  DiffMap ab = diff_map_from({p1, p2, p3}, target, 3);
  DiffMap ba = diff_map_from({p3, p1, p2}, target, 3);
  CHECK(nn::max_abs_diff(ab.map, ba.map) <= 1e-7);

  CHECK_THROWS_AS(diff_map_from({}, target, 2), DataError);
  nn::Tensor<float> small = nn::Tensor<float>::full({1, 1, 4, 4}, 0.f);
  CHECK_THROWS_AS(diff_map_from({small}, target, 2), ShapeError);
}

TEST_CASE("dataset level adjacency and diff maps run on toy subjects") {
  fs::path dir = fs::temp_directory_path() / "s2s_diffrep_toy";
  fs::remove_all(dir);
  fs::create_directories(dir);
  toy::ToyGenConfig g;
  g.n = 3;
  g.seed = 19;
  g.split = {3, 0, 0};
  g.out_dir = dir.string();
  g.image_size = 64;
  toy::generate_dataset(g);

  train::DatasetIndex idx = train::load_dataset_index((dir / "manifest.json").string());
  train::SlabLoader loader(idx);
  model::GeneratorConfig gc;
  gc.S = 2;
  gc.in_channels = 1;
  gc.base_channels = 4;
  gc.n_residual_blocks = 1;
  gc.n_hyper_residual_blocks = 1;
  gc.c_w = 8;
  Rng rng(2);
  model::Generator<float> gen(gc, rng);
  auto net = model::make_feature_net<float>(model::FeatureConfig{});

  std::vector<int> subjects{0, 1, 2};
  AdjacencyMatrix adj = build_adjacency(gen, loader, subjects, *net);
  CHECK(adj.S == 2);
  CHECK(adj.psnr.is_known(0, 1));
  CHECK(adj.psnr.is_known(1, 0));
  CHECK_FALSE(adj.psnr.is_known(0, 0));  // diagonal skipped under exclude
  CHECK(adj.a.is_known(0, 1));
  CHECK(std::isfinite(adj.a.at(0, 1)));

  // subject order must not matter: reduction is sorted by id internally
  AdjacencyMatrix adj2 = build_adjacency(gen, loader, {2, 0, 1}, *net);
  CHECK(adj2.psnr.at(0, 1) == adj.psnr.at(0, 1));
  CHECK(adj2.lpips.at(1, 0) == adj.lpips.at(1, 0));

  DiffMap d = diff_map(gen, loader, 0, 1);
  CHECK(d.source_counts == 1);
  CHECK(d.map.shape == std::vector<int>{1, 1, 64, 64});
  for (float v : d.map.data) CHECK(v >= 0.0f);

  train::DatasetIndex broken = idx;
  broken.subjects[0].available[0] = 0;
  train::SlabLoader loader2(broken);
  CHECK_THROWS_AS(diff_map(gen, loader2, 0, 0), DataError);   // target missing
  CHECK_THROWS_AS(diff_map(gen, loader2, 0, 1), DataError);   // no sources left
}
