#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "seq2seq/analysis/downstream.hpp"
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

// in-memory toy subjects; the idealized map marks the differing glyph slot
ClassifierSample toy_sample(std::uint64_t subject_seed, bool with_md, TargetLabel target) {
  toy::ToySubject s = toy::generate_subject(subject_seed, 64);
  int label = target == TargetLabel::label1 ? s.label1 : s.label2;
  if (!with_md)
    return {build_inputs(s.x1.data, s.x2.data, nullptr, nullptr, Variant::baseline, 1.0), label};
  nn::Tensor<float> mask = toy::difference_mask(s);
  return {build_inputs(s.x1.data, s.x2.data, &mask, &mask, Variant::baseline_plus_md, 1.0), label};
}

SampleSource toy_source(int size, std::uint64_t base_seed, bool with_md, TargetLabel target) {
  SampleSource src;
  src.size = size;
  src.get = [=](int i) { return toy_sample(base_seed + static_cast<std::uint64_t>(i), with_md, target); };
  return src;
}

ExperimentSpec small_spec() {
  ExperimentSpec s;
  s.sample_sizes = {32};
  s.seeds = {1};
  s.epochs = 1;
  s.batch_size = 16;
  s.base_channels = 4;
  s.stages = 2;
  return s;
}

}  // namespace

TEST_CASE("experiment spec validation and json round trip") {
  ExperimentSpec s;
  s.sample_sizes = {100, 300};
  s.seeds = {7, 8};
  s.variant = Variant::baseline_plus_md;
  s.target = TargetLabel::label2;
  ExperimentSpec back = ExperimentSpec::from_json(s.to_json());
  CHECK(back.sample_sizes == s.sample_sizes);
  CHECK(back.seeds == s.seeds);
  CHECK(back.variant == Variant::baseline_plus_md);
  CHECK(back.target == TargetLabel::label2);
  CHECK(back.epochs == s.epochs);

  ExperimentSpec bad = s;
  bad.sample_sizes = {};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = s;
  bad.seeds = {};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = s;
  bad.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  CHECK_THROWS_AS(variant_from_string("resnet"), ConfigError);
  CHECK_THROWS_AS(target_from_string("label3"), ConfigError);
  Json j = s.to_json();
  j["momentum"] = 0.9;
  CHECK_THROWS_AS(ExperimentSpec::from_json(j), ConfigError);
}

TEST_CASE("map scale is the pooled 99th percentile") {
  nn::Tensor<float> m({10, 10});
  for (int k = 0; k < 100; ++k) m.data[static_cast<std::size_t>(k)] = (k + 1) * 0.01f;
  CHECK(md_scale_from({m}) == doctest::Approx(0.99).epsilon(1e-7));

  nn::Tensor<float> z = nn::Tensor<float>::zeros({4, 4});
  WarnCapture wc;
  CHECK(md_scale_from({z}) == 1.0);
  CHECK(wc.saw("percentile"));

  CHECK_THROWS_AS(md_scale_from({}), DataError);
}

TEST_CASE("input stacking fixes the channel order") {
  nn::Tensor<float> x1 = nn::Tensor<float>::full({8, 8}, 0.25f);
  nn::Tensor<float> x2 = nn::Tensor<float>::full({8, 8}, 0.75f);
  nn::Tensor<float> md = nn::Tensor<float>::full({8, 8}, 0.5f);

  nn::Tensor<float> base = build_inputs(x1, x2, nullptr, nullptr, Variant::baseline, 1.0);
  CHECK(base.shape == std::vector<int>{2, 8, 8});
  CHECK(base.data[0] == 0.25f);
  CHECK(base.data[64] == 0.75f);

  nn::Tensor<float> full = build_inputs(x1, x2, &md, &md, Variant::baseline_plus_md, 2.0);
  CHECK(full.shape == std::vector<int>{4, 8, 8});
  CHECK(full.data[2 * 64] == 0.25f);  // maps rescaled by the global constant
  CHECK(full.data[3 * 64] == 0.25f);

  nn::Tensor<float> swapped = build_inputs(x2, x1, nullptr, nullptr, Variant::baseline, 1.0);
  CHECK(nn::max_abs_diff(base, swapped) > 0.1);

  nn::Tensor<float> x1_4d = x1.reshaped({1, 1, 8, 8});
  nn::Tensor<float> same = build_inputs(x1_4d, x2, nullptr, nullptr, Variant::baseline, 1.0);
  CHECK(nn::max_abs_diff(base, same) == 0.0f);

  CHECK_THROWS_AS(build_inputs(x1, x2, nullptr, nullptr, Variant::baseline_plus_md, 1.0),
                  ConfigError);
  CHECK_THROWS_AS(build_inputs(x1, x2, &md, &md, Variant::baseline_plus_md, 0.0), ConfigError);
}

TEST_CASE("untrained classifier sits at chance level") {
  ExperimentSpec spec = small_spec();
  spec.stages = 3;
  Rng rng(99);
  ResidualClassifier<float> model(spec, 2, rng);
  SampleSource test = toy_source(10000, 500000, false, TargetLabel::label1);
  double acc = evaluate_accuracy(model, test, 256);
  CHECK(std::abs(acc - 1.0 / 26) <= 0.02);
}

TEST_CASE("training is deterministic per seed") {
  ExperimentSpec spec = small_spec();
  spec.epochs = 2;
  SampleSource train = toy_source(64, 1000, false, TargetLabel::label1);
  SampleSource test = toy_source(64, 2000, false, TargetLabel::label1);
  FitResult a = train_classifier(spec, train, test, 42);
  FitResult b = train_classifier(spec, train, test, 42);
  CHECK(a.test_accuracy == b.test_accuracy);
  CHECK(a.epoch_losses == b.epoch_losses);
  FitResult c = train_classifier(spec, train, test, 43);
  CHECK((c.test_accuracy != a.test_accuracy || c.epoch_losses != a.epoch_losses));
}

TEST_CASE("test stream is read only after training") {
  ExperimentSpec spec = small_spec();
  spec.epochs = 2;
  SampleSource train = toy_source(32, 3000, false, TargetLabel::label1);
  SampleSource raw_test = toy_source(48, 4000, false, TargetLabel::label1);
  auto reads = std::make_shared<int>(0);
  SampleSource test;
  test.size = raw_test.size;
  test.get = [=](int i) {
    ++*reads;
    return raw_test.get(i);
  };
  train_classifier(spec, train, test, 1);
  CHECK(*reads == 48);  // exactly one evaluation pass, none during epochs
}

TEST_CASE("accuracy ignores test set order") {
  ExperimentSpec spec = small_spec();
  Rng rng(7);
  ResidualClassifier<float> model(spec, 2, rng);
  SampleSource test = toy_source(200, 6000, false, TargetLabel::label2);

  std::vector<int> perm(200);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = 199; i > 0; --i)
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(rng.uniform_int(i + 1))]);
  SampleSource shuffled;
  shuffled.size = 200;
  shuffled.get = [=](int i) { return test.get(perm[static_cast<std::size_t>(i)]); };

  CHECK(evaluate_accuracy(model, test, 64) == evaluate_accuracy(model, shuffled, 64));
}

TEST_CASE("map channels make the toy labels learnable") {
  ExperimentSpec spec;
  spec.sample_sizes = {1000};
  spec.epochs = 10;
  spec.target = TargetLabel::label1;
  SampleSource train = toy_source(1000, 10000, true, TargetLabel::label1);
  SampleSource test = toy_source(500, 90000, true, TargetLabel::label1);
  FitResult fit = train_classifier(spec, train, test, 3);
  CHECK(fit.test_accuracy > 0.5);
  CHECK(fit.epoch_losses.front() > fit.epoch_losses.back());
}

TEST_CASE("accuracy curve emits grids, deltas, and plots") {
  fs::path dir = fs::temp_directory_path() / "s2s_downstream_curve";
  fs::remove_all(dir);

  ExperimentSpec spec = small_spec();
  spec.sample_sizes = {24, 48};
  spec.seeds = {1, 2};
  auto train_source = [](Variant v, int) {
    return toy_source(48, 7000, v == Variant::baseline_plus_md, TargetLabel::label1);
  };
  auto test_source = [](Variant v) {
    return toy_source(64, 8000, v == Variant::baseline_plus_md, TargetLabel::label1);
  };
  CurveResult curve = accuracy_curve(spec, train_source, test_source, dir.string());

  REQUIRE(curve.baseline.size() == 2);
  REQUIRE(curve.with_md.size() == 2);
  REQUIRE(curve.deltas.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(curve.baseline[k].per_seed.size() == 2);
    for (double a : curve.baseline[k].per_seed) {
      CHECK(a >= 0.0);
      CHECK(a <= 1.0);
    }
    CHECK(curve.deltas[k] ==
          doctest::Approx(curve.with_md[k].mean_accuracy - curve.baseline[k].mean_accuracy)
              .epsilon(1e-12));
  }

  CHECK(fs::exists(dir / "classify_runs.csv"));
  CHECK(fs::exists(dir / "classify_curve.csv"));
  CHECK(fs::exists(dir / "classify_curve.png"));

  // the aggregate deltas must equal means recomputed from the per-seed rows
  std::ifstream runs((dir / "classify_runs.csv").string());
  std::string line;
  std::getline(runs, line);
  std::map<std::pair<std::string, int>, std::vector<double>> cells;
  while (std::getline(runs, line)) {
    std::stringstream ss(line);
    std::string variant, target, size, seed, acc;
    std::getline(ss, variant, ',');
    std::getline(ss, target, ',');
    std::getline(ss, size, ',');
    std::getline(ss, seed, ',');
    std::getline(ss, acc, ',');
    cells[{variant, std::stoi(size)}].push_back(std::stod(acc));
  }
  for (std::size_t k = 0; k < 2; ++k) {
    int size = spec.sample_sizes[k];
    auto mean = [&](const std::string& v) {
      const auto& xs = cells.at({v, size});
      return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    };
    CHECK(curve.deltas[k] ==
          doctest::Approx(mean("baseline_plus_md") - mean("baseline")).epsilon(1e-9));
  }
}

TEST_CASE("identical inputs for both variants give zero delta") {
  ExperimentSpec spec = small_spec();
  spec.sample_sizes = {24};
  auto train_source = [](Variant, int) { return toy_source(24, 11000, false, TargetLabel::label1); };
  auto test_source = [](Variant) { return toy_source(32, 12000, false, TargetLabel::label1); };
  CurveResult curve = accuracy_curve(spec, train_source, test_source, "");
  CHECK(curve.deltas[0] == 0.0);  // same inputs, same seed, same arithmetic
}

TEST_CASE("oversized sample requests leave explicit gaps") {
  fs::path dir = fs::temp_directory_path() / "s2s_downstream_gap";
  fs::remove_all(dir);

  ExperimentSpec spec = small_spec();
  spec.sample_sizes = {16, 4000};
  auto train_source = [](Variant v, int) {
    return toy_source(32, 13000, v == Variant::baseline_plus_md, TargetLabel::label1);
  };
  auto test_source = [](Variant v) {
    return toy_source(32, 14000, v == Variant::baseline_plus_md, TargetLabel::label1);
  };
  WarnCapture wc;
  CurveResult curve = accuracy_curve(spec, train_source, test_source, dir.string());
  CHECK(curve.baseline[0].per_seed.size() == 1);
  CHECK(curve.baseline[1].per_seed.empty());
  CHECK(std::isnan(curve.deltas[1]));
  CHECK_FALSE(std::isnan(curve.deltas[0]));
  CHECK(wc.saw("exceeds"));

  std::ifstream agg((dir / "classify_curve.csv").string());
  std::string all((std::istreambuf_iterator<char>(agg)), std::istreambuf_iterator<char>());
  CHECK(all.find("gap") != std::string::npos);
}
