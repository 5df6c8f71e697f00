#include "seq2seq/analysis/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>

#include "seq2seq/io/png_io.hpp"
#include "seq2seq/log.hpp"
#include "seq2seq/nn/graph.hpp"

namespace seq2seq::analysis {

std::string to_string(Variant v) {
  return v == Variant::baseline ? "baseline" : "baseline_plus_md";
}

std::string to_string(TargetLabel t) {
  return t == TargetLabel::label1 ? "label1" : "label2";
}

Variant variant_from_string(const std::string& s) {
  if (s == "baseline") return Variant::baseline;
  if (s == "baseline_plus_md") return Variant::baseline_plus_md;
  throw ConfigError("variant must be 'baseline' or 'baseline_plus_md', got '" + s + "'");
}

TargetLabel target_from_string(const std::string& s) {
  if (s == "label1") return TargetLabel::label1;
  if (s == "label2") return TargetLabel::label2;
  throw ConfigError("target must be 'label1' or 'label2', got '" + s + "'");
}

void ExperimentSpec::validate() const {
  if (sample_sizes.empty()) throw ConfigError("experiment needs at least one sample size");
  for (int n : sample_sizes)
    if (n < 1) throw ConfigError("sample sizes must be positive");
  if (seeds.empty()) throw ConfigError("experiment needs at least one seed");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (base_channels < 1 || stages < 1) throw ConfigError("classifier dimensions must be positive");
  if (learning_rate <= 0) throw ConfigError("learning rate must be positive");
  if (classes < 2) throw ConfigError("need at least 2 classes");
}

Json ExperimentSpec::to_json() const {
  Json seeds_j = Json::array();
  for (std::uint64_t s : seeds) seeds_j.push_back(s);
  return Json{{"variant", to_string(variant)},
              {"sample_sizes", sample_sizes},
              {"seeds", seeds_j},
              {"epochs", epochs},
              {"batch_size", batch_size},
              {"target", to_string(target)},
              {"base_channels", base_channels},
              {"stages", stages},
              {"learning_rate", learning_rate},
              {"classes", classes}};
}

ExperimentSpec ExperimentSpec::from_json(const Json& j) {
  check_known_keys(j,
                   {"variant", "sample_sizes", "seeds", "epochs", "batch_size", "target",
                    "base_channels", "stages", "learning_rate", "classes"},
                   "experiment spec");
  ExperimentSpec s;
  s.variant = variant_from_string(get_or<std::string>(j, "variant", to_string(s.variant)));
  s.sample_sizes = get_or<std::vector<int>>(j, "sample_sizes", s.sample_sizes);
  if (j.contains("seeds")) {
    s.seeds.clear();
    for (const auto& v : j.at("seeds")) s.seeds.push_back(v.get<std::uint64_t>());
  }
  s.epochs = get_or<int>(j, "epochs", s.epochs);
  s.batch_size = get_or<int>(j, "batch_size", s.batch_size);
  s.target = target_from_string(get_or<std::string>(j, "target", to_string(s.target)));
  s.base_channels = get_or<int>(j, "base_channels", s.base_channels);
  s.stages = get_or<int>(j, "stages", s.stages);
  s.learning_rate = get_or<double>(j, "learning_rate", s.learning_rate);
  s.classes = get_or<int>(j, "classes", s.classes);
  s.validate();
  return s;
}

double md_scale_from(const std::vector<nn::Tensor<float>>& maps) {
  std::vector<float> pool;
  for (const auto& m : maps) pool.insert(pool.end(), m.data.begin(), m.data.end());
  if (pool.empty()) throw DataError("no map values to compute a scale from");
  std::sort(pool.begin(), pool.end());
  std::size_t rank = static_cast<std::size_t>(
      std::ceil(0.99 * static_cast<double>(pool.size())));
  double scale = pool[rank - 1];
  if (scale <= 0) {
    warn("map scale: 99th percentile is zero, falling back to 1");
    return 1.0;
  }
  return scale;
}

namespace {

nn::Tensor<float> as_plane(const nn::Tensor<float>& t, const char* what) {
  if (t.ndim() == 2) return t;
  if (t.ndim() == 4 && t.dim(0) == 1 && t.dim(1) == 1)
    return t.reshaped({t.dim(2), t.dim(3)});
  throw ShapeError(std::string(what) + " must be (H, W) or (1, 1, H, W), got " + t.shape_str());
}

}  // namespace

nn::Tensor<float> build_inputs(const nn::Tensor<float>& x1, const nn::Tensor<float>& x2,
                               const nn::Tensor<float>* md1, const nn::Tensor<float>* md2,
                               Variant v, double md_scale) {
  nn::Tensor<float> a = as_plane(x1, "x1");
  nn::Tensor<float> b = as_plane(x2, "x2");
  if (!a.same_shape(b)) throw ShapeError("x1 and x2 shapes differ");
  int h = a.dim(0), w = a.dim(1);
  int channels = v == Variant::baseline ? 2 : 4;
  nn::Tensor<float> out({channels, h, w});
  std::size_t plane = static_cast<std::size_t>(h) * w;
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<long>(plane));
  if (v == Variant::baseline) return out;

  if (!md1 || !md2)
    throw ConfigError("the map variant needs both differentiation maps; run a trained "
                      "generator to produce them");
  if (md_scale <= 0) throw ConfigError("map scale must be positive");
  nn::Tensor<float> m1 = as_plane(*md1, "md1");
  nn::Tensor<float> m2 = as_plane(*md2, "md2");
  if (!m1.same_shape(a) || !m2.same_shape(a)) throw ShapeError("map shapes differ from images");
  float inv = static_cast<float>(1.0 / md_scale);
  for (std::size_t k = 0; k < plane; ++k) {
    out.data[2 * plane + k] = m1.data[k] * inv;
    out.data[3 * plane + k] = m2.data[k] * inv;
  }
  return out;
}

template <typename T>
ResidualClassifier<T>::ResidualClassifier(const ExperimentSpec& spec, int in_channels, Rng& rng)
    : in_channels_(in_channels) {
  int base = spec.base_channels;
  stem_ = nn::Conv2dLayer<T>("stem", rng, base, in_channels, 3, 1, false);
  stem_norm_ = nn::InstanceNormLayer<T>("stem_n", base);
  int ch = base;
  for (int s = 0; s < spec.stages; ++s) {
    Stage st;
    std::string nm = "stage" + std::to_string(s);
    // downsample in the first two stages only: deeper stages keep the grid
    // fine enough for max pooling to localize small structures
    if (s < 2) {
      int out_ch = std::min(base * 8, ch * 2);
      st.down = nn::Conv2dLayer<T>(nm + ".down", rng, out_ch, ch, 3, 2, false);
      st.nd = nn::InstanceNormLayer<T>(nm + ".nd", out_ch);
      ch = out_ch;
    }
    st.c1 = nn::Conv2dLayer<T>(nm + ".c1", rng, ch, ch, 3, 1, false);
    st.n1 = nn::InstanceNormLayer<T>(nm + ".n1", ch);
    st.c2 = nn::Conv2dLayer<T>(nm + ".c2", rng, ch, ch, 3, 1, false);
    st.n2 = nn::InstanceNormLayer<T>(nm + ".n2", ch);
    stages_.push_back(std::move(st));
  }
  head_ = nn::LinearLayer<T>("head", rng, spec.classes, ch);
}

template <typename T>
nn::Val<T> ResidualClassifier<T>::forward(nn::Tape<T>& t, nn::Val<T> x) {
  // standardize each input channel per sample: raw grays and map channels
  // arrive at very different contrasts, and the stronger ones would otherwise
  // dominate the stem's early gradients
  nn::Tensor<T> one({in_channels_}), zero({in_channels_});
  std::fill(one.data.begin(), one.data.end(), T(1));
  std::fill(zero.data.begin(), zero.data.end(), T(0));
  x = instance_norm(x, t.constant(one), t.constant(zero));
  nn::Val<T> h = relu(stem_norm_.forward(t, stem_.forward(t, x)));
  for (auto& st : stages_) {
    if (st.down) h = relu(st.nd->forward(t, st.down->forward(t, h)));
    nn::Val<T> r = st.n2.forward(t, st.c2.forward(t, relu(st.n1.forward(t, st.c1.forward(t, h)))));
    h = relu(add(h, r));
  }
  // max pooling: the informative glyph covers few cells, mean pooling would
  // dilute it by the plane size
  return head_.forward(t, global_max_hw(h));
}

template <typename T>
void ResidualClassifier<T>::collect(nn::ParamList<T>& out) {
  stem_.collect(out);
  stem_norm_.collect(out);
  for (auto& st : stages_) {
    if (st.down) st.down->collect(out);
    if (st.nd) st.nd->collect(out);
    st.c1.collect(out);
    st.n1.collect(out);
    st.c2.collect(out);
    st.n2.collect(out);
  }
  head_.collect(out);
}

template class ResidualClassifier<float>;
template class ResidualClassifier<double>;

namespace {

// (B, C, H, W) batch plus labels for the given indices
std::pair<nn::Tensor<float>, std::vector<int>> assemble(const SampleSource& src,
                                                        const std::vector<int>& idx, int lo,
                                                        int hi) {
  ClassifierSample first = src.get(idx[static_cast<std::size_t>(lo)]);
  if (first.input.ndim() != 3) throw ShapeError("classifier samples must be (C, H, W)");
  int c = first.input.dim(0), h = first.input.dim(1), w = first.input.dim(2);
  int bsz = hi - lo;
  nn::Tensor<float> batch({bsz, c, h, w});
  std::vector<int> labels(static_cast<std::size_t>(bsz));
  std::size_t stride = first.input.data.size();
  for (int k = 0; k < bsz; ++k) {
    ClassifierSample s = k == 0 ? std::move(first) : src.get(idx[static_cast<std::size_t>(lo + k)]);
    if (s.input.data.size() != stride) throw ShapeError("classifier sample shapes differ");
    std::copy(s.input.data.begin(), s.input.data.end(),
              batch.ptr() + static_cast<std::size_t>(k) * stride);
    labels[static_cast<std::size_t>(k)] = s.label;
  }
  return {std::move(batch), std::move(labels)};
}

}  // namespace

double evaluate_accuracy(ResidualClassifier<float>& model, const SampleSource& test,
                         int batch_size) {
  if (test.size < 1) throw ConfigError("empty test set");
  std::vector<int> idx(static_cast<std::size_t>(test.size));
  std::iota(idx.begin(), idx.end(), 0);
  long correct = 0;
  for (int lo = 0; lo < test.size; lo += batch_size) {
    int hi = std::min(test.size, lo + batch_size);
    auto [batch, labels] = assemble(test, idx, lo, hi);
    nn::Tape<float> t(false);
    nn::Tensor<float> logits = model.forward(t, t.constant(batch)).value();
    int k = logits.dim(1);
    for (int i = 0; i < hi - lo; ++i) {
      const float* row = logits.ptr() + static_cast<std::size_t>(i) * k;
      int best = 0;
      for (int j = 1; j < k; ++j)
        if (row[j] > row[best]) best = j;
      if (best == labels[static_cast<std::size_t>(i)]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(test.size);
}

FitResult train_classifier(const ExperimentSpec& spec, const SampleSource& train,
                           const SampleSource& test, std::uint64_t seed) {
  spec.validate();
  if (train.size < 1) throw ConfigError("empty training set");
  int in_channels = train.get(0).input.dim(0);

  Rng init = Rng(seed).fork("classifier");
  ResidualClassifier<float> model(spec, in_channels, init);
  nn::Adam<float> opt(model.params(),
                      nn::AdamConfig<float>{static_cast<float>(spec.learning_rate), 0.9f, 0.999f,
                                            1e-8f});

  FitResult res;
  std::vector<int> order(static_cast<std::size_t>(train.size));
  std::iota(order.begin(), order.end(), 0);
  long steps_per_epoch = (train.size + spec.batch_size - 1) / spec.batch_size;
  long total_steps = steps_per_epoch * spec.epochs;
  long step = 0;
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    Rng shuffle = Rng(seed).fork("order").fork(static_cast<std::uint64_t>(epoch) + 1);
    for (int i = train.size - 1; i > 0; --i)
      std::swap(order[static_cast<std::size_t>(i)],
                order[static_cast<std::size_t>(shuffle.uniform_int(i + 1))]);
    double loss_sum = 0;
    int batches = 0;
    for (int lo = 0; lo < train.size; lo += spec.batch_size) {
      int hi = std::min(train.size, lo + spec.batch_size);
      auto [batch, labels] = assemble(train, order, lo, hi);
      nn::Tape<float> t;
      nn::Val<float> ce = softmax_cross_entropy(model.forward(t, t.constant(batch)), labels);
      t.backward(ce);
      // linear decay to a tenth of the base rate over the run
      double frac = total_steps > 1 ? static_cast<double>(step) / (total_steps - 1) : 0.0;
      opt.config().lr = static_cast<float>(spec.learning_rate * (1.0 - 0.9 * frac));
      opt.step();
      opt.zero_grad();
      loss_sum += static_cast<double>(ce.value().data[0]);
      ++batches;
      ++step;
    }
    res.epoch_losses.push_back(loss_sum / batches);
  }
  res.test_accuracy = evaluate_accuracy(model, test, std::max(spec.batch_size, 64));
  return res;
}

namespace {

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(10);
  ss << v;
  return ss.str();
}

// minimal line plot: accuracy in [0, 1] against sample size, one polyline per
// variant (baseline dark, map variant light)
void render_curve_png(const CurveResult& curve, const std::vector<int>& sizes,
                      const std::string& path) {
  const int W = 480, H = 320, ml = 48, mr = 16, mt = 16, mb = 36;
  nn::Tensor<float> img({3, H, W});
  std::fill(img.data.begin(), img.data.end(), 1.0f);
  auto put = [&](int y, int x, float r, float g, float b) {
    if (y < 0 || y >= H || x < 0 || x >= W) return;
    std::size_t plane = static_cast<std::size_t>(H) * W;
    img.data[static_cast<std::size_t>(y) * W + x] = r;
    img.data[plane + static_cast<std::size_t>(y) * W + x] = g;
    img.data[2 * plane + static_cast<std::size_t>(y) * W + x] = b;
  };
  for (int x = ml; x < W - mr; ++x) put(H - mb, x, 0, 0, 0);
  for (int y = mt; y < H - mb; ++y) put(y, ml, 0, 0, 0);
  // accuracy gridlines every 0.25
  for (int q = 1; q <= 4; ++q) {
    int y = H - mb - static_cast<int>((H - mb - mt) * 0.25 * q);
    for (int x = ml; x < W - mr; x += 3) put(y, x, 0.8f, 0.8f, 0.8f);
  }
  int smin = sizes.front(), smax = sizes.back();
  auto px = [&](int size) {
    double f = smax == smin ? 0.5
                            : (static_cast<double>(size) - smin) / (smax - smin);
    return ml + static_cast<int>(f * (W - ml - mr - 1));
  };
  auto py = [&](double acc) { return H - mb - static_cast<int>(acc * (H - mb - mt - 1)); };
  auto line = [&](int x0, int y0, int x1, int y1, float r, float g, float b) {
    int steps = std::max(std::abs(x1 - x0), std::abs(y1 - y0)) + 1;
    for (int s = 0; s <= steps; ++s) {
      double f = static_cast<double>(s) / steps;
      int x = x0 + static_cast<int>(std::lround(f * (x1 - x0)));
      int y = y0 + static_cast<int>(std::lround(f * (y1 - y0)));
      put(y, x, r, g, b);
      put(y + 1, x, r, g, b);
    }
  };
  auto draw = [&](const std::vector<CurvePoint>& pts, float r, float g, float b) {
    int px0 = -1, py0 = -1;
    for (const auto& p : pts) {
      if (p.per_seed.empty()) {
        px0 = -1;  // gap breaks the polyline
        continue;
      }
      int x = px(p.sample_size), y = py(p.mean_accuracy);
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) put(y + dy, x + dx, r, g, b);
      if (px0 >= 0) line(px0, py0, x, y, r, g, b);
      px0 = x;
      py0 = y;
    }
  };
  draw(curve.baseline, 0.1f, 0.1f, 0.6f);
  draw(curve.with_md, 0.8f, 0.2f, 0.1f);
  io::save_png_rgb(img, path);
}

}  // namespace

CurveResult accuracy_curve(const ExperimentSpec& spec,
                           const std::function<SampleSource(Variant, int)>& train_source,
                           const std::function<SampleSource(Variant)>& test_source,
                           const std::string& out_dir) {
  spec.validate();
  CurveResult curve;
  curve.target = spec.target;

  CsvWriter per_seed;
  bool writing = !out_dir.empty();
  if (writing) {
    std::filesystem::create_directories(out_dir);
    per_seed.open(out_dir + "/classify_runs.csv",
                  {"variant", "target", "sample_size", "seed", "accuracy"});
  }

  for (Variant v : {Variant::baseline, Variant::baseline_plus_md}) {
    SampleSource test = test_source(v);
    for (int size : spec.sample_sizes) {
      CurvePoint pt;
      pt.sample_size = size;
      try {
        SampleSource train = train_source(v, size);
        if (train.size < size)
          throw ConfigError("sample size " + std::to_string(size) + " exceeds the " +
                            std::to_string(train.size) + " available training subjects");
        train.size = size;
        for (std::uint64_t seed : spec.seeds) {
          ExperimentSpec cell = spec;
          cell.variant = v;
          FitResult fit = train_classifier(cell, train, test, seed);
          pt.per_seed.push_back(fit.test_accuracy);
          if (writing)
            per_seed.write_row({to_string(v), to_string(spec.target), std::to_string(size),
                                std::to_string(seed), fmt(fit.test_accuracy)});
        }
        pt.mean_accuracy =
            std::accumulate(pt.per_seed.begin(), pt.per_seed.end(), 0.0) /
            static_cast<double>(pt.per_seed.size());
      } catch (const ConfigError& e) {
        warn(std::string("curve cell skipped: ") + e.what());
        pt.mean_accuracy = std::numeric_limits<double>::quiet_NaN();
      }
      (v == Variant::baseline ? curve.baseline : curve.with_md).push_back(pt);
    }
  }

  for (std::size_t k = 0; k < spec.sample_sizes.size(); ++k) {
    const CurvePoint& a = curve.baseline[k];
    const CurvePoint& b = curve.with_md[k];
    curve.deltas.push_back(a.per_seed.empty() || b.per_seed.empty()
                               ? std::numeric_limits<double>::quiet_NaN()
                               : b.mean_accuracy - a.mean_accuracy);
  }

  if (writing) {
    CsvWriter agg;
    agg.open(out_dir + "/classify_curve.csv",
             {"sample_size", "baseline_mean", "with_md_mean", "delta"});
    for (std::size_t k = 0; k < spec.sample_sizes.size(); ++k) {
      const CurvePoint& a = curve.baseline[k];
      const CurvePoint& b = curve.with_md[k];
      agg.write_row({std::to_string(spec.sample_sizes[k]),
                     a.per_seed.empty() ? "gap" : fmt(a.mean_accuracy),
                     b.per_seed.empty() ? "gap" : fmt(b.mean_accuracy),
                     std::isnan(curve.deltas[k]) ? "gap" : fmt(curve.deltas[k])});
    }
    render_curve_png(curve, spec.sample_sizes, out_dir + "/classify_curve.png");
  }
  return curve;
}

}  // namespace seq2seq::analysis
