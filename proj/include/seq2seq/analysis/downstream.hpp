#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "seq2seq/config.hpp"
#include "seq2seq/nn/layers.hpp"

namespace seq2seq::analysis {

enum class Variant { baseline, baseline_plus_md };
enum class TargetLabel { label1, label2 };

std::string to_string(Variant v);
std::string to_string(TargetLabel t);
Variant variant_from_string(const std::string& s);
TargetLabel target_from_string(const std::string& s);

// One grid of classifier runs: sizes x seeds for one target. The variant
// field selects the input stack for single runs; the curve runs both.
struct ExperimentSpec {
  Variant variant = Variant::baseline;
  std::vector<int> sample_sizes;
  std::vector<std::uint64_t> seeds = {1};
  int epochs = 10;
  int batch_size = 8;
  TargetLabel target = TargetLabel::label1;
  int base_channels = 6;
  int stages = 4;
  double learning_rate = 3e-3;
  int classes = 26;

  void validate() const;
  Json to_json() const;
  static ExperimentSpec from_json(const Json& j);
};

struct CurvePoint {
  int sample_size = 0;
  double mean_accuracy = 0;
  std::vector<double> per_seed;
};

// Global constant for scaling diff-map channels: the 99th percentile
// (nearest-rank) of all values pooled over the training split's maps.
// Degenerate all-zero maps give 1 with a warning.
double md_scale_from(const std::vector<nn::Tensor<float>>& maps);

// Stacks the classifier input channels in the fixed order X1, X2, then the
// rescaled maps M_d(X1), M_d(X2) for the map variant. Inputs may be (H, W) or
// (1, 1, H, W); the result is (C, H, W).
nn::Tensor<float> build_inputs(const nn::Tensor<float>& x1, const nn::Tensor<float>& x2,
                               const nn::Tensor<float>* md1, const nn::Tensor<float>* md2,
                               Variant v, double md_scale);

struct ClassifierSample {
  nn::Tensor<float> input;  // (C, H, W)
  int label = 0;
};

// Deterministic random-access sample stream; get(i) must return the same
// sample for the same i every time.
struct SampleSource {
  int size = 0;
  std::function<ClassifierSample(int)> get;
};

// Narrow residual network: stem conv, then `stages` residual stages (the
// first two halve the grid and double the width, the rest keep both), global
// max pooling, and a linear head.
template <typename T>
class ResidualClassifier {
 public:
  ResidualClassifier(const ExperimentSpec& spec, int in_channels, Rng& rng);

  nn::Val<T> forward(nn::Tape<T>& t, nn::Val<T> x);
  void collect(nn::ParamList<T>& out);
  nn::ParamList<T> params() {
    nn::ParamList<T> out;
    collect(out);
    return out;
  }
  int in_channels() const { return in_channels_; }

 private:
  struct Stage {
    std::optional<nn::Conv2dLayer<T>> down;
    std::optional<nn::InstanceNormLayer<T>> nd;
    nn::Conv2dLayer<T> c1, c2;
    nn::InstanceNormLayer<T> n1, n2;
  };
  int in_channels_ = 0;
  nn::Conv2dLayer<T> stem_;
  nn::InstanceNormLayer<T> stem_norm_;
  std::vector<Stage> stages_;
  nn::LinearLayer<T> head_;
};

struct FitResult {
  double test_accuracy = 0;
  std::vector<double> epoch_losses;
};

// Builds a classifier seeded by `seed`, trains it on `train`, and reports
// accuracy on `test`. The test stream is read only after the last epoch.
FitResult train_classifier(const ExperimentSpec& spec, const SampleSource& train,
                           const SampleSource& test, std::uint64_t seed);

double evaluate_accuracy(ResidualClassifier<float>& model, const SampleSource& test,
                         int batch_size);

struct CurveResult {
  TargetLabel target = TargetLabel::label1;
  std::vector<CurvePoint> baseline;
  std::vector<CurvePoint> with_md;
  // mean(with_md) - mean(baseline) per sample size; NaN marks a gap
  std::vector<double> deltas;
};

// Runs both variants over sizes x seeds. Sources come from a factory so each
// variant can stack its own channels. Cells that fail validation are reported
// as gaps instead of aborting the grid. Writes per-seed and aggregate CSVs
// plus a line plot under out_dir when it is non-empty.
CurveResult accuracy_curve(
    const ExperimentSpec& spec,
    const std::function<SampleSource(Variant, int)>& train_source,
    const std::function<SampleSource(Variant)>& test_source, const std::string& out_dir);

}  // namespace seq2seq::analysis
