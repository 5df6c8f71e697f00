#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "seq2seq/log.hpp"
#include "seq2seq/model/generator.hpp"
#include "seq2seq/model/objectives.hpp"
#include "seq2seq/train/checkpoint.hpp"
#include "seq2seq/train/dataset.hpp"

namespace seq2seq::train {

struct TrainConfig {
  long long steps = 1000;
  int batch_size = 1;  // the paired pipeline supports exactly 1
  double learning_rate = 2e-4;
  double beta1 = 0.9, beta2 = 0.999;
  std::uint64_t seed = 1;
  int crop = 0;  // 0 = full image; otherwise a shared random square crop
  bool silence = false;
  long long checkpoint_every = 0;  // 0 = only at the end
  long long validate_every = 0;    // 0 = only at the end
  int val_max_subjects = 8;
  std::string manifest;
  std::string out_dir;
  model::GeneratorConfig generator;
  model::LossWeights losses;
  model::FeatureConfig feature;

  void validate() const;
  Json to_json() const;
  static TrainConfig from_json(const Json& j);
};

struct PairTerm {
  int i = 0, j = 0;
  double value = 0;
};

struct LossRecord {
  long long step = -1;
  int subject = -1;
  std::vector<PairTerm> recon_terms;  // one per ordered available pair, i=j included
  double recon = 0;   // sum of recon_terms
  double d_adv = 0;   // discriminator objective (its own update)
  double g_adv = 0;   // weighted adversarial part of the generator objective
  double cycle = 0;   // weighted cycle part
  double total = 0;   // generator objective = recon + g_adv + cycle
  bool skipped = false;
};

struct ValScore {
  double psnr = 0, ssim = 0;
  int pairs = 0;
};

struct TrainResult {
  long long final_step = 0;
  double best_val_psnr = 0;
  std::string last_checkpoint, best_checkpoint;
};

inline constexpr int kCheckpointVersion = 1;

class Trainer {
 public:
  using Real = float;

  Trainer(TrainConfig cfg, DatasetIndex data);

  LossRecord train_step(int subject_index);
  TrainResult train();
  ValScore validate_split(const std::string& split, int max_subjects = 0);

  void save_checkpoint(const std::string& path);
  void load_checkpoint(const std::string& path);  // resumes the step counter

  model::Generator<Real>& generator() { return *gen_; }
  model::DiscriminatorBank<Real>* discriminators() { return discs_.get(); }
  SlabLoader& loader() { return loader_; }
  const DatasetIndex& data() const { return data_; }
  const TrainConfig& config() const { return cfg_; }
  long long step() const { return step_; }
  long long optimizer_iterations() const { return opt_g_->iterations(); }
  const std::vector<int>& usable_train_subjects() const { return train_usable_; }

 private:
  std::vector<nn::Param<Real>*> all_params();
  int subject_for_step(long long step) const;

  TrainConfig cfg_;
  DatasetIndex data_;
  SlabLoader loader_;
  std::unique_ptr<model::Generator<Real>> gen_;
  std::unique_ptr<model::DiscriminatorBank<Real>> discs_;
  std::shared_ptr<model::FeatureNet<Real>> feat_;
  std::unique_ptr<nn::Adam<Real>> opt_g_, opt_d_;
  long long step_ = 0;
  double best_val_psnr_ = -1;
  std::vector<int> train_usable_;
  mutable long long cached_epoch_ = -1;
  mutable std::vector<int> cached_order_;
};

// Rebuild a generator from a checkpoint for synthesis and analysis.
struct LoadedGenerator {
  model::GeneratorConfig cfg;
  std::unique_ptr<model::Generator<float>> gen;
  Json meta;
  std::string file_sha256;
};

LoadedGenerator load_generator(const std::string& checkpoint_path);

}  // namespace seq2seq::train
