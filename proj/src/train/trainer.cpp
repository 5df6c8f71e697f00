#include "seq2seq/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "seq2seq/analysis/metrics.hpp"
#include "seq2seq/sha256.hpp"

namespace fs = std::filesystem;

namespace seq2seq::train {

void TrainConfig::validate() const {
  if (steps < 1) throw ConfigError("train: steps must be >= 1");
  if (batch_size != 1)
    throw ConfigError("train: only batch size 1 is supported by the paired pipeline");
  if (learning_rate <= 0) throw ConfigError("train: learning rate must be > 0");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
    throw ConfigError("train: betas must lie in [0,1)");
  if (crop != 0 && (crop < 8 || crop % 4 != 0))
    throw ConfigError("train: crop must be 0 or a multiple of 4 that is >= 8");
  if (checkpoint_every < 0 || validate_every < 0 || val_max_subjects < 0)
    throw ConfigError("train: cadences must be non-negative");
  if (generator.in_channels != 1 && generator.in_channels != 3)
    throw ConfigError("train: in_channels must be 1 (2D images) or 3 (volume slabs)");
  generator.validate();
  losses.validate();
  feature.validate();
}

Json TrainConfig::to_json() const {
  Json t{{"steps", steps},
         {"batch_size", batch_size},
         {"learning_rate", learning_rate},
         {"beta1", beta1},
         {"beta2", beta2},
         {"seed", seed},
         {"crop", crop},
         {"silence", silence},
         {"checkpoint_every", checkpoint_every},
         {"validate_every", validate_every},
         {"val_max_subjects", val_max_subjects},
         {"manifest", manifest},
         {"out_dir", out_dir}};
  return Json{{"train", t},
              {"generator", generator.to_json()},
              {"losses", losses.to_json()},
              {"feature", feature.to_json()}};
}

TrainConfig TrainConfig::from_json(const Json& j) {
  check_known_keys(j, {"train", "generator", "losses", "feature"}, "train config");
  TrainConfig c;
  if (j.contains("generator")) c.generator = model::GeneratorConfig::from_json(j.at("generator"));
  if (j.contains("losses")) c.losses = model::LossWeights::from_json(j.at("losses"));
  if (j.contains("feature")) c.feature = model::FeatureConfig::from_json(j.at("feature"));
  if (j.contains("train")) {
    const Json& t = j.at("train");
    check_known_keys(t,
                     {"steps", "batch_size", "learning_rate", "beta1", "beta2", "seed", "crop",
                      "silence", "checkpoint_every", "validate_every", "val_max_subjects",
                      "manifest", "out_dir"},
                     "train section");
    c.steps = get_or<long long>(t, "steps", c.steps);
    c.batch_size = get_or<int>(t, "batch_size", c.batch_size);
    c.learning_rate = get_or<double>(t, "learning_rate", c.learning_rate);
    c.beta1 = get_or<double>(t, "beta1", c.beta1);
    c.beta2 = get_or<double>(t, "beta2", c.beta2);
    c.seed = get_or<std::uint64_t>(t, "seed", c.seed);
    c.crop = get_or<int>(t, "crop", c.crop);
    c.silence = get_or<bool>(t, "silence", c.silence);
    c.checkpoint_every = get_or<long long>(t, "checkpoint_every", c.checkpoint_every);
    c.validate_every = get_or<long long>(t, "validate_every", c.validate_every);
    c.val_max_subjects = get_or<int>(t, "val_max_subjects", c.val_max_subjects);
    c.manifest = get_or<std::string>(t, "manifest", c.manifest);
    c.out_dir = get_or<std::string>(t, "out_dir", c.out_dir);
  }
  c.validate();
  return c;
}

namespace {

nn::Tensor<float> crop_square(const nn::Tensor<float>& x, int oy, int ox, int size) {
  int c = x.dim(1), h = x.dim(2), w = x.dim(3);
  nn::Tensor<float> out({1, c, size, size});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < size; ++y)
      for (int xx = 0; xx < size; ++xx)
        out.data[(static_cast<std::size_t>(ch) * size + y) * size + xx] =
            x.data[(static_cast<std::size_t>(ch) * h + oy + y) * w + ox + xx];
  return out;
}

const nn::Tensor<float>* find_tensor(const WeightsFile& w, const std::string& name) {
  for (const auto& [n, t] : w.tensors)
    if (n == name) return &t;
  return nullptr;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

Trainer::Trainer(TrainConfig cfg, DatasetIndex data)
    : cfg_(std::move(cfg)), data_(std::move(data)), loader_(data_) {
  cfg_.validate();
  data_.validate();

  if (cfg_.silence) {
    std::vector<std::vector<char>> present;
    present.reserve(data_.subjects.size());
    for (const SubjectEntry& s : data_.subjects)
      present.emplace_back(s.available.begin(), s.available.end());
    apply_availability_plan(
        data_, make_availability_plan(present, data_.S, Rng(cfg_.seed).fork("silence").next_u64()));
  }

  for (int i : data_.split_indices("train")) {
    if (data_.subjects[static_cast<std::size_t>(i)].n_available() > 0)
      train_usable_.push_back(i);
    else
      warn("train: subject " + data_.subjects[static_cast<std::size_t>(i)].id +
           " has no available sequences and is skipped");
  }
  if (train_usable_.empty())
    throw ConfigError("train: no training subject has any available sequence");

  Rng wrng = Rng(cfg_.seed).fork("weights");
  gen_ = std::make_unique<model::Generator<Real>>(cfg_.generator, wrng);
  if (cfg_.losses.use_adversarial) {
    Rng drng = Rng(cfg_.seed).fork("discriminators");
    discs_ = std::make_unique<model::DiscriminatorBank<Real>>(drng, cfg_.generator.S,
                                                              cfg_.generator.in_channels);
  }
  if (cfg_.losses.lambda_p > 0) feat_ = make_feature_net<Real>(cfg_.feature);

  nn::AdamConfig<Real> ac;
  ac.lr = static_cast<Real>(cfg_.learning_rate);
  ac.beta1 = static_cast<Real>(cfg_.beta1);
  ac.beta2 = static_cast<Real>(cfg_.beta2);
  opt_g_ = std::make_unique<nn::Adam<Real>>(gen_->params(), ac);
  if (discs_) {
    nn::ParamList<Real> dp;
    discs_->collect(dp);
    opt_d_ = std::make_unique<nn::Adam<Real>>(std::move(dp), ac);
  }
}

std::vector<nn::Param<Trainer::Real>*> Trainer::all_params() {
  nn::ParamList<Real> ps = gen_->params();
  if (discs_) discs_->collect(ps);
  return ps;
}

// The subject schedule is a pure function of the step index: shuffled epochs,
// reshuffled per epoch, so a resumed run visits the same subjects.
int Trainer::subject_for_step(long long step) const {
  long long n = static_cast<long long>(train_usable_.size());
  long long epoch = step / n;
  if (epoch != cached_epoch_) {
    cached_order_ = train_usable_;
    Rng r = Rng(cfg_.seed).fork("order").fork(static_cast<std::uint64_t>(epoch) + 1);
    for (std::size_t i = cached_order_.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(r.uniform_int(static_cast<std::uint64_t>(i)));
      std::swap(cached_order_[i - 1], cached_order_[j]);
    }
    cached_epoch_ = epoch;
  }
  return cached_order_[static_cast<std::size_t>(step % n)];
}

LossRecord Trainer::train_step(int subject_index) {
  using nn::Val;
  LossRecord rec;
  rec.step = step_;
  rec.subject = subject_index;

  const SubjectEntry& subj = data_.subjects[static_cast<std::size_t>(subject_index)];
  std::vector<int> avail;
  for (int j = 0; j < data_.S; ++j)
    if (subj.available[static_cast<std::size_t>(j)]) avail.push_back(j);
  if (avail.empty()) {
    warn("train: skipping subject " + subj.id + " with no available sequences");
    rec.skipped = true;
    return rec;
  }

  Rng sr = Rng(cfg_.seed).fork("step").fork(static_cast<std::uint64_t>(step_) + 1);
  const int S = cfg_.generator.S;
  std::vector<nn::Tensor<float>> imgs(static_cast<std::size_t>(S));
  if (cfg_.generator.in_channels == 1) {
    for (int j : avail) imgs[static_cast<std::size_t>(j)] = loader_.load_image(subject_index, j);
  } else {
    int d = loader_.depth(subject_index, avail[0]);
    int z = static_cast<int>(sr.uniform_int(static_cast<std::uint64_t>(d)));
    for (int j : avail)
      imgs[static_cast<std::size_t>(j)] = loader_.load_slab(subject_index, j, z);
  }
  if (cfg_.crop > 0) {
    int h = imgs[static_cast<std::size_t>(avail[0])].dim(2);
    int w = imgs[static_cast<std::size_t>(avail[0])].dim(3);
    if (cfg_.crop > h || cfg_.crop > w)
      throw ConfigError("train: crop " + std::to_string(cfg_.crop) +
                        " exceeds image size " + std::to_string(h) + "x" + std::to_string(w));
    int oy = static_cast<int>(sr.uniform_int(static_cast<std::uint64_t>(h - cfg_.crop + 1)));
    int ox = static_cast<int>(sr.uniform_int(static_cast<std::uint64_t>(w - cfg_.crop + 1)));
    for (int j : avail)
      imgs[static_cast<std::size_t>(j)] =
          crop_square(imgs[static_cast<std::size_t>(j)], oy, ox, cfg_.crop);
  }

  nn::Tape<Real> t;
  std::vector<Val<Real>> x(static_cast<std::size_t>(S));
  for (int j : avail) x[static_cast<std::size_t>(j)] = t.constant(imgs[static_cast<std::size_t>(j)]);

  // encode each available source once; decoding fans out per target
  std::vector<Val<Real>> src_feat(static_cast<std::size_t>(S));
  for (int i : avail) {
    Val<Real> e = gen_->encode(t, x[static_cast<std::size_t>(i)]);
    Val<Real> fused = gen_->fuse_4d(t, {e});
    src_feat[static_cast<std::size_t>(i)] = gen_->expand_4d(t, fused, 1)[0];
  }

  std::vector<std::vector<Val<Real>>> pred(static_cast<std::size_t>(S),
                                           std::vector<Val<Real>>(static_cast<std::size_t>(S)));
  std::optional<Val<Real>> recon_sum;
  for (int i : avail)
    for (int j : avail) {
      Val<Real> p = gen_->decode(t, src_feat[static_cast<std::size_t>(i)],
                                 model::SequenceCode(j, S));
      pred[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = p;
      Val<Real> term = model::reconstruction_loss(t, p, x[static_cast<std::size_t>(j)],
                                                  cfg_.losses, feat_.get());
      rec.recon_terms.push_back({i, j, static_cast<double>(term.value().data[0])});
      recon_sum = recon_sum ? nn::add(*recon_sum, term) : term;
    }
  rec.recon = recon_sum->value().data[0];

  // discriminators first: train them on detached fakes, then let the
  // generator face the updated, frozen copies
  if (discs_ && avail.size() > 1) {
    std::optional<Val<Real>> d_sum;
    for (int i : avail)
      for (int j : avail) {
        if (i == j) continue;
        model::PatchDiscriminator<Real>& d = discs_->at(j);
        Val<Real> s_real = d.forward(t, x[static_cast<std::size_t>(j)], false);
        Val<Real> s_fake = d.forward(
            t, nn::detach(pred[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]), false);
        Val<Real> ones = t.constant(nn::Tensor<Real>::full(s_real.value().shape, Real(1)));
        Val<Real> zeros = t.constant(nn::Tensor<Real>::zeros(s_fake.value().shape));
        Val<Real> dl = nn::add(nn::mean_sq_diff(s_real, ones), nn::mean_sq_diff(s_fake, zeros));
        d_sum = d_sum ? nn::add(*d_sum, dl) : dl;
      }
    rec.d_adv = d_sum->value().data[0];
    t.backward(*d_sum);
    opt_d_->step();
    opt_d_->zero_grad();
    t.clear_grads();
  }

  Val<Real> g_total = *recon_sum;
  if (discs_ && avail.size() > 1) {
    std::optional<Val<Real>> g_sum;
    for (int i : avail)
      for (int j : avail) {
        if (i == j) continue;
        model::PatchDiscriminator<Real>& d = discs_->at(j);
        Val<Real> score = d.forward(
            t, pred[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], true);
        Val<Real> ones = t.constant(nn::Tensor<Real>::full(score.value().shape, Real(1)));
        Val<Real> gl = nn::mean_sq_diff(score, ones);
        g_sum = g_sum ? nn::add(*g_sum, gl) : gl;
      }
    Val<Real> weighted = nn::scale(*g_sum, static_cast<Real>(cfg_.losses.lambda_adv));
    rec.g_adv = weighted.value().data[0];
    g_total = nn::add(g_total, weighted);
  }
  if (cfg_.losses.use_cycle && avail.size() > 1) {
    std::optional<Val<Real>> c_sum;
    for (int i : avail)
      for (int j : avail) {
        if (i == j) continue;
        Val<Real> back =
            gen_->translate(t, {pred[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]},
                            model::SequenceCode(i, S), 1)[0];
        Val<Real> cl = model::cycle_loss(t, x[static_cast<std::size_t>(i)], back);
        c_sum = c_sum ? nn::add(*c_sum, cl) : cl;
      }
    Val<Real> weighted = nn::scale(*c_sum, static_cast<Real>(cfg_.losses.lambda_cyc));
    rec.cycle = weighted.value().data[0];
    g_total = nn::add(g_total, weighted);
  }
  rec.total = g_total.value().data[0];

  t.backward(g_total);
  opt_g_->step();
  opt_g_->zero_grad();

  ++step_;
  return rec;
}

ValScore Trainer::validate_split(const std::string& split, int max_subjects) {
  using nn::Val;
  std::vector<int> ids = data_.split_indices(split);
  if (max_subjects > 0 && static_cast<int>(ids.size()) > max_subjects)
    ids.resize(static_cast<std::size_t>(max_subjects));

  ValScore score;
  double psnr_sum = 0, ssim_sum = 0;
  for (int si : ids) {
    const SubjectEntry& subj = data_.subjects[static_cast<std::size_t>(si)];
    std::vector<int> avail;
    for (int j = 0; j < data_.S; ++j)
      if (subj.available[static_cast<std::size_t>(j)]) avail.push_back(j);
    if (avail.empty()) continue;

    std::vector<nn::Tensor<float>> imgs(static_cast<std::size_t>(data_.S));
    if (cfg_.generator.in_channels == 1) {
      for (int j : avail) imgs[static_cast<std::size_t>(j)] = loader_.load_image(si, j);
    } else {
      int d = loader_.depth(si, avail[0]);
      for (int j : avail) imgs[static_cast<std::size_t>(j)] = loader_.load_slab(si, j, d / 2);
    }

    nn::Tape<Real> t(false);
    for (int i : avail) {
      Val<Real> e = gen_->encode(t, t.constant(imgs[static_cast<std::size_t>(i)]));
      Val<Real> feat = gen_->expand_4d(t, gen_->fuse_4d(t, {e}), 1)[0];
      for (int j : avail) {
        nn::Tensor<float> p = gen_->decode(t, feat, model::SequenceCode(j, data_.S)).value();
        psnr_sum += analysis::psnr(p, imgs[static_cast<std::size_t>(j)]);
        ssim_sum += analysis::ssim(p, imgs[static_cast<std::size_t>(j)]);
        ++score.pairs;
      }
    }
  }
  if (score.pairs > 0) {
    score.psnr = psnr_sum / score.pairs;
    score.ssim = ssim_sum / score.pairs;
  }
  return score;
}

TrainResult Trainer::train() {
  fs::create_directories(cfg_.out_dir);
  const std::string cfg_path = cfg_.out_dir + "/config.resolved.json";
  try {
    save_json_file(cfg_.to_json(), cfg_path);
  } catch (const std::exception&) {
    throw DataError("train: output directory not writable: " + cfg_.out_dir);
  }

  CsvWriter csv;
  csv.open(cfg_.out_dir + "/train_log.csv",
           {"step", "subject", "pairs", "recon", "d_adv", "g_adv", "cycle", "total"});
  JsonlLogger events(cfg_.out_dir + "/events.jsonl");
  events.event("run_start", Json{{"step", step_},
                                 {"steps", cfg_.steps},
                                 {"seed", cfg_.seed},
                                 {"train_subjects", train_usable_.size()}});

  TrainResult result;
  result.last_checkpoint = cfg_.out_dir + "/last.ckpt";
  result.best_checkpoint = cfg_.out_dir + "/best.ckpt";
  bool has_val = !data_.split_indices("val").empty();

  while (step_ < cfg_.steps) {
    LossRecord rec = train_step(subject_for_step(step_));
    if (rec.skipped) continue;
    csv.write_row({std::to_string(rec.step), std::to_string(rec.subject),
                   std::to_string(rec.recon_terms.size()), fmt(rec.recon), fmt(rec.d_adv),
                   fmt(rec.g_adv), fmt(rec.cycle), fmt(rec.total)});

    bool last = step_ == cfg_.steps;
    if (has_val && ((cfg_.validate_every > 0 && step_ % cfg_.validate_every == 0) || last)) {
      ValScore v = validate_split("val", cfg_.val_max_subjects);
      events.event("validation",
                   Json{{"step", step_}, {"psnr", v.psnr}, {"ssim", v.ssim}, {"pairs", v.pairs}});
      if (v.psnr > best_val_psnr_) {
        best_val_psnr_ = v.psnr;
        save_checkpoint(result.best_checkpoint);
        events.event("best_checkpoint", Json{{"step", step_}, {"psnr", v.psnr}});
      }
    }
    if ((cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0) || last) {
      save_checkpoint(result.last_checkpoint);
      events.event("checkpoint", Json{{"step", step_}, {"path", result.last_checkpoint}});
    }
  }

  result.final_step = step_;
  result.best_val_psnr = best_val_psnr_;
  events.event("run_end", Json{{"step", step_}});
  return result;
}

void Trainer::save_checkpoint(const std::string& path) {
  WeightsFile w;
  w.meta["kind"] = "checkpoint";
  w.meta["ckpt_version"] = kCheckpointVersion;
  w.meta["step"] = step_;
  w.meta["adam_g_iterations"] = opt_g_->iterations();
  w.meta["adam_d_iterations"] = opt_d_ ? opt_d_->iterations() : 0;
  w.meta["best_val_psnr"] = best_val_psnr_;
  w.meta["config"] = cfg_.to_json();
  for (nn::Param<Real>* p : all_params()) {
    w.tensors.emplace_back(p->name, p->value);
    w.tensors.emplace_back(p->name + ".m",
                           p->adam_m.empty() ? nn::Tensor<float>::zeros(p->value.shape)
                                             : p->adam_m);
    w.tensors.emplace_back(p->name + ".v",
                           p->adam_v.empty() ? nn::Tensor<float>::zeros(p->value.shape)
                                             : p->adam_v);
  }
  save_weights_file(w, path);
}

void Trainer::load_checkpoint(const std::string& path) {
  WeightsFile w = load_weights_file(path);
  if (w.meta.value("kind", "") != "checkpoint")
    throw DataError("not a checkpoint file: " + path);
  int ver = w.meta.value("ckpt_version", -1);
  if (ver != kCheckpointVersion)
    throw DataError("checkpoint version " + std::to_string(ver) +
                    " is incompatible with supported version " +
                    std::to_string(kCheckpointVersion));
  if (w.meta.contains("config") && w.meta["config"].contains("generator")) {
    if (w.meta["config"]["generator"] != cfg_.generator.to_json())
      throw DataError("checkpoint generator architecture differs from the configured one");
  }

  std::vector<nn::Param<Real>*> ps = all_params();
  assign_params(w, ps);
  for (nn::Param<Real>* p : ps) {
    if (const nn::Tensor<float>* m = find_tensor(w, p->name + ".m")) p->adam_m = *m;
    if (const nn::Tensor<float>* v = find_tensor(w, p->name + ".v")) p->adam_v = *v;
  }
  step_ = w.meta.value("step", 0LL);
  best_val_psnr_ = w.meta.value("best_val_psnr", -1.0);
  opt_g_->set_iterations(w.meta.value("adam_g_iterations", 0LL));
  if (opt_d_) opt_d_->set_iterations(w.meta.value("adam_d_iterations", 0LL));
}

LoadedGenerator load_generator(const std::string& checkpoint_path) {
  WeightsFile w = load_weights_file(checkpoint_path);
  if (w.meta.value("kind", "") != "checkpoint")
    throw DataError("not a checkpoint file: " + checkpoint_path);
  int ver = w.meta.value("ckpt_version", -1);
  if (ver != kCheckpointVersion)
    throw DataError("checkpoint version " + std::to_string(ver) +
                    " is incompatible with supported version " +
                    std::to_string(kCheckpointVersion));
  if (!w.meta.contains("config") || !w.meta["config"].contains("generator"))
    throw DataError("checkpoint lacks the generator configuration");

  LoadedGenerator out;
  out.cfg = model::GeneratorConfig::from_json(w.meta["config"]["generator"]);
  Rng rng(1);
  out.gen = std::make_unique<model::Generator<float>>(out.cfg, rng);
  assign_params(w, out.gen->params());
  out.meta = w.meta;
  out.file_sha256 = sha256_file_hex(checkpoint_path);
  return out;
}

}  // namespace seq2seq::train
