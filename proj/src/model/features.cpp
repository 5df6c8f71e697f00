#include "seq2seq/model/features.hpp"

#include <filesystem>

#include "seq2seq/train/checkpoint.hpp"

namespace seq2seq::model {

Json FeatureConfig::to_json() const {
  return Json{{"backend", backend}, {"seed", seed}, {"path", path}};
}

FeatureConfig FeatureConfig::from_json(const Json& j) {
  check_known_keys(j, {"backend", "seed", "path"}, "feature config");
  FeatureConfig c;
  c.backend = get_or<std::string>(j, "backend", c.backend);
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
  c.path = get_or<std::string>(j, "path", c.path);
  c.validate();
  return c;
}

template <typename T>
std::shared_ptr<FeatureNet<T>> make_feature_net(const FeatureConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  auto net = std::make_shared<FeatureNet<T>>(cfg, rng);
  if (cfg.backend == "file") {
    if (cfg.path.empty() || !std::filesystem::exists(cfg.path))
      throw ConfigError(
          "feature backend 'file': weights not found at '" + cfg.path +
          "'; convert a pretrained backbone into the project weight format and point "
          "feature.path at it, or set feature.backend to 'random'");
    train::WeightsFile w = train::load_weights_file(cfg.path);
    train::assign_params(w, net->weights());
  }
  return net;
}

template std::shared_ptr<FeatureNet<float>> make_feature_net<float>(const FeatureConfig&);
template std::shared_ptr<FeatureNet<double>> make_feature_net<double>(const FeatureConfig&);

}  // namespace seq2seq::model
