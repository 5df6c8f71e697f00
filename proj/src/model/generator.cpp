#include "seq2seq/model/generator.hpp"

namespace seq2seq::model {

Json GeneratorConfig::to_json() const {
  return Json{{"S", S},
              {"in_channels", in_channels},
              {"base_channels", base_channels},
              {"downsample_factor", downsample_factor},
              {"n_residual_blocks", n_residual_blocks},
              {"n_hyper_residual_blocks", n_hyper_residual_blocks},
              {"n_hyperconv_tail", n_hyperconv_tail},
              {"convlstm_hidden_channels", convlstm_hidden_channels},
              {"c_w", c_w}};
}

GeneratorConfig GeneratorConfig::from_json(const Json& j) {
  check_known_keys(j,
                   {"S", "in_channels", "base_channels", "downsample_factor", "n_residual_blocks",
                    "n_hyper_residual_blocks", "n_hyperconv_tail", "convlstm_hidden_channels",
                    "c_w"},
                   "generator config");
  GeneratorConfig c;
  c.S = get_or(j, "S", c.S);
  c.in_channels = get_or(j, "in_channels", c.in_channels);
  c.base_channels = get_or(j, "base_channels", c.base_channels);
  c.downsample_factor = get_or(j, "downsample_factor", c.downsample_factor);
  c.n_residual_blocks = get_or(j, "n_residual_blocks", c.n_residual_blocks);
  c.n_hyper_residual_blocks = get_or(j, "n_hyper_residual_blocks", c.n_hyper_residual_blocks);
  c.n_hyperconv_tail = get_or(j, "n_hyperconv_tail", c.n_hyperconv_tail);
  c.convlstm_hidden_channels = get_or(j, "convlstm_hidden_channels", c.convlstm_hidden_channels);
  c.c_w = get_or(j, "c_w", c.c_w);
  c.validate();
  return c;
}

}  // namespace seq2seq::model
