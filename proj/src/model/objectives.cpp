#include "seq2seq/model/objectives.hpp"

namespace seq2seq::model {

Json LossWeights::to_json() const {
  return Json{{"lambda_r", lambda_r},
              {"lambda_p", lambda_p},
              {"lambda_adv", lambda_adv},
              {"lambda_cyc", lambda_cyc},
              {"use_adversarial", use_adversarial},
              {"use_cycle", use_cycle}};
}

LossWeights LossWeights::from_json(const Json& j) {
  check_known_keys(j, {"lambda_r", "lambda_p", "lambda_adv", "lambda_cyc", "use_adversarial",
                       "use_cycle"},
                   "loss weights");
  LossWeights w;
  w.lambda_r = get_or<double>(j, "lambda_r", w.lambda_r);
  w.lambda_p = get_or<double>(j, "lambda_p", w.lambda_p);
  w.lambda_adv = get_or<double>(j, "lambda_adv", w.lambda_adv);
  w.lambda_cyc = get_or<double>(j, "lambda_cyc", w.lambda_cyc);
  w.use_adversarial = get_or<bool>(j, "use_adversarial", w.use_adversarial);
  w.use_cycle = get_or<bool>(j, "use_cycle", w.use_cycle);
  w.validate();
  return w;
}

}  // namespace seq2seq::model
