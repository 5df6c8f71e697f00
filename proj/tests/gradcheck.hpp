#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "seq2seq/nn/graph.hpp"
#include "seq2seq/rng.hpp"

namespace seq2seq::testing {

template <typename T>
nn::Tensor<T> random_tensor(Rng& rng, std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
  nn::Tensor<T> t(std::move(shape));
  for (T& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Compare tape gradients against central finite differences for every element
// of every listed parameter. Returns the worst relative error.
template <typename F>
double gradcheck(std::vector<nn::Param<double>*> params, F&& make_loss, double h = 1e-6) {
  for (nn::Param<double>* p : params) {
    p->ensure_grad();
    p->zero_grad();
  }
  {
    nn::Tape<double> tape;
    tape.backward(make_loss(tape));
  }
  double worst = 0;
  for (nn::Param<double>* p : params) {
    for (std::size_t i = 0; i < p->value.data.size(); ++i) {
      double orig = p->value.data[i];
      p->value.data[i] = orig + h;
      double lp;
      {
        nn::Tape<double> t(false);
        lp = make_loss(t).scalar();
      }
      p->value.data[i] = orig - h;
      double lm;
      {
        nn::Tape<double> t(false);
        lm = make_loss(t).scalar();
      }
      p->value.data[i] = orig;
      double fd = (lp - lm) / (2 * h);
      double an = p->grad.data[i];
      double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      worst = std::max(worst, std::abs(fd - an) / denom);
    }
  }
  return worst;
}

}  // namespace seq2seq::testing
