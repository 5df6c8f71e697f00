#pragma once

#include <string>
#include <utility>
#include <vector>

#include "seq2seq/config.hpp"
#include "seq2seq/nn/graph.hpp"

namespace seq2seq::train {

// On-disk tensor container: magic, JSON meta, then raw float32 blocks in
// listed order. The meta records a content hash so corruption is detected at
// load time.
struct WeightsFile {
  Json meta = Json::object();
  std::vector<std::pair<std::string, nn::Tensor<float>>> tensors;
};

inline constexpr int kWeightsFormatVersion = 1;

void save_weights_file(const WeightsFile& w, const std::string& path);
WeightsFile load_weights_file(const std::string& path);

// Copy named tensors into params (values only). Every param must be present
// with a matching shape.
template <typename T>
void assign_params(const WeightsFile& w, const std::vector<nn::Param<T>*>& params,
                   const std::string& suffix = "") {
  for (nn::Param<T>* p : params) {
    const nn::Tensor<float>* found = nullptr;
    for (const auto& [name, tensor] : w.tensors) {
      if (name == p->name + suffix) {
        found = &tensor;
        break;
      }
    }
    if (!found) throw DataError("weights file missing tensor '" + p->name + suffix + "'");
    if (found->shape != p->value.shape)
      throw DataError("weights file tensor '" + p->name + suffix + "' has shape " +
                      found->shape_str() + ", expected " + p->value.shape_str());
    p->value = found->template cast<T>();
  }
}

}  // namespace seq2seq::train
