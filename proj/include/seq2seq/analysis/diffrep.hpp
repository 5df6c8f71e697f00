#pragma once

#include <vector>

#include "seq2seq/analysis/metrics.hpp"
#include "seq2seq/model/generator.hpp"
#include "seq2seq/train/dataset.hpp"

namespace seq2seq::analysis {

enum class DiagonalPolicy { exclude, include };

// Sequence-to-sequence similarity matrices. a = npsnr + nssim - nlpips on the
// evaluated support; the raw matrices keep the per-pair study means.
struct AdjacencyMatrix {
  int S = 0;
  DiagonalPolicy diagonal_policy = DiagonalPolicy::exclude;
  MetricMatrix psnr, ssim, lpips;
  MetricMatrix npsnr, nssim, nlpips;
  MetricMatrix a;
};

// Collects per-pair metric sums over studies; finish() averages, z-scores each
// metric over the evaluated support, and combines into the adjacency matrix.
class PairAccumulator {
 public:
  PairAccumulator(int S, const model::FeatureNet<float>& net);

  void add(int i, int j, const nn::Tensor<float>& pred, const nn::Tensor<float>& target);
  AdjacencyMatrix finish(DiagonalPolicy policy = DiagonalPolicy::exclude) const;

 private:
  int S_;
  const model::FeatureNet<float>* net_;
  MetricMatrix psnr_sum_, ssim_sum_, lpips_sum_;
  std::vector<int> counts_;
};

// Ordered-pair evaluation over a list of studies: every pair (i, j) with both
// sequences present contributes psnr/ssim/lpips of (translate(X_i -> j), X_j),
// averaged per pair over its supporting studies. Studies are visited sorted by
// id so the reduction order is reproducible. Diagonal pairs are evaluated only
// under the include policy.
AdjacencyMatrix build_adjacency(model::Generator<float>& gen, train::SlabLoader& loader,
                                const std::vector<int>& subjects,
                                const model::FeatureNet<float>& net,
                                DiagonalPolicy policy = DiagonalPolicy::exclude);

// Centralities with 1-based ranks (1 = highest, ties broken by sequence
// index). rank_t[i] is the rank position of sequence i.
struct CentralityReport {
  std::vector<double> c_t, c_d;
  std::vector<int> rank_t, rank_d;
};

// c_t[i] = (1/S) * sum_j a(i, j), c_d[i] = -(1/S) * sum_j a(j, i), summed over
// the evaluated support (off-diagonal unless the policy includes it). Missing
// entries on the support are an error.
CentralityReport centrality(const MetricMatrix& a, DiagonalPolicy policy = DiagonalPolicy::exclude);
CentralityReport centrality(const AdjacencyMatrix& adj);

// Per-pixel disagreement against the real target sequence.
struct DiffMap {
  nn::Tensor<float> map;
  int source_counts = 0;
};

// (1/S) * sum over predictions of |pred - target|. The divisor is the number
// of sequences, not the number of sources.
DiffMap diff_map_from(const std::vector<nn::Tensor<float>>& preds, const nn::Tensor<float>& target,
                      int S);

// Translates every other available sequence of one subject to sequence i and
// averages the absolute residuals. Self-translation joins the sources only
// under the include policy.
DiffMap diff_map(model::Generator<float>& gen, train::SlabLoader& loader, int subject, int i,
                 DiagonalPolicy policy = DiagonalPolicy::exclude);

}  // namespace seq2seq::analysis
