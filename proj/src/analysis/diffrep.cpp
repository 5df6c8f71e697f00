#include "seq2seq/analysis/diffrep.hpp"

#include <algorithm>
#include <numeric>

#include "seq2seq/nn/graph.hpp"

namespace seq2seq::analysis {

PairAccumulator::PairAccumulator(int S, const model::FeatureNet<float>& net)
    : S_(S),
      net_(&net),
      psnr_sum_(S),
      ssim_sum_(S),
      lpips_sum_(S),
      counts_(static_cast<std::size_t>(S) * S, 0) {
  if (S < 2) throw ConfigError("adjacency needs at least 2 sequences");
}

void PairAccumulator::add(int i, int j, const nn::Tensor<float>& pred,
                          const nn::Tensor<float>& target) {
  if (i < 0 || i >= S_ || j < 0 || j >= S_)
    throw ConfigError("pair index out of range for " + std::to_string(S_) + " sequences");
  psnr_sum_.at(i, j) += psnr(pred, target);
  ssim_sum_.at(i, j) += ssim(pred, target);
  lpips_sum_.at(i, j) += lpips_like(*net_, pred, target);
  ++counts_[static_cast<std::size_t>(i) * S_ + j];
}

AdjacencyMatrix PairAccumulator::finish(DiagonalPolicy policy) const {
  AdjacencyMatrix adj;
  adj.S = S_;
  adj.diagonal_policy = policy;
  adj.psnr = MetricMatrix(S_);
  adj.ssim = MetricMatrix(S_);
  adj.lpips = MetricMatrix(S_);
  for (int i = 0; i < S_; ++i)
    for (int j = 0; j < S_; ++j) {
      int n = counts_[static_cast<std::size_t>(i) * S_ + j];
      if (n == 0) continue;
      adj.psnr.set(i, j, psnr_sum_.at(i, j) / n);
      adj.ssim.set(i, j, ssim_sum_.at(i, j) / n);
      adj.lpips.set(i, j, lpips_sum_.at(i, j) / n);
    }
  bool with_diag = policy == DiagonalPolicy::include;
  adj.npsnr = normalize_metric(adj.psnr, with_diag);
  adj.nssim = normalize_metric(adj.ssim, with_diag);
  adj.nlpips = normalize_metric(adj.lpips, with_diag);
  adj.a = MetricMatrix(S_);
  for (int i = 0; i < S_; ++i)
    for (int j = 0; j < S_; ++j) {
      if (!adj.npsnr.is_known(i, j) || !adj.nssim.is_known(i, j) || !adj.nlpips.is_known(i, j))
        continue;
      adj.a.set(i, j, adj.npsnr.at(i, j) + adj.nssim.at(i, j) - adj.nlpips.at(i, j));
    }
  return adj;
}

namespace {

nn::Tensor<float> translate_once(model::Generator<float>& gen, const nn::Tensor<float>& src,
                                 int target) {
  nn::Tape<float> t(false);
  int S = gen.cfg.S;
  return gen.translate(t, {t.constant(src)}, model::SequenceCode(target, S), 1)[0].value();
}

nn::Tensor<float> source_image(train::SlabLoader& loader, const model::GeneratorConfig& cfg,
                               int subject, int seq) {
  if (cfg.in_channels == 1) return loader.load_image(subject, seq);
  return loader.load_slab(subject, seq, loader.depth(subject, seq) / 2);
}

}  // namespace

AdjacencyMatrix build_adjacency(model::Generator<float>& gen, train::SlabLoader& loader,
                                const std::vector<int>& subjects,
                                const model::FeatureNet<float>& net, DiagonalPolicy policy) {
  const train::DatasetIndex& idx = loader.index();
  int S = idx.S;
  if (gen.cfg.S != S)
    throw ConfigError("generator was trained for " + std::to_string(gen.cfg.S) +
                      " sequences but the dataset has " + std::to_string(S));
  std::vector<int> order = subjects;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return idx.subjects[static_cast<std::size_t>(a)].id < idx.subjects[static_cast<std::size_t>(b)].id;
  });

  PairAccumulator acc(S, net);
  for (int s : order) {
    const auto& avail = idx.subjects[static_cast<std::size_t>(s)].available;
    for (int i = 0; i < S; ++i) {
      if (!avail[static_cast<std::size_t>(i)]) continue;
      nn::Tensor<float> src = source_image(loader, gen.cfg, s, i);
      for (int j = 0; j < S; ++j) {
        if (!avail[static_cast<std::size_t>(j)]) continue;
        if (i == j && policy == DiagonalPolicy::exclude) continue;
        nn::Tensor<float> target =
            i == j ? src : source_image(loader, gen.cfg, s, j);
        acc.add(i, j, translate_once(gen, src, j), target);
      }
    }
  }
  return acc.finish(policy);
}

CentralityReport centrality(const MetricMatrix& a, DiagonalPolicy policy) {
  int S = a.S;
  if (S < 2) throw ConfigError("centrality needs at least 2 sequences");
  for (int i = 0; i < S; ++i)
    for (int j = 0; j < S; ++j) {
      if (i == j && policy == DiagonalPolicy::exclude) continue;
      if (!a.is_known(i, j))
        throw DataError("adjacency entry (" + std::to_string(i) + ", " + std::to_string(j) +
                        ") is missing; impute it or exclude the sequence before ranking");
    }

  // addends are sorted by value before summing so relabeling the sequences
  // cannot change the reduction order, keeping equivariance bitwise
  auto sorted_sum = [](std::vector<double>& xs) {
    std::sort(xs.begin(), xs.end());
    double s = 0;
    for (double x : xs) s += x;
    return s;
  };

  CentralityReport rep;
  rep.c_t.assign(static_cast<std::size_t>(S), 0.0);
  rep.c_d.assign(static_cast<std::size_t>(S), 0.0);
  for (int i = 0; i < S; ++i) {
    std::vector<double> row, col;
    for (int j = 0; j < S; ++j) {
      if (i == j && policy == DiagonalPolicy::exclude) continue;
      row.push_back(a.at(i, j));
      col.push_back(a.at(j, i));
    }
    rep.c_t[static_cast<std::size_t>(i)] = sorted_sum(row) / S;
    rep.c_d[static_cast<std::size_t>(i)] = -sorted_sum(col) / S;
  }

  auto rank_of = [S](const std::vector<double>& c) {
    std::vector<int> order(static_cast<std::size_t>(S));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
      return c[static_cast<std::size_t>(x)] > c[static_cast<std::size_t>(y)];
    });
    std::vector<int> rank(static_cast<std::size_t>(S));
    for (int k = 0; k < S; ++k) rank[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = k + 1;
    return rank;
  };
  rep.rank_t = rank_of(rep.c_t);
  rep.rank_d = rank_of(rep.c_d);
  return rep;
}

CentralityReport centrality(const AdjacencyMatrix& adj) {
  return centrality(adj.a, adj.diagonal_policy);
}

DiffMap diff_map_from(const std::vector<nn::Tensor<float>>& preds, const nn::Tensor<float>& target,
                      int S) {
  if (S < 1) throw ConfigError("diff map needs a positive sequence count");
  if (preds.empty()) throw DataError("diff map has no source sequences to average");
  for (const auto& p : preds)
    if (!p.same_shape(target))
      throw ShapeError("diff map source " + p.shape_str() + " does not match target " +
                       target.shape_str());

  std::vector<double> acc(target.data.size(), 0.0);
  for (const auto& p : preds)
    for (std::size_t k = 0; k < acc.size(); ++k)
      acc[k] += std::abs(static_cast<double>(p.data[k]) - static_cast<double>(target.data[k]));

  DiffMap out;
  out.map = nn::Tensor<float>(target.shape);
  for (std::size_t k = 0; k < acc.size(); ++k)
    out.map.data[k] = static_cast<float>(acc[k] / S);
  out.source_counts = static_cast<int>(preds.size());
  return out;
}

DiffMap diff_map(model::Generator<float>& gen, train::SlabLoader& loader, int subject, int i,
                 DiagonalPolicy policy) {
  const train::DatasetIndex& idx = loader.index();
  int S = idx.S;
  if (i < 0 || i >= S) throw ConfigError("sequence index out of range");
  const auto& avail = idx.subjects[static_cast<std::size_t>(subject)].available;
  if (!avail[static_cast<std::size_t>(i)])
    throw DataError("target sequence " + idx.sequence_names[static_cast<std::size_t>(i)] +
                    " is not available for this subject");

  nn::Tensor<float> target = source_image(loader, gen.cfg, subject, i);
  std::vector<nn::Tensor<float>> preds;
  for (int j = 0; j < S; ++j) {
    if (!avail[static_cast<std::size_t>(j)]) continue;
    if (i == j && policy == DiagonalPolicy::exclude) continue;
    nn::Tensor<float> src = i == j ? target : source_image(loader, gen.cfg, subject, j);
    preds.push_back(translate_once(gen, src, i));
  }
  if (preds.empty())
    throw DataError("no source sequences available to build the diff map for sequence " +
                    idx.sequence_names[static_cast<std::size_t>(i)]);
  return diff_map_from(preds, target, S);
}

}  // namespace seq2seq::analysis
