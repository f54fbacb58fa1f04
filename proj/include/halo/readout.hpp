#pragma once
// Node-wise readout g_s and the classification meta-loss.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "halo/energy.hpp"
#include "halo/errors.hpp"
#include "halo/hetgraph.hpp"
#include "halo/linalg.hpp"

namespace halo {

/// Class scores y theta + bias (affine) or y itself (identity, requires d_s = c_s).
inline Matrix readout(const Matrix& y, const Matrix& theta, const Matrix& bias, ReadoutKind kind) {
  if (kind == ReadoutKind::identity) return y;
  if (y.cols() != theta.rows())
    throw ShapeError("readout: embedding " + y.shape_string() + " vs theta " + theta.shape_string());
  if (bias.rows() != 1 || bias.cols() != theta.cols())
    throw ShapeError("readout: bias " + bias.shape_string() + " vs theta " + theta.shape_string());
  Matrix scores = matmul(y, theta);
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    auto r = scores.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias(0, j);
  }
  return scores;
}

inline Matrix readout(const ParamSet& p, std::size_t s, const Matrix& y) {
  if (p.options.readout == ReadoutKind::identity) return y;
  return readout(y, p.theta.at(s), p.bias.at(s), ReadoutKind::affine);
}

/// Index of the largest entry; ties go to the lowest index.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < v.size(); ++j)
    if (v[j] > v[best]) best = j;
  return best;
}

/// -log softmax(z)[label], evaluated without cancellation when label is the argmax.
inline double cross_entropy(std::span<const double> z, std::size_t label) {
  const std::size_t m = argmax(z);
  double others = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j)
    if (j != m) others += std::exp(z[j] - z[m]);
  return (z[m] - z[label]) + std::log1p(others);
}

struct LossResult {
  double loss = 0.0;
  EmbeddingSet dY;            ///< d loss / d Y^(K); zero outside the split
  std::vector<Matrix> dtheta;  ///< per node type, empty where there is no affine readout
  std::vector<Matrix> dbias;
  std::size_t counted = 0;  ///< labeled nodes that entered the loss
};

/// Mean softmax cross-entropy over the split's labeled nodes, per labeled
/// type, summed over types with equal weight.
inline LossResult meta_loss(const EmbeddingSet& y, const HeteroGraph& g, const ParamSet& p, SplitKind split) {
  LossResult r;
  r.dY = EmbeddingSet::zeros_like(y);
  r.dtheta.resize(g.num_node_types());
  r.dbias.resize(g.num_node_types());
  for (std::size_t s = 0; s < g.num_node_types(); ++s) {
    const auto& nt = g.node_type(s);
    if (!nt.labeled) continue;
    const bool affine = p.options.readout == ReadoutKind::affine;
    if (affine) {
      r.dtheta[s] = Matrix(p.theta[s].rows(), p.theta[s].cols());
      r.dbias[s] = Matrix(1, p.bias[s].cols());
    }
    const auto& idx = g.split(s).get(split);
    if (idx.empty()) continue;
    const auto& labels = g.labels(s);
    const double w = 1.0 / static_cast<double>(idx.size());
    Matrix rows(idx.size(), y[s].cols());
    for (std::size_t k = 0; k < idx.size(); ++k) std::copy_n(y[s].row(idx[k]).begin(), y[s].cols(), rows.row(k).begin());
    const Matrix scores = readout(p, s, rows);
    if (scores.cols() != static_cast<std::size_t>(nt.num_classes))
      throw ShapeError("readout for '" + nt.name + "' produces " + std::to_string(scores.cols()) + " scores for " +
                       std::to_string(nt.num_classes) + " classes");
    Matrix dscores(scores.rows(), scores.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto z = scores.row(k);
      const auto label = static_cast<std::size_t>(labels[idx[k]]);
      r.loss += w * cross_entropy(z, label);
      const std::size_t m = argmax(z);
      double denom = 0.0;
      for (double v : z) denom += std::exp(v - z[m]);
      auto dz = dscores.row(k);
      for (std::size_t j = 0; j < z.size(); ++j) dz[j] = w * std::exp(z[j] - z[m]) / denom;
      dz[label] -= w;
    }
    r.counted += idx.size();
    const Matrix drows = affine ? matmul_nt(dscores, p.theta[s]) : dscores;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      auto dst = r.dY[s].row(idx[k]);
      auto src = drows.row(k);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
    if (affine) {
      r.dtheta[s] = matmul_tn(rows, dscores);
      for (std::size_t k = 0; k < dscores.rows(); ++k)
        for (std::size_t j = 0; j < dscores.cols(); ++j) r.dbias[s](0, j) += dscores(k, j);
    }
  }
  if (r.counted == 0) throw ConfigError(std::string("meta_loss: the ") + to_string(split) + " split is empty");
  if (!std::isfinite(r.loss)) throw NumericError("meta_loss: non-finite loss");
  return r;
}

/// Correct / total counts per labeled type for one split.
struct SplitAccuracy {
  std::vector<std::size_t> correct;  ///< per node type
  std::vector<std::size_t> total;

  double type_accuracy(std::size_t s) const {
    return total[s] ? static_cast<double>(correct[s]) / static_cast<double>(total[s]) : 0.0;
  }
  /// Micro-average over all labeled nodes of the split.
  double overall() const {
    std::size_t c = 0, n = 0;
    for (std::size_t s = 0; s < total.size(); ++s) {
      c += correct[s];
      n += total[s];
    }
    return n ? static_cast<double>(c) / static_cast<double>(n) : 0.0;
  }
};

inline SplitAccuracy split_accuracy(const EmbeddingSet& y, const HeteroGraph& g, const ParamSet& p, SplitKind split) {
  SplitAccuracy acc;
  acc.correct.assign(g.num_node_types(), 0);
  acc.total.assign(g.num_node_types(), 0);
  for (std::size_t s = 0; s < g.num_node_types(); ++s) {
    if (!g.node_type(s).labeled) continue;
    const auto& idx = g.split(s).get(split);
    if (idx.empty()) continue;
    Matrix rows(idx.size(), y[s].cols());
    for (std::size_t k = 0; k < idx.size(); ++k) std::copy_n(y[s].row(idx[k]).begin(), y[s].cols(), rows.row(k).begin());
    const Matrix scores = readout(p, s, rows);
    for (std::size_t k = 0; k < idx.size(); ++k)
      if (static_cast<int>(argmax(scores.row(k))) == g.labels(s)[idx[k]]) ++acc.correct[s];
    acc.total[s] = idx.size();
  }
  return acc;
}

}  // namespace halo
