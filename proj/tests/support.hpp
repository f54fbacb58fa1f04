#pragma once
// Random small instances and comparison helpers shared by the tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "halo/halo.hpp"

namespace halo::testing {

struct InstanceSpec {
  std::size_t max_nodes = 30;  ///< total over all node types
  std::size_t max_dim = 4;
  int min_types = 2, max_types = 3;
  int min_canonical = 1, max_canonical = 2;  ///< edge types before adding inverses
  double edge_density = 0.3;
  double h_scale = 0.5;
  BaseKind base = BaseKind::linear;
  ReadoutKind readout = ReadoutKind::affine;
};

struct Instance {
  HeteroGraph graph;
  ParamSet params;
};

inline Matrix random_matrix(CounterRng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.values()) v = scale * rng.normal();
  return m;
}

inline int pick(CounterRng& rng, int lo, int hi) { return lo + static_cast<int>(rng.uniform_index(hi - lo + 1)); }

/// A random labeled heterogeneous graph; every type is labeled with 2-3 classes.
inline HeteroGraph random_graph(CounterRng& rng, const InstanceSpec& spec) {
  GraphData d;
  const int S = pick(rng, spec.min_types, spec.max_types);
  const std::size_t per = std::max<std::size_t>(2, spec.max_nodes / S);
  for (int s = 0; s < S; ++s) {
    NodeTypeSchema nt;
    nt.name = "n" + std::to_string(s);
    nt.count = static_cast<std::size_t>(pick(rng, 2, static_cast<int>(per)));
    nt.feat_dim = static_cast<std::size_t>(pick(rng, 1, 3));
    nt.labeled = true;
    nt.num_classes = pick(rng, 2, 3);
    d.node_types.push_back(nt);
    d.features.push_back(random_matrix(rng, nt.count, nt.feat_dim));
    std::vector<int> labels(nt.count);
    Split sp;
    for (std::size_t i = 0; i < nt.count; ++i) {
      labels[i] = static_cast<int>(rng.uniform_index(nt.num_classes));
      const double u = rng.uniform();
      if (u < 0.5) sp.train.push_back(i);
      else if (u < 0.7) sp.val.push_back(i);
      else if (u < 0.9) sp.test.push_back(i);
      else labels[i] = kUnlabeled;
    }
    if (sp.train.empty()) {
      sp.train.push_back(0);
      labels[0] = 0;
      std::erase(sp.val, 0);
      std::erase(sp.test, 0);
    }
    d.labels.push_back(labels);
    d.splits.push_back(sp);
  }
  const int C = pick(rng, spec.min_canonical, spec.max_canonical);
  for (int c = 0; c < C; ++c) {
    const auto s = rng.uniform_index(S), r = rng.uniform_index(S);
    EdgeTypeSchema et{"e" + std::to_string(c), d.node_types[s].name, d.node_types[r].name, ""};
    d.edge_types.push_back(et);
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < d.node_types[s].count; ++i)
      for (std::size_t j = 0; j < d.node_types[r].count; ++j)
        if (rng.uniform() < spec.edge_density) edges.push_back({i, j});
    d.edges.emplace_back(std::move(edges));
  }
  return HeteroGraph(std::move(d));
}

inline ParamSet random_params(CounterRng& rng, const HeteroGraph& g, const InstanceSpec& spec) {
  ParamSet p;
  p.options.base = spec.base;
  p.options.readout = spec.readout;
  p.options.mlp_hidden = 3;
  const std::size_t S = g.num_node_types();
  for (std::size_t s = 0; s < S; ++s)
    p.dims.push_back(spec.readout == ReadoutKind::identity ? g.node_type(s).num_classes
                                                            : static_cast<std::size_t>(pick(rng, 1, static_cast<int>(spec.max_dim))));
  p.W.resize(S);
  p.W2.resize(S);
  p.theta.resize(S);
  p.bias.resize(S);
  for (std::size_t s = 0; s < S; ++s) {
    const std::size_t d0 = g.features(s).cols();
    if (spec.base == BaseKind::mlp) {
      p.W[s] = random_matrix(rng, d0, 3);
      p.W2[s] = random_matrix(rng, 3, p.dims[s]);
    } else {
      p.W[s] = random_matrix(rng, d0, p.dims[s]);
    }
    if (spec.readout == ReadoutKind::affine && g.node_type(s).labeled) {
      p.theta[s] = random_matrix(rng, p.dims[s], g.node_type(s).num_classes);
      p.bias[s] = random_matrix(rng, 1, g.node_type(s).num_classes);
    }
  }
  for (std::size_t t = 0; t < g.num_edge_types(); ++t) {
    const auto& e = g.edge_type(t);
    p.H.push_back(random_matrix(rng, p.dims[e.src], p.dims[e.dst], spec.h_scale));
  }
  return p;
}

/// Linear base, affine readout, every tensor zero.
inline ParamSet zero_params(const HeteroGraph& g, const std::vector<std::size_t>& dims) {
  ParamSet p;
  p.options.base = BaseKind::linear;
  p.dims = dims;
  const std::size_t S = g.num_node_types();
  p.W2.resize(S);
  p.theta.resize(S);
  p.bias.resize(S);
  for (std::size_t s = 0; s < S; ++s) {
    p.W.emplace_back(g.features(s).cols(), dims[s]);
    if (g.node_type(s).labeled) {
      p.theta[s] = Matrix(dims[s], g.node_type(s).num_classes);
      p.bias[s] = Matrix(1, g.node_type(s).num_classes);
    }
  }
  for (std::size_t t = 0; t < g.num_edge_types(); ++t)
    p.H.emplace_back(dims[g.edge_type(t).src], dims[g.edge_type(t).dst]);
  return p;
}

inline Instance random_instance(std::uint64_t seed, const InstanceSpec& spec = {}) {
  CounterRng rng(seed, 0x7e57);
  HeteroGraph g = random_graph(rng, spec);
  ParamSet p = random_params(rng, g, spec);
  return {std::move(g), std::move(p)};
}

inline EmbeddingSet random_embedding(CounterRng& rng, const HeteroGraph& g, const ParamSet& p, double scale = 1.0) {
  EmbeddingSet y;
  for (std::size_t s = 0; s < g.num_node_types(); ++s) y.blocks.push_back(random_matrix(rng, g.node_count(s), p.dims[s], scale));
  return y;
}

inline double rel_err(const Matrix& a, const Matrix& b) {
  const double den = std::max(frobenius_norm(b), 1e-300);
  return frobenius_norm(a - b) / den;
}

inline double rel_err(const EmbeddingSet& a, const EmbeddingSet& b) {
  const double den = std::max(b.norm(), 1e-300);
  return (a - b).norm() / den;
}

inline double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("halo_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Independent edge-by-edge evaluation of the energy.
inline double energy_by_edges(const HeteroGraph& g, const std::vector<Matrix>& H, const EmbeddingSet& f,
                              const EmbeddingSet& y, double lambda) {
  double fit = 0.0, pen = 0.0;
  for (std::size_t s = 0; s < y.size(); ++s)
    for (std::size_t k = 0; k < y[s].size(); ++k) {
      const double r = y[s].data()[k] - f[s].data()[k];
      fit += 0.5 * r * r;
    }
  for (std::size_t t = 0; t < g.num_edge_types(); ++t) {
    const auto& info = g.edge_type(t);
    for (const auto& e : g.edges(t)) {
      for (std::size_t c = 0; c < H[t].cols(); ++c) {
        double v = -y[info.dst](e.dst, c);
        for (std::size_t a = 0; a < H[t].rows(); ++a) v += y[info.src](e.src, a) * H[t](a, c);
        pen += 0.5 * lambda * v * v;
      }
    }
  }
  return fit + pen;
}

}  // namespace halo::testing
