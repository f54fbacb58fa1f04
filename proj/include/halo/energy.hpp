#pragma once
// Relation-aware energy
//
//   l(Y) = sum_s [ 1/2 ||Y_s - f(X_s;W_s)||_F^2
//                  + lambda/2 sum_{t from s} sum_{(i,j) in E_t} ||y_si H_t - y_s'j||^2 ]
//
// where t ranges over canonical and inverse edge types alike, so each
// undirected edge contributes one term per direction with that direction's
// own compatibility matrix.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "halo/errors.hpp"
#include "halo/hetgraph.hpp"
#include "halo/linalg.hpp"

namespace halo {

enum class BaseKind { linear, mlp };
enum class ReadoutKind { affine, identity };

struct ModelOptions {
  std::size_t hidden = 32;      ///< embedding width d_s (identity readout forces d_s = c_s)
  std::size_t mlp_hidden = 64;  ///< inner width of the two-layer base transform
  BaseKind base = BaseKind::linear;
  ReadoutKind readout = ReadoutKind::affine;
  bool fixed_identity_H = false;  ///< ablation: H_t = I and excluded from training
};

enum class ParamGroup { W, H, Theta };

inline const char* to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::W: return "W";
    case ParamGroup::H: return "H";
    case ParamGroup::Theta: return "theta";
  }
  return "?";
}

/// Tensors shared by ParamSet and GradSet. Vectors are indexed by node type
/// (W, W2, theta, bias) or edge type (H); unused slots hold empty matrices.
struct ParamTensors {
  std::vector<Matrix> W;      ///< d_0s x d_s (linear) or d_0s x mlp_hidden
  std::vector<Matrix> W2;     ///< mlp_hidden x d_s, mlp base only
  std::vector<Matrix> H;      ///< d_s x d_s' per edge type, t and t_inv independent
  std::vector<Matrix> theta;  ///< d_s x c_s, affine readout on labeled types
  std::vector<Matrix> bias;   ///< 1 x c_s

  /// Visits every non-empty tensor in a fixed order with a stable name.
  template <class Self, class Fn>
  static void visit(Self& self, const HeteroGraph& g, Fn&& fn) {
    for (std::size_t s = 0; s < self.W.size(); ++s)
      if (!self.W[s].empty()) fn(ParamGroup::W, "W/" + g.node_type(s).name, self.W[s]);
    for (std::size_t s = 0; s < self.W2.size(); ++s)
      if (!self.W2[s].empty()) fn(ParamGroup::W, "W2/" + g.node_type(s).name, self.W2[s]);
    for (std::size_t t = 0; t < self.H.size(); ++t)
      if (!self.H[t].empty()) fn(ParamGroup::H, "H/" + g.edge_type(t).name, self.H[t]);
    for (std::size_t s = 0; s < self.theta.size(); ++s)
      if (!self.theta[s].empty()) fn(ParamGroup::Theta, "theta/" + g.node_type(s).name, self.theta[s]);
    for (std::size_t s = 0; s < self.bias.size(); ++s)
      if (!self.bias[s].empty()) fn(ParamGroup::Theta, "bias/" + g.node_type(s).name, self.bias[s]);
  }

  friend bool operator==(const ParamTensors&, const ParamTensors&) = default;
};

struct ParamSet : ParamTensors {
  ModelOptions options;
  std::vector<std::size_t> dims;  ///< d_s per node type

  bool trainable(ParamGroup g) const { return !(g == ParamGroup::H && options.fixed_identity_H); }
};

struct GradSet : ParamTensors {
  /// Zero tensors shaped like p.
  static GradSet zeros_like(const ParamSet& p) {
    GradSet gs;
    auto z = [](const std::vector<Matrix>& v) {
      std::vector<Matrix> out;
      out.reserve(v.size());
      for (const auto& m : v) out.emplace_back(m.rows(), m.cols());
      return out;
    };
    gs.W = z(p.W);
    gs.W2 = z(p.W2);
    gs.H = z(p.H);
    gs.theta = z(p.theta);
    gs.bias = z(p.bias);
    return gs;
  }
};

/// Per-node-type embedding blocks Y_s (n_s x d_s).
struct EmbeddingSet {
  std::vector<Matrix> blocks;

  std::size_t size() const { return blocks.size(); }
  Matrix& operator[](std::size_t s) { return blocks[s]; }
  const Matrix& operator[](std::size_t s) const { return blocks[s]; }

  static EmbeddingSet zeros_like(const EmbeddingSet& o) {
    EmbeddingSet e;
    for (const auto& b : o.blocks) e.blocks.emplace_back(b.rows(), b.cols());
    return e;
  }

  double dot(const EmbeddingSet& o) const {
    double acc = 0.0;
    for (std::size_t s = 0; s < blocks.size(); ++s) acc += halo::dot(blocks[s], o.blocks[s]);
    return acc;
  }
  double norm() const { return std::sqrt(dot(*this)); }

  EmbeddingSet& operator-=(const EmbeddingSet& o) {
    for (std::size_t s = 0; s < blocks.size(); ++s) blocks[s] -= o.blocks[s];
    return *this;
  }
  EmbeddingSet& operator+=(const EmbeddingSet& o) {
    for (std::size_t s = 0; s < blocks.size(); ++s) blocks[s] += o.blocks[s];
    return *this;
  }
  friend EmbeddingSet operator-(EmbeddingSet a, const EmbeddingSet& b) { return a -= b; }
  friend bool operator==(const EmbeddingSet&, const EmbeddingSet&) = default;
};

/// Relative Frobenius distance ||a - b|| / ||b||.
inline double relative_gap(const EmbeddingSet& a, const EmbeddingSet& b) {
  const double denom = b.norm();
  return (a - b).norm() / (denom > 0.0 ? denom : 1.0);
}

struct EnergyConfig {
  double lambda = 1.0;
};

inline void validate(const EnergyConfig& cfg) {
  if (!(cfg.lambda > 0.0) || !std::isfinite(cfg.lambda)) throw ConfigError("lambda must be a positive finite number");
}

// ---------------------------------------------------------------------------

inline void check_shapes(const HeteroGraph& g, const ParamSet& p) {
  const std::size_t S = g.num_node_types();
  if (p.W.size() != S || p.dims.size() != S || p.H.size() != g.num_edge_types())
    throw ShapeError("ParamSet does not match the graph schema");
  for (std::size_t s = 0; s < S; ++s) {
    const std::size_t d0 = g.features(s).cols();
    if (p.W[s].rows() != d0)
      throw ShapeError("W/" + g.node_type(s).name + ": expected " + std::to_string(d0) + " rows, got " +
                       p.W[s].shape_string());
    const bool mlp = p.options.base == BaseKind::mlp;
    const std::size_t out = mlp ? p.W2.at(s).cols() : p.W[s].cols();
    if (out != p.dims[s]) throw ShapeError("base transform for '" + g.node_type(s).name + "' has wrong width");
    if (mlp && p.W2[s].rows() != p.W[s].cols()) throw ShapeError("W2/" + g.node_type(s).name + ": inner width mismatch");
  }
  for (std::size_t t = 0; t < g.num_edge_types(); ++t) {
    const auto& e = g.edge_type(t);
    if (p.H[t].rows() != p.dims[e.src] || p.H[t].cols() != p.dims[e.dst])
      throw ShapeError("H/" + e.name + ": expected " + std::to_string(p.dims[e.src]) + "x" +
                       std::to_string(p.dims[e.dst]) + ", got " + p.H[t].shape_string());
  }
}

inline void check_shapes(const HeteroGraph& g, const ParamSet& p, const EmbeddingSet& y) {
  if (y.size() != g.num_node_types()) throw ShapeError("EmbeddingSet has wrong number of node types");
  for (std::size_t s = 0; s < y.size(); ++s)
    if (y[s].rows() != g.node_count(s) || y[s].cols() != p.dims[s])
      throw ShapeError("Y/" + g.node_type(s).name + ": expected " + std::to_string(g.node_count(s)) + "x" +
                       std::to_string(p.dims[s]) + ", got " + y[s].shape_string());
}

inline Matrix relu(Matrix m) {
  for (double& v : m.values()) v = v > 0.0 ? v : 0.0;
  return m;
}

/// f(X_s; W_s): X W (linear) or relu(X W) W2 (mlp).
inline Matrix base_transform(const Matrix& x, const ParamSet& p, std::size_t s) {
  if (p.options.base == BaseKind::mlp) return matmul(relu(matmul(x, p.W[s])), p.W2[s]);
  return matmul(x, p.W[s]);
}

/// Y^(0)_s = f(X_s; W_s) for every node type.
inline EmbeddingSet base_embed(const HeteroGraph& g, const ParamSet& p) {
  check_shapes(g, p);
  EmbeddingSet y;
  for (std::size_t s = 0; s < g.num_node_types(); ++s) y.blocks.push_back(base_transform(g.features(s), p, s));
  return y;
}

/// The two parameter products used by every step: G_t = H_t^T + H_{t_inv}
/// (d_s' x d_s) and M_t = H_t H_t^T (d_s x d_s).
struct CompatTerms {
  std::vector<Matrix> G;
  std::vector<Matrix> M;
};

inline CompatTerms compat_terms(const HeteroGraph& g, const std::vector<Matrix>& H) {
  CompatTerms c;
  for (std::size_t t = 0; t < g.num_edge_types(); ++t) {
    c.G.push_back(transpose(H[t]) + H[g.edge_type(t).inverse]);
    c.M.push_back(matmul_nt(H[t], H[t]));
  }
  return c;
}

/// Energy evaluated edge by edge against a given base embedding F.
inline double energy_value(const HeteroGraph& g, const std::vector<Matrix>& H, const EmbeddingSet& f,
                           const EmbeddingSet& y, double lambda) {
  double fit = 0.0;
  for (std::size_t s = 0; s < y.size(); ++s) {
    const Matrix diff = y[s] - f[s];
    fit += 0.5 * dot(diff, diff);
  }
  double penalty = 0.0;
  for (std::size_t t = 0; t < g.num_edge_types(); ++t) {
    const auto& info = g.edge_type(t);
    const Matrix& ys = y[info.src];
    const Matrix& yd = y[info.dst];
    const Matrix& h = H[t];
    std::vector<double> r(h.cols());
    for (const auto& e : g.edges(t)) {
      auto yi = ys.row(e.src);
      auto yj = yd.row(e.dst);
      std::fill(r.begin(), r.end(), 0.0);
      for (std::size_t a = 0; a < h.rows(); ++a) {
        const double v = yi[a];
        if (v == 0.0) continue;
        auto hrow = h.row(a);
        for (std::size_t b = 0; b < h.cols(); ++b) r[b] += v * hrow[b];
      }
      for (std::size_t b = 0; b < h.cols(); ++b) {
        const double d = r[b] - yj[b];
        penalty += d * d;
      }
    }
  }
  return fit + 0.5 * lambda * penalty;
}

inline double energy_value(const HeteroGraph& g, const ParamSet& p, const EmbeddingSet& y, const EnergyConfig& cfg) {
  validate(cfg);
  check_shapes(g, p, y);
  return energy_value(g, p.H, base_embed(g, p), y, cfg.lambda);
}

/// sum over t from s of [ D_st Y_s M_t - A_t Y_s' G_t ]: the (Q - P) vec(Y) part of the gradient.
inline EmbeddingSet coupling_apply(const HeteroGraph& g, const CompatTerms& c, const EmbeddingSet& y) {
  EmbeddingSet out = EmbeddingSet::zeros_like(y);
  for (std::size_t s = 0; s < y.size(); ++s) {
    for (std::size_t t : g.outgoing(s)) {
      const auto& info = g.edge_type(t);
      out[s] += scale_rows(g.degree(s, t).entries, matmul(y[s], c.M[t]));
      out[s] -= matmul(spmm(g.adjacency(t), y[info.dst]), c.G[t]);
    }
  }
  return out;
}

/// grad_s = (I + lambda D_s) Y_s - F_s + lambda sum_t [ D_st Y_s H_t H_t^T - A_t Y_s' (H_t^T + H_{t_inv}) ]
inline EmbeddingSet energy_grad(const HeteroGraph& g, const CompatTerms& c, const EmbeddingSet& f,
                                const EmbeddingSet& y, double lambda) {
  EmbeddingSet grad = coupling_apply(g, c, y);
  for (std::size_t s = 0; s < y.size(); ++s) {
    grad[s] *= lambda;
    const auto& ds = g.total_degree(s).entries;
    for (std::size_t i = 0; i < y[s].rows(); ++i) {
      const double w = 1.0 + lambda * ds[i];
      auto gr = grad[s].row(i);
      auto yr = y[s].row(i);
      auto fr = f[s].row(i);
      for (std::size_t j = 0; j < gr.size(); ++j) gr[j] += w * yr[j] - fr[j];
    }
  }
  return grad;
}

inline EmbeddingSet energy_grad(const HeteroGraph& g, const ParamSet& p, const EmbeddingSet& y,
                                const EnergyConfig& cfg) {
  validate(cfg);
  check_shapes(g, p, y);
  return energy_grad(g, compat_terms(g, p.H), base_embed(g, p), y, cfg.lambda);
}

// ---------------------------------------------------------------------------
// Oracle-scale dense assembly (column-stacking vec, node types in order).

inline constexpr std::size_t kOracleDimCap = 2000;

inline std::vector<double> stack(const EmbeddingSet& y) {
  std::vector<double> v;
  for (const auto& b : y.blocks) {
    auto part = vectorize(b);
    v.insert(v.end(), part.begin(), part.end());
  }
  return v;
}

inline EmbeddingSet unstack(std::span<const double> v, const HeteroGraph& g, const std::vector<std::size_t>& dims) {
  EmbeddingSet y;
  std::size_t off = 0;
  for (std::size_t s = 0; s < g.num_node_types(); ++s) {
    const std::size_t n = g.node_count(s) * dims[s];
    if (off + n > v.size()) throw ShapeError("unstack: vector too short");
    y.blocks.push_back(unvectorize(v.subspan(off, n), g.node_count(s), dims[s]));
    off += n;
  }
  if (off != v.size()) throw ShapeError("unstack: vector too long");
  return y;
}

struct SystemBlocks {
  Matrix P, Q, D;
  std::vector<std::size_t> offsets;  ///< start of each node type's block in vec space

  std::size_t dim() const { return P.rows(); }
  /// I + lambda (Q - P + D), the Hessian of the energy.
  Matrix system_matrix(double lambda) const {
    Matrix a = Q - P + D;
    a *= lambda;
    for (std::size_t i = 0; i < a.rows(); ++i) a(i, i) += 1.0;
    return a;
  }
};

inline std::size_t oracle_dim(const HeteroGraph& g, const std::vector<std::size_t>& dims) {
  std::size_t n = 0;
  for (std::size_t s = 0; s < g.num_node_types(); ++s) n += g.node_count(s) * dims.at(s);
  return n;
}

/// Dense P, Q, D with
///   P_ss' = sum_{t in T_ss'} (H_t + H_{t_inv}^T) kron A_t
///   Q     = direct sum over s of sum_t (H_t H_t^T) kron D_st
///   D     = direct sum over s of I kron D_s
/// so that vec(grad) = vec(Y) - vec(F) + lambda (Q - P + D) vec(Y).
inline SystemBlocks assemble_system(const HeteroGraph& g, const ParamSet& p) {
  check_shapes(g, p);
  const std::size_t N = oracle_dim(g, p.dims);
  if (N > kOracleDimCap)
    throw ConfigError("assemble_system: system dimension " + std::to_string(N) + " exceeds oracle cap of " +
                      std::to_string(kOracleDimCap));
  SystemBlocks sys{Matrix(N, N), Matrix(N, N), Matrix(N, N), {}};
  std::size_t off = 0;
  for (std::size_t s = 0; s < g.num_node_types(); ++s) {
    sys.offsets.push_back(off);
    off += g.node_count(s) * p.dims[s];
  }
  const CompatTerms c = compat_terms(g, p.H);
  for (std::size_t s = 0; s < g.num_node_types(); ++s) {
    const std::size_t n = g.node_count(s);
    for (std::size_t t : g.outgoing(s)) {
      const auto& info = g.edge_type(t);
      kron_accumulate(transpose(c.G[t]), g.adjacency(t), sys.P, sys.offsets[s], sys.offsets[info.dst]);
      const auto& deg = g.degree(s, t).entries;
      for (std::size_t a = 0; a < p.dims[s]; ++a)
        for (std::size_t b = 0; b < p.dims[s]; ++b)
          for (std::size_t i = 0; i < n; ++i)
            sys.Q(sys.offsets[s] + a * n + i, sys.offsets[s] + b * n + i) += c.M[t](a, b) * deg[i];
    }
    const auto& ds = g.total_degree(s).entries;
    for (std::size_t a = 0; a < p.dims[s]; ++a)
      for (std::size_t i = 0; i < n; ++i) sys.D(sys.offsets[s] + a * n + i, sys.offsets[s] + a * n + i) = ds[i];
  }
  return sys;
}

/// Closed-form minimizer: vec(Y*) = (I + lambda (Q - P + D))^{-1} vec(F).
inline EmbeddingSet exact_solution(const HeteroGraph& g, const ParamSet& p, const EnergyConfig& cfg) {
  validate(cfg);
  const SystemBlocks sys = assemble_system(g, p);
  const std::vector<double> rhs = stack(base_embed(g, p));
  Matrix b(rhs.size(), 1);
  for (std::size_t i = 0; i < rhs.size(); ++i) b(i, 0) = rhs[i];
  const Matrix x = dense_solve(sys.system_matrix(cfg.lambda), b);
  return unstack(x.values(), g, p.dims);
}

}  // namespace halo
