#pragma once
// Preconditioned (proximal) descent on the energy, unrolled K times.
//
// One step, per node type s (Jacobi update: every type reads Y^(k) only):
//
//   Y_s' = (1 - alpha) Y_s
//        + alpha Dt_s^{-1} [ F_s + lambda sum_{t from s} ( A_t Y_s' G_t - D_st Y_s M_t ) ]
//
// with Dt_s = I + lambda D_s, G_t = H_t^T + H_{t_inv}, M_t = H_t H_t^T.
// With prox enabled every step is followed by an elementwise ReLU.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "halo/energy.hpp"
#include "halo/errors.hpp"
#include "halo/hetgraph.hpp"
#include "halo/linalg.hpp"

namespace halo {

struct UnfoldConfig {
  double alpha = 0.1;
  int K = 16;
  double lambda = 1.0;
  bool prox = true;
  bool prox_final = true;  ///< apply the ReLU after the last step too
  bool trace_energy = false;
};

inline void validate(const UnfoldConfig& cfg) {
  if (!(cfg.alpha > 0.0) || !std::isfinite(cfg.alpha)) throw ConfigError("alpha must be a positive finite number");
  if (cfg.K < 0) throw ConfigError("K must be >= 0");
  validate(EnergyConfig{cfg.lambda});
}

using ReluMask = std::vector<std::uint8_t>;  ///< row-major, 1 where the pre-activation was > 0

struct UnfoldResult {
  EmbeddingSet Y_final;
  std::vector<double> energy_trace;             ///< l(Y^(k)), k = 0..K, when tracing
  std::vector<std::vector<ReluMask>> relu_masks;  ///< [step][type], when prox is on
  /// Set when the trace was recorded under prox: it reports the energy without
  /// the nonnegativity indicator, which is not guaranteed to decrease.
  bool trace_under_prox = false;
};

/// Dt_s^{-1} = diag(1 / (1 + lambda D_s)); entries lie in (0, 1].
inline DiagMatrix preconditioner(const HeteroGraph& g, std::size_t s, double lambda) {
  validate(EnergyConfig{lambda});
  DiagMatrix d;
  const auto& ds = g.total_degree(s).entries;
  d.entries.reserve(ds.size());
  for (double v : ds) d.entries.push_back(1.0 / (1.0 + lambda * v));
  return d;
}

/// Quantities that stay fixed across the K steps of one forward pass.
struct StepContext {
  const HeteroGraph* graph = nullptr;
  std::vector<Matrix> H;
  CompatTerms compat;
  EmbeddingSet F;  ///< f(X; W), undropped
  std::vector<DiagMatrix> precond;

  StepContext(const HeteroGraph& g, const ParamSet& p, double lambda)
      : graph(&g), H(p.H), compat(compat_terms(g, p.H)), F(base_embed(g, p)) {
    for (std::size_t s = 0; s < g.num_node_types(); ++s) precond.push_back(preconditioner(g, s, lambda));
  }
};

namespace detail {

inline void require_finite_step(const HeteroGraph& g, const EmbeddingSet& y) {
  for (std::size_t s = 0; s < y.size(); ++s)
    if (!all_finite(y[s]))
      throw NumericError("unfold_step: non-finite embedding for node type '" + g.node_type(s).name + "'");
}

}  // namespace detail

/// The explicit propagation rule (terms a..d), without the proximal map.
inline EmbeddingSet unfold_step(const StepContext& ctx, const EmbeddingSet& y, double alpha, double lambda) {
  const HeteroGraph& g = *ctx.graph;
  EmbeddingSet out;
  out.blocks.reserve(y.size());
  for (std::size_t s = 0; s < y.size(); ++s) {
    Matrix acc(y[s].rows(), y[s].cols());
    for (std::size_t t : g.outgoing(s)) {
      const auto& info = g.edge_type(t);
      acc += matmul(spmm(g.adjacency(t), y[info.dst]), ctx.compat.G[t]);                  // (c)
      acc -= scale_rows(g.degree(s, t).entries, matmul(y[s], ctx.compat.M[t]));           // (d)
    }
    acc *= lambda;
    acc += ctx.F[s];                                                                       // (b)
    Matrix next = scale_rows(ctx.precond[s].entries, acc);
    next *= alpha;
    next.axpy(1.0 - alpha, y[s]);                                                          // (a)
    out.blocks.push_back(std::move(next));
  }
  detail::require_finite_step(g, out);
  return out;
}

/// The same step written as Y - alpha Dt^{-1} grad(Y).
inline EmbeddingSet unfold_step_gradient_form(const StepContext& ctx, const EmbeddingSet& y, double alpha,
                                              double lambda) {
  const EmbeddingSet grad = energy_grad(*ctx.graph, ctx.compat, ctx.F, y, lambda);
  EmbeddingSet out = y;
  for (std::size_t s = 0; s < y.size(); ++s) out[s].axpy(-alpha, scale_rows(ctx.precond[s].entries, grad[s]));
  detail::require_finite_step(*ctx.graph, out);
  return out;
}

inline EmbeddingSet unfold_step(const HeteroGraph& g, const ParamSet& p, const EmbeddingSet& y,
                                const UnfoldConfig& cfg) {
  validate(cfg);
  check_shapes(g, p, y);
  return unfold_step(StepContext(g, p, cfg.lambda), y, cfg.alpha, cfg.lambda);
}

/// Proximal map of the nonnegativity indicator: elementwise max(0, .).
inline EmbeddingSet prox_relu(EmbeddingSet y) {
  for (auto& b : y.blocks) b = relu(std::move(b));
  return y;
}

inline ReluMask relu_mask(const Matrix& pre) {
  ReluMask m(pre.size());
  for (std::size_t k = 0; k < pre.size(); ++k) m[k] = pre.data()[k] > 0.0 ? 1 : 0;
  return m;
}

// ---------------------------------------------------------------------------

struct StepBound {
  double bound = 2.0;
  double d_min = 0.0;
  double sigma_max = 0.0;  ///< largest eigenvalue of Q - P
  int iterations = 0;
  bool converged = true;
  bool dense_fallback = false;
};

struct StepBoundOptions {
  double tol = 1e-6;
  int max_iters = 10'000;
  std::vector<double>* warm = nullptr;  ///< reused start vector across calls
};

/// Largest eigenvalue of Q - P, matrix-free. Q - P + D is positive
/// semidefinite, so shifting by max(D) makes the spectrum nonnegative and
/// the dominant eigenvalue of the shifted operator is the algebraic maximum.
inline StepBound step_bound(const HeteroGraph& g, const ParamSet& p, double lambda, StepBoundOptions opt = {}) {
  validate(EnergyConfig{lambda});
  check_shapes(g, p);
  StepBound out;
  double d_max = 0.0;
  bool any = false;
  for (std::size_t s = 0; s < g.num_node_types(); ++s) {
    if (g.node_count(s) == 0 || p.dims[s] == 0) continue;
    const auto& ds = g.total_degree(s);
    out.d_min = any ? std::min(out.d_min, ds.min()) : ds.min();
    d_max = std::max(d_max, ds.max());
    any = true;
  }
  const CompatTerms c = compat_terms(g, p.H);
  EmbeddingSet shape;
  for (std::size_t s = 0; s < g.num_node_types(); ++s) shape.blocks.emplace_back(g.node_count(s), p.dims[s]);
  const std::size_t n = oracle_dim(g, p.dims);
  auto apply = [&](std::span<const double> x, std::span<double> y) {
    EmbeddingSet v = shape;
    std::size_t off = 0;
    for (auto& b : v.blocks) {
      std::copy(x.begin() + off, x.begin() + off + b.size(), b.data());
      off += b.size();
    }
    const EmbeddingSet r = coupling_apply(g, c, v);
    off = 0;
    for (const auto& b : r.blocks) {
      for (std::size_t k = 0; k < b.size(); ++k) y[off + k] = b.data()[k] + d_max * x[off + k];
      off += b.size();
    }
  };
  const auto pi = power_iteration_sym(apply, n, opt.tol, opt.max_iters, opt.warm);
  out.iterations = pi.iterations;
  out.converged = pi.converged;
  out.sigma_max = pi.value - d_max;
  if (!pi.converged) {
    if (n > kOracleDimCap)
      throw NumericError("step_bound: power iteration did not converge in " + std::to_string(opt.max_iters) +
                         " iterations");
    const SystemBlocks sys = assemble_system(g, p);
    out.sigma_max = dense_max_eigenvalue(sys.Q - sys.P);
    out.dense_fallback = true;
  }
  const double denom = 1.0 + lambda * (out.d_min + out.sigma_max);
  out.bound = denom > 0.0 ? (2.0 + 2.0 * lambda * out.d_min) / denom : std::numeric_limits<double>::infinity();
  return out;
}

inline constexpr double kStepSafety = 0.99;

// ---------------------------------------------------------------------------

/// K steps from the base embedding. y0 overrides the starting point (used
/// for dropout); by default Y^(0) = F.
inline UnfoldResult unfold_from(const StepContext& ctx, const UnfoldConfig& cfg, const EmbeddingSet* y0 = nullptr) {
  validate(cfg);
  const HeteroGraph& g = *ctx.graph;
  UnfoldResult res;
  EmbeddingSet y = y0 ? *y0 : ctx.F;
  res.trace_under_prox = cfg.trace_energy && cfg.prox;
  if (cfg.trace_energy) res.energy_trace.push_back(energy_value(g, ctx.H, ctx.F, y, cfg.lambda));
  for (int k = 0; k < cfg.K; ++k) {
    EmbeddingSet z = unfold_step(ctx, y, cfg.alpha, cfg.lambda);
    const bool apply_prox = cfg.prox && (cfg.prox_final || k + 1 < cfg.K);
    if (apply_prox) {
      std::vector<ReluMask> masks;
      for (const auto& b : z.blocks) masks.push_back(relu_mask(b));
      res.relu_masks.push_back(std::move(masks));
      z = prox_relu(std::move(z));
    }
    y = std::move(z);
    if (cfg.trace_energy) res.energy_trace.push_back(energy_value(g, ctx.H, ctx.F, y, cfg.lambda));
  }
  res.Y_final = std::move(y);
  return res;
}

inline UnfoldResult unfold(const HeteroGraph& g, const ParamSet& p, const UnfoldConfig& cfg) {
  validate(cfg);
  check_shapes(g, p);
  return unfold_from(StepContext(g, p, cfg.lambda), cfg);
}

/// Writes the energy trace as `step,energy` CSV.
inline void write_energy_trace(std::ostream& out, const std::vector<double>& trace) {
  out << "step,energy\n";
  char buf[64];
  for (std::size_t k = 0; k < trace.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", k, trace[k]);
    out << buf;
  }
}

}  // namespace halo
