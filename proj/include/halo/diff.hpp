#pragma once
// Reverse-mode differentiation through base transform, K unfolded
// (proximal) steps and the readout.
//
// Adjoint of one step, with R_s = alpha Dt_s^{-1} Zbar_s and Zbar the
// incoming adjoint gated by the step's ReLU mask:
//
//   Ybar_s  += (1 - alpha) Zbar_s - lambda sum_t D_st R_s M_t
//   Ybar_s' += lambda A_t^T R_s G_t^T          (A_t^T = A_{t_inv})
//   Fbar_s  += R_s
//   Gbar_t  += lambda (A_t Y_s')^T R_s
//   Mbar_t  -= lambda (D_st Y_s)^T R_s
//
// and finally Hbar_t += Gbar_t^T + (Mbar_t + Mbar_t^T) H_t,
// Hbar_{t_inv} += Gbar_t.

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "halo/energy.hpp"
#include "halo/errors.hpp"
#include "halo/hetgraph.hpp"
#include "halo/linalg.hpp"
#include "halo/readout.hpp"
#include "halo/rng.hpp"
#include "halo/unfold.hpp"

namespace halo {

struct TapeOptions {
  /// Keep Y^(k) for every k-th step only and recompute the rest during the
  /// backward pass. 1 stores every step.
  int checkpoint_every = 1;
  /// Per-type multiplicative mask applied to Y^(0) (inverted dropout). Empty = none.
  std::vector<Matrix> dropout_scale;
};

/// Recorded forward computation.
struct Tape {
  const HeteroGraph* graph = nullptr;
  ParamSet params;
  UnfoldConfig cfg;
  TapeOptions options;
  std::vector<Matrix> base_pre;          ///< X W before the ReLU (mlp base only)
  std::vector<EmbeddingSet> snapshots;   ///< Y^(k) at k = 0, c, 2c, ... (c = checkpoint_every)
  std::vector<std::vector<ReluMask>> masks;  ///< [step][type]; empty inner vector = no prox at that step
  EmbeddingSet Y_final;

  std::size_t memory_bytes() const {
    std::size_t b = 0;
    for (const auto& e : snapshots)
      for (const auto& m : e.blocks) b += m.size() * sizeof(double);
    for (const auto& step : masks)
      for (const auto& m : step) b += m.size();
    for (const auto& m : base_pre) b += m.size() * sizeof(double);
    return b;
  }
};

namespace detail {

inline EmbeddingSet starting_point(const StepContext& ctx, const TapeOptions& opt) {
  EmbeddingSet y = ctx.F;
  if (!opt.dropout_scale.empty())
    for (std::size_t s = 0; s < y.size(); ++s) y[s] = hadamard(y[s], opt.dropout_scale.at(s));
  return y;
}

/// One forward step including the optional prox; returns the mask used.
inline std::vector<ReluMask> advance(const StepContext& ctx, const UnfoldConfig& cfg, int k, EmbeddingSet& y) {
  EmbeddingSet z = unfold_step(ctx, y, cfg.alpha, cfg.lambda);
  std::vector<ReluMask> masks;
  if (cfg.prox && (cfg.prox_final || k + 1 < cfg.K)) {
    for (const auto& b : z.blocks) masks.push_back(relu_mask(b));
    z = prox_relu(std::move(z));
  }
  y = std::move(z);
  return masks;
}

}  // namespace detail

struct TapedForward {
  UnfoldResult result;
  Tape tape;
};

/// Same computation as unfold(), recording what the reverse pass needs.
inline TapedForward forward_with_tape(const HeteroGraph& g, const ParamSet& p, const UnfoldConfig& cfg,
                                      TapeOptions opt = {}) {
  validate(cfg);
  check_shapes(g, p);
  if (opt.checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
  const StepContext ctx(g, p, cfg.lambda);
  TapedForward out;
  Tape& tape = out.tape;
  tape.graph = &g;
  tape.params = p;
  tape.cfg = cfg;
  tape.options = opt;
  if (p.options.base == BaseKind::mlp)
    for (std::size_t s = 0; s < g.num_node_types(); ++s) tape.base_pre.push_back(matmul(g.features(s), p.W[s]));

  EmbeddingSet y = detail::starting_point(ctx, opt);
  auto& res = out.result;
  res.trace_under_prox = cfg.trace_energy && cfg.prox;
  if (cfg.trace_energy) res.energy_trace.push_back(energy_value(g, ctx.H, ctx.F, y, cfg.lambda));
  for (int k = 0; k < cfg.K; ++k) {
    if (k % opt.checkpoint_every == 0) tape.snapshots.push_back(y);
    auto masks = detail::advance(ctx, cfg, k, y);
    if (!masks.empty()) res.relu_masks.push_back(masks);
    if (opt.checkpoint_every == 1) tape.masks.push_back(std::move(masks));
    if (cfg.trace_energy) res.energy_trace.push_back(energy_value(g, ctx.H, ctx.F, y, cfg.lambda));
  }
  if (cfg.K == 0) tape.snapshots.push_back(y);
  tape.Y_final = y;
  res.Y_final = std::move(y);
  return out;
}

/// Recomputes Y^(K) from the first snapshot.
inline EmbeddingSet replay(const Tape& tape) {
  const StepContext ctx(*tape.graph, tape.params, tape.cfg.lambda);
  EmbeddingSet y = tape.snapshots.front();
  for (int k = 0; k < tape.cfg.K; ++k) detail::advance(ctx, tape.cfg, k, y);
  return y;
}

struct BackwardResult {
  GradSet grads;     ///< dW and dH; theta entries stay zero (see meta_loss)
  EmbeddingSet dY0;  ///< adjoint of Y^(0)
};

inline BackwardResult backward(const Tape& tape, const EmbeddingSet& dY_final) {
  const HeteroGraph& g = *tape.graph;
  const ParamSet& p = tape.params;
  const UnfoldConfig& cfg = tape.cfg;
  check_shapes(g, p, dY_final);
  const StepContext ctx(g, p, cfg.lambda);
  const std::size_t S = g.num_node_types();
  const std::size_t T = g.num_edge_types();

  std::vector<Matrix> Gbar, Mbar;
  for (std::size_t t = 0; t < T; ++t) {
    Gbar.emplace_back(ctx.compat.G[t].rows(), ctx.compat.G[t].cols());
    Mbar.emplace_back(ctx.compat.M[t].rows(), ctx.compat.M[t].cols());
  }
  EmbeddingSet Fbar = EmbeddingSet::zeros_like(dY_final);
  EmbeddingSet ybar = dY_final;

  const int every = tape.options.checkpoint_every;
  const int K = cfg.K;
  const int segments = K == 0 ? 0 : (K + every - 1) / every;
  for (int seg = segments - 1; seg >= 0; --seg) {
    const int k0 = seg * every;
    const int k1 = std::min(K, k0 + every);
    // Y^(k) and masks for k in [k0, k1).
    std::vector<EmbeddingSet> ys{tape.snapshots.at(seg)};
    std::vector<std::vector<ReluMask>> masks;
    if (every == 1) {
      masks.push_back(tape.masks.at(k0));
    } else {
      EmbeddingSet y = ys.front();
      for (int k = k0; k < k1; ++k) {
        masks.push_back(detail::advance(ctx, cfg, k, y));
        if (k + 1 < k1) ys.push_back(y);
      }
    }
    for (int k = k1 - 1; k >= k0; --k) {
      const EmbeddingSet& y = ys[k - k0];
      const auto& mask = masks[k - k0];
      EmbeddingSet zbar = ybar;
      if (!mask.empty())
        for (std::size_t s = 0; s < S; ++s)
          for (std::size_t e = 0; e < zbar[s].size(); ++e)
            if (!mask[s][e]) zbar[s].data()[e] = 0.0;
      EmbeddingSet next = zbar;
      for (std::size_t s = 0; s < S; ++s) next[s] *= (1.0 - cfg.alpha);
      for (std::size_t s = 0; s < S; ++s) {
        Matrix R = scale_rows(ctx.precond[s].entries, zbar[s]);
        R *= cfg.alpha;
        Fbar[s] += R;
        for (std::size_t t : g.outgoing(s)) {
          const auto& info = g.edge_type(t);
          const auto& deg = g.degree(s, t).entries;
          const Matrix AY = spmm(g.adjacency(t), y[info.dst]);
          Gbar[t].axpy(cfg.lambda, matmul_tn(AY, R));
          Mbar[t].axpy(-cfg.lambda, matmul_tn(scale_rows(deg, y[s]), R));
          next[s].axpy(-cfg.lambda, scale_rows(deg, matmul(R, ctx.compat.M[t])));
          next[info.dst].axpy(cfg.lambda, spmm(g.adjacency(info.inverse), matmul_nt(R, ctx.compat.G[t])));
        }
      }
      ybar = std::move(next);
    }
  }

  BackwardResult out;
  out.dY0 = ybar;
  for (std::size_t s = 0; s < S; ++s)
    Fbar[s] += tape.options.dropout_scale.empty() ? ybar[s] : hadamard(ybar[s], tape.options.dropout_scale[s]);

  out.grads = GradSet::zeros_like(p);
  for (std::size_t s = 0; s < S; ++s) {
    const Matrix& x = g.features(s);
    if (p.options.base == BaseKind::mlp) {
      const Matrix& pre = tape.base_pre.at(s);
      out.grads.W2[s] = matmul_tn(relu(pre), Fbar[s]);
      Matrix dh = matmul_nt(Fbar[s], p.W2[s]);
      for (std::size_t e = 0; e < dh.size(); ++e)
        if (!(pre.data()[e] > 0.0)) dh.data()[e] = 0.0;
      out.grads.W[s] = matmul_tn(x, dh);
    } else {
      out.grads.W[s] = matmul_tn(x, Fbar[s]);
    }
  }
  if (p.trainable(ParamGroup::H)) {
    for (std::size_t t = 0; t < T; ++t) {
      out.grads.H[t] += transpose(Gbar[t]);
      out.grads.H[t] += matmul(Mbar[t] + transpose(Mbar[t]), p.H[t]);
      out.grads.H[g.edge_type(t).inverse] += Gbar[t];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

struct FullGradient {
  double loss = 0.0;
  GradSet grads;
  TapedForward forward;
};

/// Loss and gradients of the meta-loss on one split w.r.t. every trainable tensor.
inline FullGradient full_gradient(const HeteroGraph& g, const ParamSet& p, const UnfoldConfig& cfg, SplitKind split,
                                  TapeOptions opt = {}) {
  FullGradient out;
  out.forward = forward_with_tape(g, p, cfg, std::move(opt));
  const LossResult lr = meta_loss(out.forward.result.Y_final, g, p, split);
  out.loss = lr.loss;
  out.grads = backward(out.forward.tape, lr.dY).grads;
  if (p.options.readout == ReadoutKind::affine)
    for (std::size_t s = 0; s < g.num_node_types(); ++s)
      if (!p.theta[s].empty()) {
        out.grads.theta[s] = lr.dtheta[s];
        out.grads.bias[s] = lr.dbias[s];
      }
  return out;
}

inline double meta_loss_at(const HeteroGraph& g, const ParamSet& p, const UnfoldConfig& cfg, SplitKind split) {
  return meta_loss(unfold(g, p, cfg).Y_final, g, p, split).loss;
}

// ---------------------------------------------------------------------------

struct GroupReport {
  double max_rel_error = 0.0;
  int probes = 0;
  int excluded = 0;  ///< probes whose perturbation flipped a ReLU mask
};

struct GradCheckReport {
  std::vector<std::pair<ParamGroup, GroupReport>> groups;
  double step = 0.0;

  double worst() const {
    double w = 0.0;
    for (const auto& [g, r] : groups) w = std::max(w, r.max_rel_error);
    return w;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["step"] = step;
    j["worst_rel_error"] = worst();
    for (const auto& [g, r] : groups) {
      nlohmann::ordered_json e;
      e["max_rel_error"] = r.max_rel_error;
      e["probes"] = r.probes;
      e["excluded_probes"] = r.excluded;
      if (r.excluded) e["note"] = "near-kink probes excluded";
      j["groups"][to_string(g)] = e;
    }
    return j;
  }
};

struct GradCheckOptions {
  double step = 1e-5;
  std::uint64_t seed = 1;
  SplitKind split = SplitKind::train;
  double abs_floor = 1e-8;  ///< denominator floor for the relative error
  /// Test hook applied to the analytic gradient before comparison.
  std::function<void(GradSet&)> tamper;
};

/// |a - b| / max(|a|, |b|, floor)
inline double relative_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Compares analytic directional derivatives with central differences along
/// random unit directions, per parameter group.
inline GradCheckReport grad_check(const HeteroGraph& g, const ParamSet& p, const UnfoldConfig& cfg, int n_probes,
                                  const GradCheckOptions& opt = {}) {
  if (n_probes < 1) throw ConfigError("grad_check: n_probes must be >= 1");
  FullGradient fg = full_gradient(g, p, cfg, opt.split);
  if (opt.tamper) opt.tamper(fg.grads);
  const auto base_masks = fg.forward.result.relu_masks;
  GradCheckReport report;
  report.step = opt.step;
  CounterRng rng(opt.seed, 0x67726164ULL);

  for (ParamGroup group : {ParamGroup::W, ParamGroup::H, ParamGroup::Theta}) {
    if (!p.trainable(group)) continue;
    bool present = false;
    ParamTensors::visit(p, g, [&](ParamGroup gr, const std::string&, const Matrix&) { present |= gr == group; });
    if (!present) continue;
    GroupReport rep;
    for (int probe = 0; probe < n_probes; ++probe) {
      // Random unit direction restricted to this group.
      ParamSet dir = p;
      double norm2 = 0.0;
      ParamTensors::visit(dir, g, [&](ParamGroup gr, const std::string&, Matrix& m) {
        for (double& v : m.values()) {
          v = gr == group ? rng.normal() : 0.0;
          norm2 += v * v;
        }
      });
      const double inv = 1.0 / std::sqrt(norm2);
      double analytic = 0.0;
      std::vector<const Matrix*> grads;
      ParamTensors::visit(fg.grads, g, [&](ParamGroup, const std::string&, const Matrix& m) { grads.push_back(&m); });
      std::size_t idx = 0;
      ParamSet plus = p, minus = p;
      std::vector<Matrix*> pp, mm;
      ParamTensors::visit(plus, g, [&](ParamGroup, const std::string&, Matrix& m) { pp.push_back(&m); });
      ParamTensors::visit(minus, g, [&](ParamGroup, const std::string&, Matrix& m) { mm.push_back(&m); });
      ParamTensors::visit(dir, g, [&](ParamGroup, const std::string&, Matrix& m) {
        m *= inv;
        analytic += dot(*grads[idx], m);
        pp[idx]->axpy(opt.step, m);
        mm[idx]->axpy(-opt.step, m);
        ++idx;
      });
      const TapedForward fp = forward_with_tape(g, plus, cfg);
      const TapedForward fm = forward_with_tape(g, minus, cfg);
      if (fp.result.relu_masks != base_masks || fm.result.relu_masks != base_masks) {
        ++rep.excluded;
        continue;
      }
      const double lp = meta_loss(fp.result.Y_final, g, plus, opt.split).loss;
      const double lm = meta_loss(fm.result.Y_final, g, minus, opt.split).loss;
      const double numeric = (lp - lm) / (2.0 * opt.step);
      rep.max_rel_error = std::max(rep.max_rel_error, relative_error(analytic, numeric, opt.abs_floor));
      ++rep.probes;
    }
    report.groups.emplace_back(group, rep);
  }
  return report;
}

}  // namespace halo
