#pragma once
// Bilevel training loop: K unfolded steps inside, meta-loss outside.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "halo/diff.hpp"
#include "halo/energy.hpp"
#include "halo/errors.hpp"
#include "halo/hetgraph.hpp"
#include "halo/linalg.hpp"
#include "halo/readout.hpp"
#include "halo/rng.hpp"
#include "halo/unfold.hpp"

namespace halo {

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
  int epochs = 200;
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 1e-2;
  double weight_decay = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  double dropout = 0.0;  ///< inverted dropout on Y^(0), training forward passes only
  int patience = 0;      ///< early stopping on validation accuracy; 0 disables
  bool select_best_val = true;
  bool alpha_auto = true;  ///< alpha = 0.99 x step bound at initialization
  bool alpha_refresh = false;  ///< with alpha_auto: re-resolve alpha after every optimizer step
  UnfoldConfig unfold;
  ModelOptions model;
};

inline void validate(const TrainConfig& c) {
  if (c.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(c.learning_rate >= 0.0) || !std::isfinite(c.learning_rate)) throw ConfigError("learning_rate must be >= 0");
  if (!(c.weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (c.patience < 0) throw ConfigError("patience must be >= 0");
  if (!(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0) || !(c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0))
    throw ConfigError("adam betas must lie in [0, 1)");
  if (!(c.adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be positive");
  if (c.model.hidden == 0) throw ConfigError("hidden must be >= 1");
  if (c.model.base == BaseKind::mlp && c.model.mlp_hidden == 0) throw ConfigError("mlp_hidden must be >= 1");
  UnfoldConfig u = c.unfold;
  if (c.alpha_auto) u.alpha = 1.0;
  validate(u);
}

/// Per-dataset defaults from the reference experiments.
struct DatasetHyperparams {
  const char* name;
  std::size_t hidden;
  double learning_rate;
  double weight_decay;
  int K;
  double lambda;
  double alpha;
};

inline constexpr std::array<DatasetHyperparams, 8> kDatasetHyperparams{{
    {"DBLP", 256, 1e-4, 1e-5, 8, 1.0, 1.0},
    {"IMDB", 64, 1e-3, 1e-5, 32, 1.0, 1.0},
    {"ACM", 32, 1e-2, 1e-4, 32, 0.1, 0.1},
    {"Freebase", 32, 1e-2, 1e-3, 4, 1.0, 1.0},
    {"AIFB", 16, 1e-3, 1e-5, 16, 1.0, 0.1},
    {"MUTAG", 16, 1e-3, 1e-4, 16, 0.01, 1.0},
    {"BGS", 16, 1e-2, 1e-5, 8, 0.1, 1.0},
    {"AM", 16, 1e-2, 1e-4, 4, 1.0, 1.0},
}};

inline void apply_dataset_hyperparams(TrainConfig& c, const std::string& name) {
  for (const auto& h : kDatasetHyperparams) {
    if (name != h.name) continue;
    c.model.hidden = h.hidden;
    c.learning_rate = h.learning_rate;
    c.weight_decay = h.weight_decay;
    c.unfold.K = h.K;
    c.unfold.lambda = h.lambda;
    c.unfold.alpha = h.alpha;
    c.alpha_auto = false;
    return;
  }
  throw ConfigError("no stored hyperparameters for dataset '" + name + "'");
}

// ---------------------------------------------------------------------------
// Initialization

inline std::vector<std::size_t> embedding_dims(const HeteroGraph& g, const ModelOptions& m) {
  std::vector<std::size_t> dims;
  for (const auto& nt : g.node_types())
    dims.push_back(m.readout == ReadoutKind::identity && nt.labeled ? static_cast<std::size_t>(nt.num_classes)
                                                                    : m.hidden);
  return dims;
}

/// W and theta: uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)); H: the same scaled
/// by 0.1, or the identity under the fixed-H ablation.
inline ParamSet init_params(const HeteroGraph& g, const ModelOptions& m, std::uint64_t seed) {
  ParamSet p;
  p.options = m;
  p.dims = embedding_dims(g, m);
  std::uint64_t stream = 0;
  auto uniform = [&](std::size_t rows, std::size_t cols, double scale) {
    CounterRng rng(seed, ++stream);
    Matrix w(rows, cols);
    const double a = scale / std::sqrt(static_cast<double>(std::max<std::size_t>(rows, 1)));
    for (double& v : w.values()) v = rng.uniform(-a, a);
    return w;
  };
  const std::size_t S = g.num_node_types();
  p.W.resize(S);
  p.W2.resize(S);
  p.theta.resize(S);
  p.bias.resize(S);
  for (std::size_t s = 0; s < S; ++s) {
    const std::size_t d0 = g.features(s).cols();
    if (m.base == BaseKind::mlp) {
      p.W[s] = uniform(d0, m.mlp_hidden, 1.0);
      p.W2[s] = uniform(m.mlp_hidden, p.dims[s], 1.0);
    } else {
      p.W[s] = uniform(d0, p.dims[s], 1.0);
    }
  }
  for (std::size_t t = 0; t < g.num_edge_types(); ++t) {
    const auto& e = g.edge_type(t);
    if (m.fixed_identity_H) {
      if (p.dims[e.src] != p.dims[e.dst])
        throw ConfigError("fixed identity H needs equal embedding widths across edge type '" + e.name + "'");
      p.H.push_back(Matrix::identity(p.dims[e.src]));
    } else {
      p.H.push_back(uniform(p.dims[e.src], p.dims[e.dst], 0.1));
    }
  }
  if (m.readout == ReadoutKind::affine)
    for (std::size_t s = 0; s < S; ++s) {
      const auto& nt = g.node_type(s);
      if (!nt.labeled) continue;
      p.theta[s] = uniform(p.dims[s], nt.num_classes, 1.0);
      Matrix b = uniform(1, nt.num_classes, 1.0);
      b *= 1.0 / std::sqrt(static_cast<double>(p.dims[s]));
      p.bias[s] = std::move(b);
    }
  return p;
}

// ---------------------------------------------------------------------------
// Optimizers


/// SGD or Adam with L2 weight decay folded into the gradient. Tensors whose
/// group is not trainable (fixed identity H) are left untouched.
class Optimizer {
public:
  explicit Optimizer(const TrainConfig& c) : cfg_(c) {}

  void step(const HeteroGraph& g, ParamSet& p, const GradSet& grads) {
    std::vector<std::pair<ParamGroup, Matrix*>> params;
    std::vector<const Matrix*> gr;
    ParamTensors::visit(p, g, [&](ParamGroup group, const std::string&, Matrix& m) { params.emplace_back(group, &m); });
    ParamTensors::visit(grads, g, [&](ParamGroup, const std::string&, const Matrix& m) { gr.push_back(&m); });
    if (gr.size() != params.size()) throw ShapeError("optimizer: gradient does not match parameters");
    if (m_.empty())
      for (const auto& [group, m] : params) {
        m_.emplace_back(m->rows(), m->cols());
        v_.emplace_back(m->rows(), m->cols());
      }
    ++t_;
    const double lr = cfg_.learning_rate, wd = cfg_.weight_decay;
    const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, t_), c2 = 1.0 - std::pow(b2, t_);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto [group, param] = params[k];
      if (!p.trainable(group)) continue;
      if (!gr[k]->same_shape(*param)) throw ShapeError("optimizer: gradient shape mismatch");
      double* w = param->data();
      const double* d = gr[k]->data();
      for (std::size_t e = 0; e < param->size(); ++e) {
        const double grad = d[e] + wd * w[e];
        if (cfg_.optimizer == OptimizerKind::sgd) {
          w[e] -= lr * grad;
          continue;
        }
        double& m = m_[k].data()[e];
        double& v = v_[k].data()[e];
        m = b1 * m + (1.0 - b1) * grad;
        v = b2 * v + (1.0 - b2) * grad * grad;
        w[e] -= lr * (m / c1) / (std::sqrt(v / c2) + cfg_.adam_epsilon);
      }
    }
  }

private:
  TrainConfig cfg_;
  std::vector<Matrix> m_, v_;
  int t_ = 0;
};

// ---------------------------------------------------------------------------
// Evaluation

struct SplitMetrics {
  std::vector<std::optional<double>> type_accuracy;  ///< per node type; empty for unlabeled or no nodes in split
  std::vector<std::size_t> counts;
  double overall = 0.0;
  std::size_t total = 0;
};

inline SplitMetrics split_metrics(const EmbeddingSet& y, const HeteroGraph& g, const ParamSet& p, SplitKind split) {
  const SplitAccuracy acc = split_accuracy(y, g, p, split);
  SplitMetrics m;
  for (std::size_t s = 0; s < g.num_node_types(); ++s) {
    m.counts.push_back(acc.total[s]);
    m.type_accuracy.push_back(acc.total[s] ? std::optional<double>(acc.type_accuracy(s)) : std::nullopt);
    m.total += acc.total[s];
  }
  m.overall = acc.overall();
  return m;
}

/// Argmax accuracy per labeled type and micro-averaged overall.
inline SplitMetrics evaluate(const HeteroGraph& g, const ParamSet& p, const UnfoldConfig& cfg, SplitKind split) {
  SplitMetrics m = split_metrics(unfold(g, p, cfg).Y_final, g, p, split);
  if (m.total == 0) throw ConfigError(std::string("evaluate: the ") + to_string(split) + " split is empty");
  return m;
}

struct Metrics {
  SplitMetrics train, val, test;
  double final_train_loss = 0.0;
  int best_epoch = 0;  ///< epoch whose parameters were returned (0 = initialization)
  int epochs_run = 0;
};

struct HistoryRow {
  int epoch = 0;
  double loss = 0.0;  ///< train meta-loss of the forward pass that produced this epoch's gradient
  double train_acc = 0.0;
  double val_acc = 0.0;
  double energy = 0.0;  ///< energy at Y^(K) after the update
};

struct TrainResult {
  ParamSet params;
  Metrics metrics;
  std::vector<HistoryRow> history;
  UnfoldConfig unfold;  ///< resolved, alpha included
  StepBound initial_bound;
  StepBound final_bound;  ///< at the returned parameters
  std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<Matrix> dropout_scale(const HeteroGraph& g, const std::vector<std::size_t>& dims, double rate,
                                         std::uint64_t seed, int epoch) {
  if (rate <= 0.0) return {};
  CounterRng rng(seed, 0x64726f70ULL + static_cast<std::uint64_t>(epoch));
  const double keep = 1.0 / (1.0 - rate);
  std::vector<Matrix> out;
  for (std::size_t s = 0; s < g.num_node_types(); ++s) {
    Matrix m(g.node_count(s), dims[s]);
    for (double& v : m.values()) v = rng.uniform() < rate ? 0.0 : keep;
    out.push_back(std::move(m));
  }
  return out;
}

inline bool any_nonempty(const HeteroGraph& g, SplitKind k) {
  for (std::size_t s = 0; s < g.num_node_types(); ++s)
    if (g.node_type(s).labeled && !g.split(s).get(k).empty()) return true;
  return false;
}

}  // namespace detail

/// Resolves alpha: "auto" becomes kStepSafety x the bound at p; an explicit
/// alpha above the bound is kept and reported.
inline UnfoldConfig resolve_alpha(const HeteroGraph& g, const ParamSet& p, const TrainConfig& cfg, StepBound& bound,
                                  std::vector<std::string>& warnings, StepBoundOptions bopt = {}) {
  UnfoldConfig u = cfg.unfold;
  bound = step_bound(g, p, u.lambda, bopt);
  if (cfg.alpha_auto) {
    if (std::isfinite(bound.bound)) {
      u.alpha = kStepSafety * bound.bound;
    } else {
      u.alpha = 1.0;
      warnings.push_back("step bound is unbounded; alpha auto falls back to 1");
    }
  } else if (u.alpha > bound.bound) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "alpha %.12g exceeds the step bound %.12g at initialization", u.alpha, bound.bound);
    warnings.emplace_back(buf);
  }
  return u;
}

using EpochCallback = std::function<void(const HistoryRow&)>;

inline TrainResult train(const HeteroGraph& g, const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  validate(cfg);
  if (!detail::any_nonempty(g, SplitKind::train)) throw ConfigError("train: no labeled node type has a train split");
  TrainResult out;
  ParamSet p = init_params(g, cfg.model, cfg.seed);
  UnfoldConfig ucfg = resolve_alpha(g, p, cfg, out.initial_bound, out.warnings);
  StepBound bound = out.initial_bound;
  const bool refresh = cfg.alpha_auto && cfg.alpha_refresh;
  std::vector<double> warm;  // previous dominant eigenvector; refreshes converge in a few iterations
  StepBoundOptions bopt;
  bopt.warm = &warm;
  const bool has_val = detail::any_nonempty(g, SplitKind::val);

  Optimizer opt(cfg);
  ParamSet best = p;
  UnfoldConfig best_ucfg = ucfg;
  StepBound best_bound = bound;
  double best_val = -1.0;
  int best_epoch = 0, since_best = 0;
  if (has_val) best_val = split_metrics(unfold(g, p, ucfg).Y_final, g, p, SplitKind::val).overall;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    TapeOptions topt;
    topt.dropout_scale = detail::dropout_scale(g, p.dims, cfg.dropout, cfg.seed, epoch);
    FullGradient fg;
    try {
      fg = full_gradient(g, p, ucfg, SplitKind::train, std::move(topt));
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch) + ": " + e.what());
    }
    if (!std::isfinite(fg.loss)) throw NumericError("epoch " + std::to_string(epoch) + ": non-finite train loss");
    opt.step(g, p, fg.grads);
    if (refresh) {
      std::vector<std::string> ignored;
      ucfg = resolve_alpha(g, p, cfg, bound, ignored, bopt);
    }

    EmbeddingSet y;
    try {
      y = unfold(g, p, ucfg).Y_final;
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch) + " (evaluation): " + e.what());
    }
    HistoryRow row;
    row.epoch = epoch;
    row.loss = fg.loss;
    row.train_acc = split_metrics(y, g, p, SplitKind::train).overall;
    row.val_acc = has_val ? split_metrics(y, g, p, SplitKind::val).overall : 0.0;
    row.energy = energy_value(g, p, y, EnergyConfig{ucfg.lambda});
    out.history.push_back(row);
    if (on_epoch) on_epoch(row);

    if (has_val && row.val_acc > best_val) {
      best_val = row.val_acc;
      best = p;
      best_ucfg = ucfg;
      best_bound = bound;
      best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (cfg.patience > 0 && has_val && since_best >= cfg.patience) break;
  }

  const int epochs_run = static_cast<int>(out.history.size());
  if (!cfg.select_best_val || !has_val) {
    best = p;
    best_ucfg = ucfg;
    best_bound = bound;
    best_epoch = epochs_run;
  }
  out.params = std::move(best);
  out.unfold = best_ucfg;
  out.final_bound = refresh ? best_bound : step_bound(g, out.params, out.unfold.lambda);
  if (out.unfold.alpha > out.final_bound.bound) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "alpha %.12g exceeds the step bound %.12g at the returned parameters",
                  out.unfold.alpha, out.final_bound.bound);
    out.warnings.emplace_back(buf);
  }
  const EmbeddingSet y = unfold(g, out.params, out.unfold).Y_final;
  out.metrics.train = split_metrics(y, g, out.params, SplitKind::train);
  out.metrics.val = split_metrics(y, g, out.params, SplitKind::val);
  out.metrics.test = split_metrics(y, g, out.params, SplitKind::test);
  out.metrics.final_train_loss = meta_loss(y, g, out.params, SplitKind::train).loss;
  out.metrics.best_epoch = best_epoch;
  out.metrics.epochs_run = epochs_run;
  return out;
}

// ---------------------------------------------------------------------------
// Parameter dump: "HALOPARM", u32 version, u32 count, then per tensor
// u32 name length, name bytes, u64 rows, u64 cols, rows*cols f64.
// Everything little-endian, values row-major.

inline constexpr char kParamMagic[8] = {'H', 'A', 'L', 'O', 'P', 'A', 'R', 'M'};
inline constexpr std::uint32_t kParamVersion = 1;

namespace detail {

inline void put_le(std::string& buf, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint64_t get_le(std::istream& in, int bytes, const std::string& what) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), bytes)) throw DataError("params: truncated file while reading " + what);
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline std::string serialize_params(const HeteroGraph& g, const ParamSet& p) {
  std::string buf(kParamMagic, sizeof kParamMagic);
  detail::put_le(buf, kParamVersion, 4);
  std::uint32_t count = 0;
  ParamTensors::visit(p, g, [&](ParamGroup, const std::string&, const Matrix&) { ++count; });
  detail::put_le(buf, count, 4);
  ParamTensors::visit(p, g, [&](ParamGroup, const std::string& name, const Matrix& m) {
    detail::put_le(buf, name.size(), 4);
    buf += name;
    detail::put_le(buf, m.rows(), 8);
    detail::put_le(buf, m.cols(), 8);
    for (double v : m.values()) detail::put_le(buf, std::bit_cast<std::uint64_t>(v), 8);
  });
  return buf;
}

inline void write_params(const std::filesystem::path& path, const HeteroGraph& g, const ParamSet& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  const std::string buf = serialize_params(g, p);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

/// Reads a dump and checks it against the layout implied by the graph and options.
inline ParamSet read_params(const std::filesystem::path& path, const HeteroGraph& g, const ModelOptions& m) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kParamMagic, 8) != 0)
    throw DataError(path.string() + ": not a parameter dump");
  const auto version = detail::get_le(in, 4, "version");
  if (version != kParamVersion) throw DataError(path.string() + ": unsupported version " + std::to_string(version));
  const auto count = detail::get_le(in, 4, "tensor count");
  ParamSet p = init_params(g, m, 0);
  std::uint64_t expected = 0;
  ParamTensors::visit(p, g, [&](ParamGroup, const std::string&, const Matrix&) { ++expected; });
  if (count != expected)
    throw DataError(path.string() + ": " + std::to_string(count) + " tensors, model expects " +
                    std::to_string(expected));
  ParamTensors::visit(p, g, [&](ParamGroup, const std::string& name, Matrix& t) {
    const auto len = detail::get_le(in, 4, "name length");
    if (len > 4096) throw DataError(path.string() + ": corrupt tensor name");
    std::string got(len, '\0');
    if (!in.read(got.data(), static_cast<std::streamsize>(len))) throw DataError(path.string() + ": truncated name");
    if (got != name) throw DataError(path.string() + ": expected tensor '" + name + "', found '" + got + "'");
    const auto rows = detail::get_le(in, 8, name);
    const auto cols = detail::get_le(in, 8, name);
    if (rows != t.rows() || cols != t.cols())
      throw DataError(path.string() + ": tensor '" + name + "' has shape " + std::to_string(rows) + "x" +
                      std::to_string(cols) + ", model expects " + t.shape_string());
    for (double& v : t.values()) v = std::bit_cast<double>(detail::get_le(in, 8, name));
  });
  if (in.peek() != std::char_traits<char>::eof()) throw DataError(path.string() + ": trailing bytes");
  return p;
}

// ---------------------------------------------------------------------------
// JSON configuration with full-key names.

inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }
inline const char* to_string(BaseKind k) { return k == BaseKind::mlp ? "mlp" : "linear"; }
inline const char* to_string(ReadoutKind k) { return k == ReadoutKind::identity ? "identity" : "affine"; }


/// Keys not present keep their defaults; "dataset_defaults" applies a stored
/// per-dataset row first. Unknown keys are rejected.
inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  TrainConfig c;
  if (j.contains("dataset_defaults")) apply_dataset_hyperparams(c, j.at("dataset_defaults").get<std::string>());
  static const std::vector<std::string> known = {
      "dataset_defaults", "epochs",  "optimizer", "learning_rate", "weight_decay",     "adam_beta1",
      "adam_beta2",       "adam_epsilon", "seed", "alpha_refresh",  "dropout",       "patience",         "select_best_val",
      "hidden",           "mlp_hidden", "base",   "readout",       "fixed_identity_H", "K",
      "lambda",           "alpha",   "prox",      "prox_final"};
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("config: unknown key '" + key + "'");
  try {
    auto get = [&](const char* key, auto& dst) {
      if (j.contains(key)) dst = j.at(key).get<std::remove_reference_t<decltype(dst)>>();
    };
    get("epochs", c.epochs);
    if (j.contains("optimizer")) {
      const auto s = j.at("optimizer").get<std::string>();
      if (s == "adam") c.optimizer = OptimizerKind::adam;
      else if (s == "sgd") c.optimizer = OptimizerKind::sgd;
      else throw ConfigError("config: optimizer must be 'adam' or 'sgd', got '" + s + "'");
    }
    get("learning_rate", c.learning_rate);
    get("weight_decay", c.weight_decay);
    get("adam_beta1", c.adam_beta1);
    get("adam_beta2", c.adam_beta2);
    get("adam_epsilon", c.adam_epsilon);
    get("seed", c.seed);
    get("dropout", c.dropout);
    get("patience", c.patience);
    get("select_best_val", c.select_best_val);
    get("hidden", c.model.hidden);
    get("mlp_hidden", c.model.mlp_hidden);
    if (j.contains("base")) {
      const auto s = j.at("base").get<std::string>();
      if (s == "linear") c.model.base = BaseKind::linear;
      else if (s == "mlp") c.model.base = BaseKind::mlp;
      else throw ConfigError("config: base must be 'linear' or 'mlp', got '" + s + "'");
    }
    if (j.contains("readout")) {
      const auto s = j.at("readout").get<std::string>();
      if (s == "affine") c.model.readout = ReadoutKind::affine;
      else if (s == "identity") c.model.readout = ReadoutKind::identity;
      else throw ConfigError("config: readout must be 'affine' or 'identity', got '" + s + "'");
    }
    get("fixed_identity_H", c.model.fixed_identity_H);
    get("K", c.unfold.K);
    get("lambda", c.unfold.lambda);
    if (j.contains("alpha")) {
      const auto& a = j.at("alpha");
      if (a.is_string()) {
        if (a.get<std::string>() != "auto") throw ConfigError("config: alpha must be a number or \"auto\"");
        c.alpha_auto = true;
      } else {
        c.unfold.alpha = a.get<double>();
        c.alpha_auto = false;
      }
    }
    get("alpha_refresh", c.alpha_refresh);
    get("prox", c.unfold.prox);
    get("prox_final", c.unfold.prox_final);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  validate(c);
  return c;
}

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["epochs"] = c.epochs;
  j["optimizer"] = to_string(c.optimizer);
  j["learning_rate"] = c.learning_rate;
  j["weight_decay"] = c.weight_decay;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_epsilon"] = c.adam_epsilon;
  j["seed"] = c.seed;
  j["dropout"] = c.dropout;
  j["patience"] = c.patience;
  j["select_best_val"] = c.select_best_val;
  j["hidden"] = c.model.hidden;
  j["mlp_hidden"] = c.model.mlp_hidden;
  j["base"] = to_string(c.model.base);
  j["readout"] = to_string(c.model.readout);
  j["fixed_identity_H"] = c.model.fixed_identity_H;
  j["K"] = c.unfold.K;
  j["lambda"] = c.unfold.lambda;
  if (c.alpha_auto) j["alpha"] = "auto";
  else j["alpha"] = c.unfold.alpha;
  j["alpha_refresh"] = c.alpha_refresh;
  j["prox"] = c.unfold.prox;
  j["prox_final"] = c.unfold.prox_final;
  return j;
}

// ---------------------------------------------------------------------------
// Run directory

inline nlohmann::ordered_json to_json(const HeteroGraph& g, const SplitMetrics& m) {
  nlohmann::ordered_json j;
  j["overall"] = m.overall;
  j["nodes"] = m.total;
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  for (std::size_t s = 0; s < g.num_node_types(); ++s)
    if (m.type_accuracy[s]) per[g.node_type(s).name] = *m.type_accuracy[s];
  j["per_type"] = per;
  return j;
}

inline nlohmann::ordered_json to_json(const HeteroGraph& g, const Metrics& m) {
  nlohmann::ordered_json j;
  j["train"] = to_json(g, m.train);
  j["val"] = to_json(g, m.val);
  j["test"] = to_json(g, m.test);
  j["final_train_loss"] = m.final_train_loss;
  j["best_epoch"] = m.best_epoch;
  j["epochs_run"] = m.epochs_run;
  return j;
}

inline nlohmann::ordered_json to_json(const StepBound& b) {
  nlohmann::ordered_json j;
  if (std::isfinite(b.bound)) j["bound"] = b.bound;
  else j["bound"] = "inf";
  j["d_min"] = b.d_min;
  j["sigma_max"] = b.sigma_max;
  j["power_iterations"] = b.iterations;
  j["converged"] = b.converged;
  j["dense_fallback"] = b.dense_fallback;
  return j;
}

/// 17 significant digits: round-trips every double.
inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_history_csv(std::ostream& out, const std::vector<HistoryRow>& history) {
  out << "epoch,loss,train_acc,val_acc,energy\n";
  for (const auto& r : history)
    out << r.epoch << ',' << format_real(r.loss) << ',' << format_real(r.train_acc) << ','
        << format_real(r.val_acc) << ',' << format_real(r.energy) << '\n';
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

inline void write_run(const std::filesystem::path& dir, const HeteroGraph& g, const TrainConfig& cfg,
                      const TrainResult& r) {
  std::filesystem::create_directories(dir);
  write_json_file(dir / "metrics.json", to_json(g, r.metrics));
  {
    std::ofstream out(dir / "history.csv");
    if (!out) throw DataError("cannot open history.csv in " + dir.string());
    write_history_csv(out, r.history);
  }
  write_params(dir / "params.bin", g, r.params);
  nlohmann::ordered_json meta;
  meta["config"] = to_json(cfg);
  meta["seed"] = cfg.seed;
  meta["alpha"] = r.unfold.alpha;
  meta["alpha_auto"] = cfg.alpha_auto;
  meta["ablation"] = {{"fixed_identity_H", cfg.model.fixed_identity_H}, {"prox", cfg.unfold.prox}};
  meta["initialization"] = {
      {"W", "uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))"},
      {"theta", "uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), bias scaled by 1/sqrt(fan_in)"},
      {"H", cfg.model.fixed_identity_H ? "identity (frozen)" : "0.1 * uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))"}};
  auto bound = to_json(r.initial_bound);
  bound["alpha_within_bound"] = r.unfold.alpha <= r.initial_bound.bound;
  meta["step_bound_check"] = bound;
  auto final_bound = to_json(r.final_bound);
  final_bound["alpha_within_bound"] = r.unfold.alpha <= r.final_bound.bound;
  meta["step_bound_at_returned_params"] = final_bound;
  meta["dims"] = r.params.dims;
  meta["warnings"] = r.warnings;
  write_json_file(dir / "run_meta.json", meta);
}

/// Reads the parts of run_meta.json needed to reuse a run's parameters.
struct RunInfo {
  TrainConfig config;
  UnfoldConfig unfold;  ///< with the resolved alpha
  ParamSet params;
};

inline RunInfo load_run(const std::filesystem::path& dir, const HeteroGraph& g) {
  std::ifstream in(dir / "run_meta.json");
  if (!in) throw DataError("cannot open " + (dir / "run_meta.json").string());
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("run_meta.json: " + std::string(e.what()));
  }
  RunInfo info;
  info.config = train_config_from_json(meta.at("config"));
  info.unfold = info.config.unfold;
  info.unfold.alpha = meta.at("alpha").get<double>();
  info.params = read_params(dir / "params.bin", g, info.config.model);
  return info;
}

}  // namespace halo
