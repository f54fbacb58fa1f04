// halo: command-line front end (train, eval, trace, exact, gradcheck, synth, bound).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "halo/halo.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumeric = 2;
constexpr int kExitVerification = 3;

struct Options {
  std::string data;
  std::string config;
  std::string out;
  std::string run;
  std::optional<std::uint64_t> seed;
  bool fixed_identity_H = false;
  bool prox = false;
  bool no_prox = false;
  std::optional<int> epochs;
  std::optional<int> K;
  std::optional<double> lambda;
  std::optional<std::string> alpha;
  std::optional<int> k_max;
  std::string split = "test";
  int probes = 5;
  double threshold = 1e-4;
  double fd_step = 1e-5;
  std::string preset;
  int paper_classes = 4;
  bool corrupt_adjoint = false;
};

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw halo::ConfigError("cannot open config file " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw halo::ConfigError(path + ": " + e.what());
  }
}

halo::TrainConfig train_config(const Options& o) {
  halo::TrainConfig c = o.config.empty() ? halo::TrainConfig{} : halo::train_config_from_json(read_json_file(o.config));
  if (o.seed) c.seed = *o.seed;
  if (o.fixed_identity_H) c.model.fixed_identity_H = true;
  if (o.no_prox) c.unfold.prox = false;
  if (o.prox) c.unfold.prox = true;
  if (o.epochs) c.epochs = *o.epochs;
  if (o.K) c.unfold.K = *o.K;
  if (o.lambda) c.unfold.lambda = *o.lambda;
  if (o.alpha) {
    if (*o.alpha == "auto") {
      c.alpha_auto = true;
    } else {
      try {
        c.unfold.alpha = std::stod(*o.alpha);
      } catch (const std::exception&) {
        throw halo::ConfigError("--alpha must be a number or 'auto', got '" + *o.alpha + "'");
      }
      c.alpha_auto = false;
    }
  }
  halo::validate(c);
  return c;
}

halo::HeteroGraph load_data(const Options& o) {
  if (o.data.empty()) throw halo::ConfigError("--data is required");
  return halo::load_graph(o.data);
}

fs::path out_dir(const Options& o) {
  if (o.out.empty()) throw halo::ConfigError("--out is required");
  fs::create_directories(o.out);
  return o.out;
}

/// Parameters and resolved unfolding config: from --run when given, else at initialization.
struct Model {
  halo::TrainConfig cfg;
  halo::ParamSet params;
  halo::UnfoldConfig unfold;
  halo::StepBound bound;
  std::vector<std::string> warnings;
  std::string source;
};

Model load_model(const Options& o, const halo::HeteroGraph& g) {
  Model m;
  if (!o.run.empty()) {
    auto info = halo::load_run(o.run, g);
    m.cfg = info.config;
    m.params = std::move(info.params);
    m.unfold = info.unfold;
    if (o.K) m.unfold.K = *o.K;
    if (o.no_prox) m.unfold.prox = false;
    if (o.prox) m.unfold.prox = true;
    m.bound = halo::step_bound(g, m.params, m.unfold.lambda);
    m.source = o.run;
    return m;
  }
  m.cfg = train_config(o);
  m.params = halo::init_params(g, m.cfg.model, m.cfg.seed);
  m.unfold = halo::resolve_alpha(g, m.params, m.cfg, m.bound, m.warnings);
  m.source = "initialization";
  return m;
}

void emit(const ordered_json& j) { std::cout << j.dump(2) << std::endl; }

void warn_all(const std::vector<std::string>& w) {
  for (const auto& s : w) std::cerr << "warning: " << s << "\n";
}

// ---------------------------------------------------------------------------

int cmd_train(const Options& o) {
  const auto g = load_data(o);
  const auto cfg = train_config(o);
  const auto dir = out_dir(o);
  const auto result = halo::train(g, cfg);
  warn_all(result.warnings);
  halo::write_run(dir, g, cfg, result);
  ordered_json j;
  j["run"] = dir.string();
  j["alpha"] = result.unfold.alpha;
  j["metrics"] = halo::to_json(g, result.metrics);
  emit(j);
  return kExitOk;
}

int cmd_eval(const Options& o) {
  const auto g = load_data(o);
  const Model m = load_model(o, g);
  const auto split = halo::parse_split(o.split);
  const auto metrics = halo::evaluate(g, m.params, m.unfold, split);
  ordered_json j;
  j["split"] = o.split;
  j["params"] = m.source;
  j["accuracy"] = halo::to_json(g, metrics);
  if (!o.out.empty()) halo::write_json_file(out_dir(o) / "eval.json", j);
  emit(j);
  return kExitOk;
}

/// One row per K = 0..K_max: the output of a K-step forward pass.
int cmd_trace(const Options& o) {
  const auto g = load_data(o);
  Model m = load_model(o, g);
  warn_all(m.warnings);
  const int k_max = o.k_max ? *o.k_max : m.unfold.K;
  if (k_max < 0) throw halo::ConfigError("--k-max must be >= 0");
  const auto dir = out_dir(o);
  const halo::StepContext ctx(g, m.params, m.unfold.lambda);
  const double lambda = m.unfold.lambda;
  const bool has_val = [&] {
    for (std::size_t s = 0; s < g.num_node_types(); ++s)
      if (g.node_type(s).labeled && !g.split(s).val.empty()) return true;
    return false;
  }();

  std::ofstream csv(dir / "trace.csv");
  if (!csv) throw halo::DataError("cannot write trace.csv");
  csv << "K,energy,train_acc,val_acc\n";
  auto row = [&](int k, const halo::EmbeddingSet& y) {
    const double e = halo::energy_value(g, ctx.H, ctx.F, y, lambda);
    const double tr = halo::split_metrics(y, g, m.params, halo::SplitKind::train).overall;
    const double va = has_val ? halo::split_metrics(y, g, m.params, halo::SplitKind::val).overall : 0.0;
    csv << k << ',' << halo::format_real(e) << ',' << halo::format_real(tr) << ',' << halo::format_real(va) << '\n';
  };
  halo::EmbeddingSet y = ctx.F;
  row(0, y);
  for (int k = 1; k <= k_max; ++k) {
    halo::EmbeddingSet z = halo::unfold_step(ctx, y, m.unfold.alpha, lambda);
    if (m.unfold.prox) {
      halo::EmbeddingSet projected = halo::prox_relu(z);
      row(k, m.unfold.prox_final ? projected : z);
      y = std::move(projected);
    } else {
      row(k, z);
      y = std::move(z);
    }
  }
  ordered_json j;
  j["trace"] = (dir / "trace.csv").string();
  j["params"] = m.source;
  j["k_max"] = k_max;
  j["alpha"] = m.unfold.alpha;
  j["lambda"] = lambda;
  j["prox"] = m.unfold.prox;
  j["step_bound"] = halo::to_json(m.bound);
  emit(j);
  return kExitOk;
}

int cmd_exact(const Options& o) {
  const auto g = load_data(o);
  Model m = load_model(o, g);
  warn_all(m.warnings);
  const auto dir = out_dir(o);
  const halo::EnergyConfig ecfg{m.unfold.lambda};
  const auto exact = halo::exact_solution(g, m.params, ecfg);
  const auto unfolded = halo::unfold(g, m.params, m.unfold).Y_final;
  for (std::size_t s = 0; s < g.num_node_types(); ++s) {
    std::ofstream out(dir / ("exact." + g.node_type(s).name + ".tsv"));
    const auto& b = exact[s];
    for (std::size_t i = 0; i < b.rows(); ++i) {
      for (std::size_t k = 0; k < b.cols(); ++k) out << (k ? "\t" : "") << halo::format_real(b(i, k));
      out << '\n';
    }
  }
  ordered_json j;
  j["params"] = m.source;
  j["lambda"] = m.unfold.lambda;
  j["alpha"] = m.unfold.alpha;
  j["K"] = m.unfold.K;
  j["prox"] = m.unfold.prox;
  j["energy_exact"] = halo::energy_value(g, m.params, exact, ecfg);
  j["energy_unfold"] = halo::energy_value(g, m.params, unfolded, ecfg);
  j["relative_gap"] = halo::relative_gap(unfolded, exact);
  j["step_bound"] = halo::to_json(m.bound);
  halo::write_json_file(dir / "exact.json", j);
  emit(j);
  return kExitOk;
}

/// Small built-in instance used when --data is not given.
halo::HeteroGraph micro_instance(std::uint64_t seed) {
  halo::SynthConfig c;
  c.seed = seed;
  c.node_types = {{"a", 12, 4, 3, 1.0, true}, {"b", 10, 3, 2, 1.0, true}};
  c.edge_types = {{"ab", "a", "b", 2.0, halo::Matrix{{0.7, 0.3}, {0.2, 0.8}, {0.5, 0.5}}},
                  {"aa", "a", "a", 1.5, halo::planted_table(3, 3, 0.6, [](int k) { return (k + 1) % 3; })}};
  return halo::generate(c);
}

int cmd_gradcheck(const Options& o) {
  auto cfg = train_config(o);
  if (!o.K && o.config.empty()) cfg.unfold.K = 4;
  if (o.config.empty()) cfg.model.hidden = 4;
  const auto g = o.data.empty() ? micro_instance(cfg.seed) : halo::load_graph(o.data);
  auto p = halo::init_params(g, cfg.model, cfg.seed);
  halo::StepBound bound;
  std::vector<std::string> warnings;
  const auto ucfg = halo::resolve_alpha(g, p, cfg, bound, warnings);
  warn_all(warnings);
  halo::GradCheckOptions gopt;
  gopt.step = o.fd_step;
  gopt.seed = cfg.seed + 1;
  if (o.corrupt_adjoint)
    gopt.tamper = [&g](halo::GradSet& grads) {
      halo::ParamTensors::visit(grads, g, [](halo::ParamGroup, const std::string&, halo::Matrix& m) {
        for (double& v : m.values()) v = 1.5 * v + 1e-3;
      });
    };
  const auto report = halo::grad_check(g, p, ucfg, o.probes, gopt);
  auto j = report.to_json();
  j["threshold"] = o.threshold;
  j["K"] = ucfg.K;
  j["prox"] = ucfg.prox;
  const bool pass = report.worst() <= o.threshold;
  j["pass"] = pass;
  if (!o.out.empty()) halo::write_json_file(out_dir(o) / "gradcheck.json", j);
  emit(j);
  if (!pass) {
    std::cerr << "gradcheck: worst relative error " << halo::format_real(report.worst()) << " exceeds "
              << halo::format_real(o.threshold) << "\n";
    return kExitVerification;
  }
  return kExitOk;
}

int cmd_synth(const Options& o) {
  halo::SynthConfig cfg;
  if (!o.config.empty()) {
    cfg = halo::synth_config_from_json(read_json_file(o.config));
    if (o.seed) cfg.seed = *o.seed;
  } else {
    if (o.preset.empty()) throw halo::ConfigError("synth needs --preset or --config");
    cfg = halo::synth_preset(o.preset, o.seed.value_or(0), o.paper_classes);
  }
  const auto dir = out_dir(o);
  const auto g = halo::generate_to(cfg, dir);
  ordered_json j;
  j["dataset"] = dir.string();
  j["seed"] = cfg.seed;
  j["node_types"] = ordered_json::object();
  for (const auto& nt : g.node_types()) j["node_types"][nt.name] = {{"count", nt.count}, {"classes", nt.num_classes}};
  j["edges"] = g.total_edges();
  emit(j);
  return kExitOk;
}

int cmd_bound(const Options& o) {
  const auto g = load_data(o);
  Model m = load_model(o, g);
  auto j = halo::to_json(m.bound);
  j["lambda"] = m.unfold.lambda;
  j["alpha"] = m.unfold.alpha;
  j["alpha_within_bound"] = m.unfold.alpha <= m.bound.bound;
  j["params"] = m.source;
  if (!o.out.empty()) halo::write_json_file(out_dir(o) / "bound.json", j);
  emit(j);
  return kExitOk;
}

void add_model_flags(CLI::App* c, Options& o) {
  c->add_option("--config", o.config, "JSON training configuration");
  c->add_option("--seed", o.seed, "Random seed (overrides the config)");
  c->add_flag("--fixed-identity-H", o.fixed_identity_H, "Ablation: H_t = I, not trained");
  auto* prox = c->add_flag("--prox", o.prox, "Enable the ReLU proximal step");
  auto* no_prox = c->add_flag("--no-prox", o.no_prox, "Ablation: plain preconditioned descent");
  prox->excludes(no_prox);
  c->add_option("--K", o.K, "Number of unfolded steps");
  c->add_option("--lambda", o.lambda, "Coupling weight");
  c->add_option("--alpha", o.alpha, "Step size or 'auto'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heterogeneous unfolded graph network"};
  app.require_subcommand(1);
  Options o;

  auto* train = app.add_subcommand("train", "Train a model and write a run directory");
  train->add_option("--data", o.data, "Dataset directory")->required();
  train->add_option("--out", o.out, "Run directory")->required();
  train->add_option("--epochs", o.epochs, "Number of epochs");
  add_model_flags(train, o);

  auto* eval = app.add_subcommand("eval", "Accuracy of a run (or of initial parameters) on a split");
  eval->add_option("--data", o.data, "Dataset directory")->required();
  eval->add_option("--run", o.run, "Run directory");
  eval->add_option("--split", o.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--out", o.out, "Output directory");
  add_model_flags(eval, o);

  auto* trace = app.add_subcommand("trace", "Energy and accuracy for K = 0..K_max");
  trace->add_option("--data", o.data, "Dataset directory")->required();
  trace->add_option("--run", o.run, "Run directory (default: initial parameters)");
  trace->add_option("--k-max", o.k_max, "Largest K (default: configured K)");
  trace->add_option("--out", o.out, "Output directory")->required();
  add_model_flags(trace, o);

  auto* exact = app.add_subcommand("exact", "Closed-form minimizer and its gap to the unfolded output");
  exact->add_option("--data", o.data, "Dataset directory")->required();
  exact->add_option("--run", o.run, "Run directory (default: initial parameters)");
  exact->add_option("--out", o.out, "Output directory")->required();
  add_model_flags(exact, o);

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of the meta-loss gradient");
  grad->add_option("--data", o.data, "Dataset directory (default: built-in micro instance)");
  grad->add_option("--out", o.out, "Output directory");
  grad->add_option("--probes", o.probes, "Random directions per parameter group")->check(CLI::PositiveNumber);
  grad->add_option("--threshold", o.threshold, "Largest accepted relative error");
  grad->add_option("--fd-step", o.fd_step, "Central-difference step");
  grad->add_flag("--debug-corrupt-adjoint", o.corrupt_adjoint)->group("");
  add_model_flags(grad, o);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--preset", o.preset, "homophily, heterophily or bipartite-authorship");
  synth->add_option("--config", o.config, "JSON generator configuration");
  synth->add_option("--seed", o.seed, "Random seed");
  synth->add_option("--paper-classes", o.paper_classes, "Paper classes for bipartite-authorship");
  synth->add_option("--out", o.out, "Dataset directory")->required();

  auto* bound = app.add_subcommand("bound", "Step-size bound for the configured model");
  bound->add_option("--data", o.data, "Dataset directory")->required();
  bound->add_option("--run", o.run, "Run directory (default: initial parameters)");
  bound->add_option("--out", o.out, "Output directory");
  add_model_flags(bound, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*train) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*trace) return cmd_trace(o);
    if (*exact) return cmd_exact(o);
    if (*grad) return cmd_gradcheck(o);
    if (*synth) return cmd_synth(o);
    if (*bound) return cmd_bound(o);
  } catch (const halo::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const halo::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
