#pragma once
// Synthetic heterogeneous graphs with planted class-compatibility tables.
//
// Classes are drawn uniformly per node. An edge of type t picks a uniform
// source node, draws the neighbour class from row class(src) of the table,
// then a uniform destination node of that class. Features are
// signal * one_hot(class) + N(0, 1) noise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "halo/errors.hpp"
#include "halo/hetgraph.hpp"
#include "halo/linalg.hpp"
#include "halo/rng.hpp"

namespace halo {

struct SynthNodeSpec {
  std::string name;
  std::size_t count = 0;
  std::size_t feat_dim = 0;
  int num_classes = 2;
  double signal = 1.0;  ///< feature signal-to-noise; 0 = features carry no class information
  bool labeled = true;
};

struct SynthEdgeSpec {
  std::string name;
  std::string src;
  std::string dst;
  double mean_degree = 1.0;  ///< edges per source node
  Matrix table;              ///< c_src x c_dst, row-stochastic
};

struct SynthConfig {
  std::vector<SynthNodeSpec> node_types;
  std::vector<SynthEdgeSpec> edge_types;
  std::uint64_t seed = 0;
  std::string preset;  ///< informational; empty for custom configs
  double train_fraction = 0.6;
  double val_fraction = 0.2;
};

/// Table mixing a class map with uniform noise: purity on the mapped entry.
inline Matrix planted_table(int rows, int cols, double purity, const std::function<int(int)>& target) {
  Matrix t(rows, cols, (1.0 - purity) / cols);
  for (int r = 0; r < rows; ++r) t(r, target(r)) += purity;
  return t;
}

inline SynthConfig synth_preset(const std::string& name, std::uint64_t seed, int paper_classes = 4) {
  SynthConfig c;
  c.seed = seed;
  c.preset = name;
  auto ident = [](int k) { return k; };
  if (name == "homophily") {
    c.node_types = {{"a", 240, 8, 3, 4.0, true}, {"b", 240, 8, 3, 4.0, true}};
    c.edge_types = {{"ab", "a", "b", 4.0, planted_table(3, 3, 1.0, ident)},
                    {"aa", "a", "a", 3.0, planted_table(3, 3, 1.0, ident)}};
  } else if (name == "heterophily") {
    auto shift = [](int k) { return (k + 1) % 3; };
    c.node_types = {{"a", 300, 6, 3, 0.0, true}, {"b", 300, 6, 3, 2.0, true}};
    c.edge_types = {{"ab", "a", "b", 2.0, planted_table(3, 3, 0.9, shift)},
                    {"aa", "a", "a", 4.0, planted_table(3, 3, 0.9, shift)},
                    {"bb", "b", "b", 3.0, planted_table(3, 3, 0.9, ident)}};
  } else if (name == "bipartite-authorship") {
    if (paper_classes < 4 || paper_classes % 4 != 0)
      throw ConfigError("bipartite-authorship: paper classes must be a positive multiple of 4");
    const int per = paper_classes / 4;  // venues per research category
    Matrix table(4, paper_classes);
    for (int a = 0; a < 4; ++a)
      for (int v = a * per; v < (a + 1) * per; ++v) table(a, v) = 1.0 / per;
    const std::size_t paper_dim = std::max<std::size_t>(8, static_cast<std::size_t>(paper_classes));
    c.node_types = {{"author", 400, 8, 4, 1.0, true}, {"paper", 800, paper_dim, paper_classes, 1.5, true}};
    c.edge_types = {{"writes", "author", "paper", 4.0, std::move(table)}};
  } else {
    throw ConfigError("unknown synth preset '" + name + "' (homophily, heterophily, bipartite-authorship)");
  }
  return c;
}

inline void validate(const SynthConfig& c) {
  if (c.node_types.empty()) throw ConfigError("synth: no node types");
  if (!(c.train_fraction > 0.0) || !(c.val_fraction >= 0.0) || c.train_fraction + c.val_fraction > 1.0)
    throw ConfigError("synth: split fractions must satisfy 0 < train, 0 <= val, train + val <= 1");
  auto find = [&](const std::string& n) -> const SynthNodeSpec& {
    for (const auto& s : c.node_types)
      if (s.name == n) return s;
    throw ConfigError("synth: unknown node type '" + n + "'");
  };
  for (const auto& s : c.node_types) {
    if (s.num_classes < 2) throw ConfigError("synth: node type '" + s.name + "' needs at least 2 classes");
    if (!(s.signal >= 0.0) || !std::isfinite(s.signal)) throw ConfigError("synth: signal must be >= 0");
    if (s.signal > 0.0 && s.feat_dim < static_cast<std::size_t>(s.num_classes))
      throw ConfigError("synth: node type '" + s.name + "' needs feat_dim >= num_classes to carry a class signal");
  }
  for (const auto& e : c.edge_types) {
    const auto& src = find(e.src);
    const auto& dst = find(e.dst);
    if (!(e.mean_degree > 0.0) || !std::isfinite(e.mean_degree))
      throw ConfigError("synth: edge type '" + e.name + "' needs mean_degree > 0");
    if (e.table.rows() != static_cast<std::size_t>(src.num_classes) ||
        e.table.cols() != static_cast<std::size_t>(dst.num_classes))
      throw ConfigError("synth: table of '" + e.name + "' must be " + std::to_string(src.num_classes) + "x" +
                        std::to_string(dst.num_classes) + ", got " + e.table.shape_string());
    for (std::size_t r = 0; r < e.table.rows(); ++r) {
      double sum = 0.0;
      for (double v : e.table.row(r)) {
        if (!(v >= 0.0)) throw ConfigError("synth: table of '" + e.name + "' has a negative entry");
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-9)
        throw ConfigError("synth: row " + std::to_string(r) + " of the table of '" + e.name + "' does not sum to 1");
    }
  }
}

namespace detail {

/// Draws from a discrete distribution given by a row of probabilities.
inline std::size_t sample_row(CounterRng& rng, std::span<const double> p) {
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (p[j] <= 0.0) continue;
    acc += p[j];
    last = j;
    if (u < acc) return j;
  }
  return last;
}

}  // namespace detail

/// Samples a dataset. Unlabeled types still get latent classes that drive edge sampling.
inline HeteroGraph generate(const SynthConfig& cfg) {
  validate(cfg);
  GraphData d;
  std::vector<std::vector<int>> classes;
  std::vector<std::vector<std::vector<std::size_t>>> members;  // [type][class] -> nodes
  for (std::size_t s = 0; s < cfg.node_types.size(); ++s) {
    const auto& spec = cfg.node_types[s];
    CounterRng rng(cfg.seed, 0x100 + s);
    std::vector<int> cls(spec.count);
    std::vector<std::vector<std::size_t>> mem(spec.num_classes);
    for (std::size_t i = 0; i < spec.count; ++i) {
      cls[i] = static_cast<int>(rng.uniform_index(spec.num_classes));
      mem[cls[i]].push_back(i);
    }
    CounterRng noise(cfg.seed, 0x200 + s);
    Matrix x(spec.count, spec.feat_dim);
    for (std::size_t i = 0; i < spec.count; ++i) {
      for (double& v : x.row(i)) v = noise.normal();
      if (spec.signal > 0.0) x(i, cls[i]) += spec.signal;
    }
    NodeTypeSchema nt{spec.name, spec.count, spec.feat_dim, spec.labeled, spec.labeled ? spec.num_classes : 0};
    d.node_types.push_back(nt);
    d.features.push_back(spec.feat_dim ? std::move(x) : Matrix());
    Split sp;
    if (spec.labeled) {
      std::vector<std::size_t> perm(spec.count);
      for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
      CounterRng shuffle(cfg.seed, 0x300 + s);
      for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[shuffle.uniform_index(i)]);
      const auto n_train = static_cast<std::size_t>(std::llround(cfg.train_fraction * spec.count));
      const auto n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * spec.count));
      sp.train.assign(perm.begin(), perm.begin() + n_train);
      sp.val.assign(perm.begin() + n_train, perm.begin() + std::min(spec.count, n_train + n_val));
      sp.test.assign(perm.begin() + std::min(spec.count, n_train + n_val), perm.end());
      for (auto* v : {&sp.train, &sp.val, &sp.test}) std::sort(v->begin(), v->end());
      d.labels.push_back(cls);
    } else {
      d.labels.emplace_back();
    }
    d.splits.push_back(std::move(sp));
    classes.push_back(std::move(cls));
    members.push_back(std::move(mem));
  }
  auto index_of = [&](const std::string& n) {
    for (std::size_t s = 0; s < cfg.node_types.size(); ++s)
      if (cfg.node_types[s].name == n) return s;
    return std::size_t{0};
  };
  for (std::size_t t = 0; t < cfg.edge_types.size(); ++t) {
    const auto& spec = cfg.edge_types[t];
    const std::size_t s = index_of(spec.src), r = index_of(spec.dst);
    d.edge_types.push_back({spec.name, spec.src, spec.dst, ""});
    std::vector<Edge> edges;
    const std::size_t n_src = cfg.node_types[s].count;
    if (n_src > 0) {
      const auto m = static_cast<std::size_t>(std::llround(spec.mean_degree * static_cast<double>(n_src)));
      CounterRng rng(cfg.seed, 0x1000 + t);
      edges.reserve(m);
      for (std::size_t e = 0; e < m; ++e) {
        const std::size_t i = rng.uniform_index(n_src);
        const std::size_t k = detail::sample_row(rng, spec.table.row(classes[s][i]));
        const auto& pool = members[r][k];
        if (pool.empty())
          throw ConfigError("synth: edge type '" + spec.name + "' needs a node of class " + std::to_string(k) +
                            " in '" + spec.dst + "', but none was sampled");
        edges.push_back({i, pool[rng.uniform_index(pool.size())]});
      }
    }
    d.edges.emplace_back(std::move(edges));
  }
  return HeteroGraph(std::move(d));
}

inline HeteroGraph generate_to(const SynthConfig& cfg, const std::filesystem::path& dir) {
  HeteroGraph g = generate(cfg);
  save_graph(g, dir);
  return g;
}

/// Either {"preset": name, "seed": n, "paper_classes": k} or a full
/// specification with "node_types" and "edge_types".
inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
  try {
    const std::uint64_t seed = j.value("seed", std::uint64_t{0});
    if (j.contains("preset")) return synth_preset(j.at("preset").get<std::string>(), seed, j.value("paper_classes", 4));
    SynthConfig c;
    c.seed = seed;
    c.train_fraction = j.value("train_fraction", 0.6);
    c.val_fraction = j.value("val_fraction", 0.2);
    for (const auto& n : j.at("node_types")) {
      SynthNodeSpec s;
      s.name = n.at("name").get<std::string>();
      s.count = n.at("count").get<std::size_t>();
      s.feat_dim = n.at("feat_dim").get<std::size_t>();
      s.num_classes = n.at("num_classes").get<int>();
      s.signal = n.value("signal", 1.0);
      s.labeled = n.value("labeled", true);
      c.node_types.push_back(std::move(s));
    }
    for (const auto& e : j.at("edge_types")) {
      SynthEdgeSpec s;
      s.name = e.at("name").get<std::string>();
      s.src = e.at("src").get<std::string>();
      s.dst = e.at("dst").get<std::string>();
      s.mean_degree = e.at("mean_degree").get<double>();
      const auto rows = e.at("table").get<std::vector<std::vector<double>>>();
      s.table = Matrix(rows.size(), rows.empty() ? 0 : rows[0].size());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != s.table.cols()) throw ConfigError("synth: ragged table for '" + s.name + "'");
        for (std::size_t k = 0; k < rows[r].size(); ++k) s.table(r, k) = rows[r][k];
      }
      c.edge_types.push_back(std::move(s));
    }
    validate(c);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
}

}  // namespace halo
