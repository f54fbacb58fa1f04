#pragma once
// Heterogeneous graph model, dataset directory I/O, and the derived
// adjacency / degree operators.
//
// Dataset layout (UTF-8 text):
//   schema.json             node types and edge types
//   features.<type>.tsv     n_s rows of d_0s tab-separated decimals
//   edges.<type>.tsv        src<TAB>dst per line
//   labels.<type>.tsv       one integer per line, -1 = unlabeled
//   splits.<type>.json      {"train": [...], "val": [...], "test": [...]}

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "halo/errors.hpp"
#include "halo/linalg.hpp"

namespace halo {

inline constexpr int kUnlabeled = -1;

struct NodeTypeSchema {
  std::string name;
  std::size_t count = 0;
  std::size_t feat_dim = 0;  ///< 0 = feature-less; a constant width-1 feature is used
  bool labeled = false;
  int num_classes = 0;

  friend bool operator==(const NodeTypeSchema&, const NodeTypeSchema&) = default;
};

struct EdgeTypeSchema {
  std::string name;
  std::string src_type;
  std::string dst_type;
  std::string inverse_of;  ///< empty = synthesize "rev_<name>"

  friend bool operator==(const EdgeTypeSchema&, const EdgeTypeSchema&) = default;
};

struct Edge {
  std::size_t src = 0;
  std::size_t dst = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

enum class SplitKind { train, val, test };

inline const char* to_string(SplitKind k) {
  switch (k) {
    case SplitKind::train: return "train";
    case SplitKind::val: return "val";
    case SplitKind::test: return "test";
  }
  return "?";
}

inline SplitKind parse_split(const std::string& s) {
  if (s == "train") return SplitKind::train;
  if (s == "val") return SplitKind::val;
  if (s == "test") return SplitKind::test;
  throw ConfigError("unknown split '" + s + "' (expected train, val or test)");
}

struct Split {
  std::vector<std::size_t> train, val, test;

  const std::vector<std::size_t>& get(SplitKind k) const {
    return k == SplitKind::train ? train : k == SplitKind::val ? val : test;
  }
  friend bool operator==(const Split&, const Split&) = default;
};

/// Diagonal matrix stored by its entries.
struct DiagMatrix {
  std::vector<double> entries;

  std::size_t size() const { return entries.size(); }
  double operator[](std::size_t i) const { return entries[i]; }
  double min() const { return entries.empty() ? 0.0 : *std::min_element(entries.begin(), entries.end()); }
  double max() const { return entries.empty() ? 0.0 : *std::max_element(entries.begin(), entries.end()); }
};

/// Raw, unvalidated graph contents. HeteroGraph validates and completes it.
struct GraphData {
  std::vector<NodeTypeSchema> node_types;
  std::vector<EdgeTypeSchema> edge_types;
  /// Parallel to edge_types; nullopt = not supplied, synthesize from the inverse.
  std::vector<std::optional<std::vector<Edge>>> edges;
  /// Parallel to node_types; empty Matrix allowed for feature-less types.
  std::vector<Matrix> features;
  /// Parallel to node_types; empty for unlabeled types.
  std::vector<std::vector<int>> labels;
  std::vector<Split> splits;
};

struct EdgeTypeInfo {
  std::string name;
  std::size_t src = 0;  ///< node type index
  std::size_t dst = 0;
  std::size_t inverse = 0;  ///< edge type index of t_inv
  bool canonical = true;    ///< first of its pair in schema order
};

/// Immutable heterogeneous graph with precomputed adjacency and degrees.
class HeteroGraph {
public:
  explicit HeteroGraph(GraphData data) { build(std::move(data)); }

  std::size_t num_node_types() const { return node_types_.size(); }
  std::size_t num_edge_types() const { return edge_info_.size(); }
  const NodeTypeSchema& node_type(std::size_t s) const { return node_types_.at(s); }
  const std::vector<NodeTypeSchema>& node_types() const { return node_types_; }
  const EdgeTypeInfo& edge_type(std::size_t t) const { return edge_info_.at(t); }
  const std::vector<EdgeTypeSchema>& edge_schemas() const { return edge_schemas_; }

  std::size_t node_count(std::size_t s) const { return node_types_.at(s).count; }
  std::size_t total_nodes() const {
    std::size_t n = 0;
    for (const auto& nt : node_types_) n += nt.count;
    return n;
  }
  std::size_t total_edges() const {
    std::size_t m = 0;
    for (const auto& e : edges_) m += e.size();
    return m;
  }

  std::size_t node_type_index(const std::string& name) const {
    for (std::size_t s = 0; s < node_types_.size(); ++s)
      if (node_types_[s].name == name) return s;
    throw ConfigError("unknown node type '" + name + "'");
  }
  std::size_t edge_type_index(const std::string& name) const {
    for (std::size_t t = 0; t < edge_info_.size(); ++t)
      if (edge_info_[t].name == name) return t;
    throw ConfigError("unknown edge type '" + name + "'");
  }

  /// Edge types whose source is node type s (the set union over s' of T_ss').
  const std::vector<std::size_t>& outgoing(std::size_t s) const { return outgoing_.at(s); }

  const std::vector<Edge>& edges(std::size_t t) const { return edges_.at(t); }
  const Matrix& features(std::size_t s) const { return features_.at(s); }
  const std::vector<int>& labels(std::size_t s) const { return labels_.at(s); }
  const Split& split(std::size_t s) const { return splits_.at(s); }

  /// A_t, shape n_src x n_dst, entry = edge multiplicity. A_{t_inv} = A_t^T.
  const SparseMatrix& adjacency(std::size_t t) const {
    if (t >= adjacency_.size()) throw ConfigError("unknown edge type index " + std::to_string(t));
    return adjacency_[t];
  }

  /// D_st: row sums of A_t. Requires src(t) == s.
  const DiagMatrix& degree(std::size_t s, std::size_t t) const {
    if (t >= edge_info_.size()) throw ConfigError("unknown edge type index " + std::to_string(t));
    if (edge_info_[t].src != s)
      throw ShapeError("degree: edge type '" + edge_info_[t].name + "' does not start at node type '" +
                       node_types_.at(s).name + "'");
    return degree_[t];
  }

  /// D_s = sum over outgoing t of D_st.
  const DiagMatrix& total_degree(std::size_t s) const { return total_degree_.at(s); }

  friend bool operator==(const HeteroGraph& a, const HeteroGraph& b) {
    return a.node_types_ == b.node_types_ && a.edge_schemas_ == b.edge_schemas_ && a.edges_ == b.edges_ &&
           a.features_ == b.features_ && a.labels_ == b.labels_ && a.splits_ == b.splits_;
  }

private:
  void build(GraphData data);

  std::vector<NodeTypeSchema> node_types_;
  std::vector<EdgeTypeSchema> edge_schemas_;  // complete, inverse_of always set
  std::vector<EdgeTypeInfo> edge_info_;
  std::vector<std::vector<Edge>> edges_;
  std::vector<Matrix> features_;
  std::vector<std::vector<int>> labels_;
  std::vector<Split> splits_;
  std::vector<std::vector<std::size_t>> outgoing_;
  std::vector<SparseMatrix> adjacency_;
  std::vector<DiagMatrix> degree_;
  std::vector<DiagMatrix> total_degree_;
};

namespace detail {

inline std::vector<Edge> transposed_edges(const std::vector<Edge>& e) {
  std::vector<Edge> out;
  out.reserve(e.size());
  for (const auto& x : e) out.push_back({x.dst, x.src});
  return out;
}

inline std::vector<std::pair<std::size_t, std::size_t>> sorted_pairs(const std::vector<Edge>& e) {
  std::vector<std::pair<std::size_t, std::size_t>> p;
  p.reserve(e.size());
  for (const auto& x : e) p.emplace_back(x.src, x.dst);
  std::sort(p.begin(), p.end());
  return p;
}

}  // namespace detail

inline void HeteroGraph::build(GraphData data) {
  const std::size_t S = data.node_types.size();
  std::set<std::string> names;
  for (const auto& nt : data.node_types) {
    if (nt.name.empty()) throw DataError("schema: node type with empty name");
    if (!names.insert(nt.name).second) throw DataError("schema: duplicate node type '" + nt.name + "'");
    if (nt.labeled && nt.num_classes < 2)
      throw DataError("schema: labeled node type '" + nt.name + "' needs num_classes >= 2");
  }
  node_types_ = data.node_types;

  // Features: a feature-less type gets a constant width-1 column.
  data.features.resize(S);
  features_.resize(S);
  for (std::size_t s = 0; s < S; ++s) {
    const auto& nt = node_types_[s];
    Matrix& x = data.features[s];
    if (nt.feat_dim == 0) {
      if (!x.empty() && !(x.rows() == nt.count && x.cols() == 1))
        throw DataError("features for feature-less type '" + nt.name + "' must be absent");
      features_[s] = Matrix(nt.count, 1, 1.0);
      continue;
    }
    if (x.rows() != nt.count || x.cols() != nt.feat_dim)
      throw DataError("features." + nt.name + ": expected " + std::to_string(nt.count) + "x" +
                      std::to_string(nt.feat_dim) + ", got " + x.shape_string());
    require_finite(x, "features." + nt.name);
    features_[s] = std::move(x);
  }

  // Edge types and inverse pairing.
  auto node_index = [&](const std::string& n, const std::string& ctx) {
    for (std::size_t s = 0; s < S; ++s)
      if (node_types_[s].name == n) return s;
    throw DataError("schema: edge type '" + ctx + "' references unknown node type '" + n + "'");
  };
  auto& ets = data.edge_types;
  data.edges.resize(ets.size());
  std::map<std::string, std::size_t> edge_index;
  for (std::size_t t = 0; t < ets.size(); ++t) {
    if (ets[t].name.empty()) throw DataError("schema: edge type with empty name");
    if (edge_index.count(ets[t].name)) throw DataError("schema: duplicate edge type '" + ets[t].name + "'");
    edge_index[ets[t].name] = t;
    node_index(ets[t].src_type, ets[t].name);
    node_index(ets[t].dst_type, ets[t].name);
  }
  // Resolve pairings; synthesize partners that are absent from the schema.
  const std::size_t listed = ets.size();
  for (std::size_t t = 0; t < listed; ++t) {
    auto& e = ets[t];
    if (e.inverse_of.empty()) {
      // Another listed type may already claim this one as its inverse.
      for (std::size_t u = 0; u < listed; ++u)
        if (u != t && ets[u].inverse_of == e.name) e.inverse_of = ets[u].name;
    }
    if (e.inverse_of.empty()) e.inverse_of = "rev_" + e.name;
    auto it = edge_index.find(e.inverse_of);
    if (it == edge_index.end()) {
      EdgeTypeSchema inv{e.inverse_of, e.dst_type, e.src_type, e.name};
      edge_index[inv.name] = ets.size();
      ets.push_back(inv);
      data.edges.emplace_back(std::nullopt);
    }
  }
  for (std::size_t t = 0; t < ets.size(); ++t) {
    const auto& e = ets[t];
    const std::size_t u = edge_index.at(e.inverse_of);
    const auto& partner = ets[u];
    if (partner.inverse_of != e.name)
      throw DataError("schema: inverse pairing is not an involution: '" + e.name + "' -> '" + partner.name +
                      "' -> '" + partner.inverse_of + "'");
    if (partner.src_type != e.dst_type || partner.dst_type != e.src_type)
      throw DataError("schema: edge type '" + partner.name + "' cannot be the inverse of '" + e.name +
                      "' (endpoint types do not mirror)");
    if (u == t && e.src_type != e.dst_type)
      throw DataError("schema: self-paired edge type '" + e.name + "' must connect a type to itself");
  }
  edge_schemas_ = ets;

  const std::size_t T = ets.size();
  edge_info_.resize(T);
  edges_.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t u = edge_index.at(ets[t].inverse_of);
    edge_info_[t] = {ets[t].name, node_index(ets[t].src_type, ets[t].name), node_index(ets[t].dst_type, ets[t].name),
                     u, t <= u};
  }
  for (std::size_t t = 0; t < T; ++t)
    if (data.edges[t]) edges_[t] = std::move(*data.edges[t]);
  for (std::size_t t = 0; t < T; ++t) {
    if (data.edges[t]) continue;
    const std::size_t u = edge_info_[t].inverse;
    if (!data.edges[u])
      throw DataError("edges." + ets[t].name + ".tsv: missing, and its inverse '" + ets[u].name +
                      "' is missing too");
    edges_[t] = detail::transposed_edges(edges_[u]);
  }
  for (std::size_t t = 0; t < T; ++t) {
    const auto& info = edge_info_[t];
    const std::size_t ns = node_types_[info.src].count, nd = node_types_[info.dst].count;
    for (std::size_t k = 0; k < edges_[t].size(); ++k) {
      const auto& e = edges_[t][k];
      if (e.src >= ns || e.dst >= nd)
        throw DataError("edges." + info.name + ".tsv:" + std::to_string(k + 1) + ": edge (" + std::to_string(e.src) +
                        ", " + std::to_string(e.dst) + ") out of range for " + std::to_string(ns) + " x " +
                        std::to_string(nd) + " nodes");
    }
  }
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t u = edge_info_[t].inverse;
    if (u < t) continue;
    if (detail::sorted_pairs(edges_[u]) != detail::sorted_pairs(detail::transposed_edges(edges_[t])))
      throw DataError("edges." + edge_info_[u].name + ".tsv: not the transpose of edges." + edge_info_[t].name +
                      ".tsv");
  }

  // Labels and splits.
  data.labels.resize(S);
  data.splits.resize(S);
  labels_.resize(S);
  splits_.resize(S);
  for (std::size_t s = 0; s < S; ++s) {
    const auto& nt = node_types_[s];
    if (!nt.labeled) {
      if (!data.labels[s].empty()) throw DataError("labels." + nt.name + ".tsv: type is not labeled");
      continue;
    }
    auto& lab = data.labels[s];
    if (lab.size() != nt.count)
      throw DataError("labels." + nt.name + ".tsv: expected " + std::to_string(nt.count) + " rows, got " +
                      std::to_string(lab.size()));
    for (std::size_t i = 0; i < lab.size(); ++i)
      if (lab[i] < kUnlabeled || lab[i] >= nt.num_classes)
        throw DataError("labels." + nt.name + ".tsv:" + std::to_string(i + 1) + ": label " + std::to_string(lab[i]) +
                        " outside [-1, " + std::to_string(nt.num_classes) + ")");
    std::vector<char> seen(nt.count, 0);
    for (SplitKind k : {SplitKind::train, SplitKind::val, SplitKind::test}) {
      for (std::size_t i : data.splits[s].get(k)) {
        if (i >= nt.count)
          throw DataError("splits." + nt.name + ".json: " + to_string(k) + " index " + std::to_string(i) +
                          " out of range");
        if (lab[i] == kUnlabeled)
          throw DataError("splits." + nt.name + ".json: " + to_string(k) + " index " + std::to_string(i) +
                          " is unlabeled");
        if (seen[i]++) throw DataError("splits." + nt.name + ".json: index " + std::to_string(i) + " repeated");
      }
    }
    labels_[s] = std::move(lab);
    splits_[s] = std::move(data.splits[s]);
  }

  // Derived operators.
  outgoing_.assign(S, {});
  adjacency_.resize(T);
  degree_.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    const auto& info = edge_info_[t];
    outgoing_[info.src].push_back(t);
    std::vector<Triplet> trip;
    trip.reserve(edges_[t].size());
    for (const auto& e : edges_[t]) trip.push_back({e.src, e.dst, 1.0});
    adjacency_[t] = SparseMatrix::from_triplets(node_types_[info.src].count, node_types_[info.dst].count, trip);
    DiagMatrix d;
    d.entries.resize(adjacency_[t].rows());
    for (std::size_t i = 0; i < d.entries.size(); ++i) d.entries[i] = adjacency_[t].row_sum(i);
    degree_[t] = std::move(d);
  }
  total_degree_.resize(S);
  for (std::size_t s = 0; s < S; ++s) {
    total_degree_[s].entries.assign(node_types_[s].count, 0.0);
    for (std::size_t t : outgoing_[s])
      for (std::size_t i = 0; i < node_types_[s].count; ++i) total_degree_[s].entries[i] += degree_[t][i];
  }
}

// ---------------------------------------------------------------------------
// Dataset directory I/O

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::ifstream open_input(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError(p.string() + ": cannot open file");
  return in;
}

inline std::ofstream open_output(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError(p.string() + ": cannot create file");
  return out;
}

inline bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

inline long long parse_int(const std::string& tok, const std::string& where) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(tok, &pos);
  } catch (const std::exception&) {
    throw DataError(where + ": expected an integer, got '" + tok + "'");
  }
  if (pos != tok.size()) throw DataError(where + ": expected an integer, got '" + tok + "'");
  return v;
}

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == '\t') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline Matrix read_features(const std::filesystem::path& p, std::size_t rows, std::size_t cols) {
  auto in = open_input(p);
  Matrix m(rows, cols);
  std::string line;
  std::size_t r = 0, lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    const std::string where = p.filename().string() + ":" + std::to_string(lineno);
    if (r >= rows) throw DataError(where + ": more than " + std::to_string(rows) + " rows");
    auto toks = split_tabs(line);
    if (toks.size() != cols)
      throw DataError(where + ": expected " + std::to_string(cols) + " columns, got " + std::to_string(toks.size()));
    for (std::size_t c = 0; c < cols; ++c) {
      std::size_t pos = 0;
      double v = 0;
      try {
        v = std::stod(toks[c], &pos);
      } catch (const std::exception&) {
        throw DataError(where + ": bad number '" + toks[c] + "'");
      }
      if (pos != toks[c].size() || !std::isfinite(v)) throw DataError(where + ": bad number '" + toks[c] + "'");
      m(r, c) = v;
    }
    ++r;
  }
  if (r != rows)
    throw DataError(p.filename().string() + ": expected " + std::to_string(rows) + " rows, got " + std::to_string(r));
  return m;
}

inline std::vector<Edge> read_edges(const std::filesystem::path& p, std::size_t n_src, std::size_t n_dst) {
  auto in = open_input(p);
  std::vector<Edge> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    const std::string where = p.filename().string() + ":" + std::to_string(lineno);
    auto toks = split_tabs(line);
    if (toks.size() != 2) throw DataError(where + ": expected 'src<TAB>dst'");
    const long long a = parse_int(toks[0], where), b = parse_int(toks[1], where);
    if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= n_src || static_cast<std::size_t>(b) >= n_dst)
      throw DataError(where + ": edge (" + toks[0] + ", " + toks[1] + ") out of range for " + std::to_string(n_src) +
                      " x " + std::to_string(n_dst) + " nodes");
    edges.push_back({static_cast<std::size_t>(a), static_cast<std::size_t>(b)});
  }
  return edges;
}

inline std::vector<int> read_labels(const std::filesystem::path& p) {
  auto in = open_input(p);
  std::vector<int> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    std::string tok = line;
    tok.erase(std::remove(tok.begin(), tok.end(), '\r'), tok.end());
    labels.push_back(static_cast<int>(parse_int(tok, p.filename().string() + ":" + std::to_string(lineno))));
  }
  return labels;
}

inline nlohmann::json read_json(const std::filesystem::path& p) {
  auto in = open_input(p);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(p.filename().string() + ": " + e.what());
  }
}

}  // namespace detail

inline HeteroGraph load_graph(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError(dir.string() + ": not a dataset directory");
  GraphData data;
  const auto schema = detail::read_json(dir / "schema.json");
  try {
    for (const auto& n : schema.at("node_types")) {
      NodeTypeSchema nt;
      nt.name = n.at("name").get<std::string>();
      nt.count = n.at("count").get<std::size_t>();
      nt.feat_dim = n.value("feat_dim", std::size_t{0});
      nt.labeled = n.value("labeled", false);
      nt.num_classes = n.value("num_classes", 0);
      data.node_types.push_back(nt);
    }
    for (const auto& e : schema.at("edge_types")) {
      EdgeTypeSchema et;
      et.name = e.at("name").get<std::string>();
      et.src_type = e.at("src").get<std::string>();
      et.dst_type = e.at("dst").get<std::string>();
      et.inverse_of = e.value("inverse_of", std::string{});
      data.edge_types.push_back(et);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("schema.json: " + std::string(e.what()));
  }
  auto count_of = [&](const std::string& name) -> std::size_t {
    for (const auto& nt : data.node_types)
      if (nt.name == name) return nt.count;
    throw DataError("schema.json: edge type references unknown node type '" + name + "'");
  };
  for (const auto& nt : data.node_types) {
    if (nt.feat_dim > 0)
      data.features.push_back(detail::read_features(dir / ("features." + nt.name + ".tsv"), nt.count, nt.feat_dim));
    else
      data.features.emplace_back();
    if (nt.labeled) {
      data.labels.push_back(detail::read_labels(dir / ("labels." + nt.name + ".tsv")));
      const auto sj = detail::read_json(dir / ("splits." + nt.name + ".json"));
      Split sp;
      try {
        sp.train = sj.at("train").get<std::vector<std::size_t>>();
        sp.val = sj.at("val").get<std::vector<std::size_t>>();
        sp.test = sj.at("test").get<std::vector<std::size_t>>();
      } catch (const nlohmann::json::exception& e) {
        throw DataError("splits." + nt.name + ".json: " + e.what());
      }
      data.splits.push_back(std::move(sp));
    } else {
      data.labels.emplace_back();
      data.splits.emplace_back();
    }
  }
  for (const auto& et : data.edge_types) {
    const auto p = dir / ("edges." + et.name + ".tsv");
    if (fs::exists(p))
      data.edges.emplace_back(detail::read_edges(p, count_of(et.src_type), count_of(et.dst_type)));
    else
      data.edges.emplace_back(std::nullopt);
  }
  return HeteroGraph(std::move(data));
}

/// Writes every edge type (including synthesized inverses) so that
/// load_graph(save_graph(g)) == g.
inline void save_graph(const HeteroGraph& g, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::ordered_json schema;
  schema["node_types"] = nlohmann::ordered_json::array();
  for (const auto& nt : g.node_types()) {
    nlohmann::ordered_json n;
    n["name"] = nt.name;
    n["count"] = nt.count;
    n["feat_dim"] = nt.feat_dim;
    n["labeled"] = nt.labeled;
    if (nt.labeled) n["num_classes"] = nt.num_classes;
    schema["node_types"].push_back(n);
  }
  schema["edge_types"] = nlohmann::ordered_json::array();
  for (const auto& et : g.edge_schemas()) {
    nlohmann::ordered_json e;
    e["name"] = et.name;
    e["src"] = et.src_type;
    e["dst"] = et.dst_type;
    e["inverse_of"] = et.inverse_of;
    schema["edge_types"].push_back(e);
  }
  detail::open_output(dir / "schema.json") << schema.dump(2) << "\n";

  for (std::size_t s = 0; s < g.num_node_types(); ++s) {
    const auto& nt = g.node_type(s);
    if (nt.feat_dim > 0) {
      auto out = detail::open_output(dir / ("features." + nt.name + ".tsv"));
      const Matrix& x = g.features(s);
      for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < x.cols(); ++j) out << (j ? "\t" : "") << detail::format_double(x(i, j));
        out << "\n";
      }
    }
    if (nt.labeled) {
      auto out = detail::open_output(dir / ("labels." + nt.name + ".tsv"));
      for (int l : g.labels(s)) out << l << "\n";
      nlohmann::ordered_json sj;
      sj["train"] = g.split(s).train;
      sj["val"] = g.split(s).val;
      sj["test"] = g.split(s).test;
      detail::open_output(dir / ("splits." + nt.name + ".json")) << sj.dump() << "\n";
    }
  }
  for (std::size_t t = 0; t < g.num_edge_types(); ++t) {
    auto out = detail::open_output(dir / ("edges." + g.edge_type(t).name + ".tsv"));
    for (const auto& e : g.edges(t)) out << e.src << "\t" << e.dst << "\n";
  }
}

}  // namespace halo
