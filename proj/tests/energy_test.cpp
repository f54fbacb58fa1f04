#include <gtest/gtest.h>

#include "support.hpp"

using namespace halo;
using halo::testing::energy_by_edges;
using halo::testing::InstanceSpec;
using halo::testing::random_embedding;
using halo::testing::random_instance;
using halo::testing::random_matrix;
using halo::testing::rel_err;
using halo::testing::zero_params;

namespace {

// Two 1-node types joined by one edge; d = 1.
HeteroGraph pair_graph() {
  GraphData d;
  d.node_types = {{"u", 1, 1, false, 0}, {"v", 1, 1, false, 0}};
  d.edge_types = {{"uv", "u", "v", ""}};
  d.edges = {std::vector<Edge>{{0, 0}}};
  d.features = {Matrix{{0.0}}, Matrix{{0.0}}};
  return HeteroGraph(std::move(d));
}

HeteroGraph path_graph(std::size_t n) {
  GraphData d;
  d.node_types = {{"a", n, 1, false, 0}};
  d.edge_types = {{"next", "a", "a", ""}};
  std::vector<Edge> e;
  for (std::size_t i = 0; i + 1 < n; ++i) e.push_back({i, i + 1});
  d.edges = {e};
  d.features = {Matrix(n, 1, 1.0)};
  return HeteroGraph(std::move(d));
}

HeteroGraph edgeless_graph() {
  GraphData d;
  d.node_types = {{"a", 4, 2, false, 0}, {"b", 3, 3, false, 0}};
  CounterRng rng(77);
  d.features = {random_matrix(rng, 4, 2), random_matrix(rng, 3, 3)};
  return HeteroGraph(std::move(d));
}

}  // namespace

TEST(BaseEmbed, IdentityWeightsReturnFeatures) {
  const auto inst = random_instance(3);
  std::vector<std::size_t> dims;
  for (std::size_t s = 0; s < inst.graph.num_node_types(); ++s) dims.push_back(inst.graph.features(s).cols());
  ParamSet p = zero_params(inst.graph, dims);
  for (std::size_t s = 0; s < dims.size(); ++s) p.W[s] = Matrix::identity(dims[s]);
  const EmbeddingSet f = base_embed(inst.graph, p);
  for (std::size_t s = 0; s < f.size(); ++s) EXPECT_EQ(f[s], inst.graph.features(s));
}

TEST(BaseEmbed, ZeroFeaturesGiveZero) {
  GraphData d;
  d.node_types = {{"a", 3, 2, false, 0}};
  d.features = {Matrix(3, 2)};
  const HeteroGraph g(std::move(d));
  ParamSet p = zero_params(g, {4});
  CounterRng rng(1);
  p.W[0] = random_matrix(rng, 2, 4);
  EXPECT_EQ(base_embed(g, p)[0], Matrix(3, 4));
}

TEST(BaseEmbed, MatchesDirectProduct) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = random_instance(seed);
    const EmbeddingSet f = base_embed(inst.graph, inst.params);
    for (std::size_t s = 0; s < f.size(); ++s) {
      const Matrix& x = inst.graph.features(s);
      const Matrix& w = inst.params.W[s];
      Matrix expected(x.rows(), w.cols());
      for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < w.cols(); ++j)
          for (std::size_t k = 0; k < x.cols(); ++k) expected(i, j) += x(i, k) * w(k, j);
      EXPECT_LT(rel_err(f[s], expected), 1e-12);
    }
  }
}

TEST(Energy, HandExample) {
  const HeteroGraph g = pair_graph();
  const std::vector<Matrix> H{Matrix{{2.0}}, Matrix{{0.0}}};
  EmbeddingSet f{{Matrix{{0.0}}, Matrix{{0.0}}}};
  EmbeddingSet y{{Matrix{{1.0}}, Matrix{{3.0}}}};
  // fit 0.5 * (1 + 9) = 5; penalty 0.5 * ((2 - 3)^2 + (0 - 1)^2) = 1
  EXPECT_DOUBLE_EQ(energy_value(g, H, f, y, 1.0), 6.0);
}

TEST(Energy, ZeroAtBaseEmbeddingWithoutEdges) {
  const HeteroGraph g = edgeless_graph();
  ParamSet p = zero_params(g, {2, 2});
  CounterRng rng(5);
  p.W = {random_matrix(rng, 2, 2), random_matrix(rng, 3, 2)};
  EXPECT_EQ(energy_value(g, p, base_embed(g, p), EnergyConfig{1.0}), 0.0);
}

TEST(Energy, SingleTypeIdentityIsTwiceLaplacianForm) {
  const std::size_t n = 5;
  const HeteroGraph g = path_graph(n);
  CounterRng rng(6);
  const std::vector<Matrix> H{Matrix{{1.0}}, Matrix{{1.0}}};
  const Matrix yv = random_matrix(rng, n, 1);
  const EmbeddingSet y{{yv}};
  const EmbeddingSet f{{yv}};  // removes the fit term
  // y^T L y for the path Laplacian, written out directly.
  double quad = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) quad += (yv(i, 0) - yv(i + 1, 0)) * (yv(i, 0) - yv(i + 1, 0));
  const double lambda = 0.7;
  // (lambda / 2) * 2 * y^T L y
  EXPECT_NEAR(energy_value(g, H, f, y, lambda), lambda * quad, 1e-12 * quad);
}

TEST(Energy, MatchesEdgeLoopOracle) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto inst = random_instance(seed);
    CounterRng rng(seed, 8);
    const EmbeddingSet y = random_embedding(rng, inst.graph, inst.params);
    const double lambda = rng.uniform(0.1, 5.0);
    const double e = energy_value(inst.graph, inst.params, y, EnergyConfig{lambda});
    const double o = energy_by_edges(inst.graph, inst.params.H, base_embed(inst.graph, inst.params), y, lambda);
    EXPECT_NEAR(e, o, 1e-12 * std::abs(o));
  }
}

TEST(EnergyGrad, EdgelessGraphGivesFitResidual) {
  const HeteroGraph g = edgeless_graph();
  ParamSet p = zero_params(g, {2, 3});
  CounterRng rng(9);
  p.W = {random_matrix(rng, 2, 2), random_matrix(rng, 3, 3)};
  const EmbeddingSet y = random_embedding(rng, g, p);
  const EmbeddingSet grad = energy_grad(g, p, y, EnergyConfig{3.0});
  EXPECT_EQ(grad, y - base_embed(g, p));
}

TEST(EnergyGrad, MatchesCentralDifferences) {
  InstanceSpec spec;
  spec.max_nodes = 12;
  spec.min_types = spec.max_types = 2;
  spec.min_canonical = spec.max_canonical = 2;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto inst = random_instance(seed, spec);
    CounterRng rng(seed, 10);
    const EmbeddingSet y = random_embedding(rng, inst.graph, inst.params);
    const EnergyConfig cfg{rng.uniform(0.1, 5.0)};
    const EmbeddingSet analytic = energy_grad(inst.graph, inst.params, y, cfg);
    EmbeddingSet numeric = EmbeddingSet::zeros_like(y);
    const double h = 1e-6;
    for (std::size_t s = 0; s < y.size(); ++s)
      for (std::size_t k = 0; k < y[s].size(); ++k) {
        EmbeddingSet yp = y, ym = y;
        yp[s].data()[k] += h;
        ym[s].data()[k] -= h;
        numeric[s].data()[k] = (energy_value(inst.graph, inst.params, yp, cfg) -
                                energy_value(inst.graph, inst.params, ym, cfg)) / (2 * h);
      }
    EXPECT_LT(rel_err(analytic, numeric), 1e-7) << "seed " << seed;
  }
}

TEST(AssembleSystem, ZeroCompatibilityLeavesOnlyDegrees) {
  const auto inst = random_instance(11);
  ParamSet p = inst.params;
  for (auto& h : p.H) h = Matrix(h.rows(), h.cols());
  const SystemBlocks sys = assemble_system(inst.graph, p);
  EXPECT_EQ(max_abs(sys.P), 0.0);
  EXPECT_EQ(max_abs(sys.Q), 0.0);
  std::size_t row = 0;
  for (std::size_t s = 0; s < inst.graph.num_node_types(); ++s)
    for (std::size_t a = 0; a < p.dims[s]; ++a)
      for (std::size_t i = 0; i < inst.graph.node_count(s); ++i, ++row)
        EXPECT_EQ(sys.D(row, row), inst.graph.total_degree(s)[i]);
}

TEST(AssembleSystem, CouplingIsSymmetric) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto inst = random_instance(seed);
    const SystemBlocks sys = assemble_system(inst.graph, inst.params);
    const Matrix c = sys.Q - sys.P;
    EXPECT_LE(max_abs(c - transpose(c)), 1e-12 * std::max(1.0, max_abs(c))) << "seed " << seed;
  }
}

TEST(AssembleSystem, AgreesWithMatrixFreeGradient) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto inst = random_instance(seed);
    CounterRng rng(seed, 12);
    const EmbeddingSet y = random_embedding(rng, inst.graph, inst.params);
    const double lambda = rng.uniform(0.01, 10.0);
    const SystemBlocks sys = assemble_system(inst.graph, inst.params);
    const auto yv = stack(y);
    const auto fv = stack(base_embed(inst.graph, inst.params));
    auto assembled = matvec(sys.system_matrix(lambda), yv);
    for (std::size_t i = 0; i < assembled.size(); ++i) assembled[i] -= fv[i];
    const auto free = stack(energy_grad(inst.graph, inst.params, y, EnergyConfig{lambda}));
    EXPECT_LT(rel_err(assembled, free), 1e-10) << "seed " << seed;
  }
}

TEST(AssembleSystem, EnforcesSizeCap) {
  GraphData d;
  d.node_types = {{"a", 1001, 1, false, 0}};
  d.features = {Matrix(1001, 1, 1.0)};
  const HeteroGraph g(std::move(d));
  EXPECT_THROW(assemble_system(g, zero_params(g, {2})), ConfigError);
}

TEST(ExactSolution, GradientVanishes) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto inst = random_instance(seed);
    const EnergyConfig cfg{1.0 + static_cast<double>(seed % 5)};
    const EmbeddingSet y = exact_solution(inst.graph, inst.params, cfg);
    const EmbeddingSet grad = energy_grad(inst.graph, inst.params, y, cfg);
    EXPECT_LT(grad.norm() / std::max(y.norm(), 1e-300), 1e-9) << "seed " << seed;
  }
}

TEST(ExactSolution, ZeroCompatibilityIsDiagonalSolve) {
  const auto inst = random_instance(13);
  ParamSet p = inst.params;
  for (auto& h : p.H) h = Matrix(h.rows(), h.cols());
  const double lambda = 2.5;
  const EmbeddingSet y = exact_solution(inst.graph, p, EnergyConfig{lambda});
  const EmbeddingSet f = base_embed(inst.graph, p);
  for (std::size_t s = 0; s < y.size(); ++s) {
    Matrix expected = f[s];
    for (std::size_t i = 0; i < expected.rows(); ++i)
      for (double& v : expected.row(i)) v /= 1.0 + lambda * inst.graph.total_degree(s)[i];
    EXPECT_LT(rel_err(y[s], expected), 1e-12);
  }
}

TEST(ExactSolution, TinyLambdaReturnsBaseEmbedding) {
  const auto inst = random_instance(14);
  const EmbeddingSet y = exact_solution(inst.graph, inst.params, EnergyConfig{1e-8});
  EXPECT_LT(relative_gap(y, base_embed(inst.graph, inst.params)), 1e-6);
}

TEST(ExactSolution, IsLocalMinimum) {
  InstanceSpec spec;
  spec.max_nodes = 10;
  const auto inst = random_instance(15, spec);
  const EnergyConfig cfg{1.5};
  const EmbeddingSet y = exact_solution(inst.graph, inst.params, cfg);
  const double e0 = energy_value(inst.graph, inst.params, y, cfg);
  CounterRng rng(16);
  for (int trial = 0; trial < 100; ++trial) {
    EmbeddingSet z = random_embedding(rng, inst.graph, inst.params);
    const double scale = 1e-3 / z.norm();
    for (auto& b : z.blocks) b *= scale;
    z += y;
    EXPECT_LE(e0, energy_value(inst.graph, inst.params, z, cfg));
  }
}
