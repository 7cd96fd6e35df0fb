// Small hand-checkable cases and cross-module properties.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "neurotopo/adam.hpp"
#include "neurotopo/adjacency.hpp"
#include "neurotopo/align.hpp"
#include "neurotopo/coupling.hpp"
#include "neurotopo/hubs.hpp"
#include "neurotopo/intervene.hpp"
#include "neurotopo/metrics.hpp"
#include "neurotopo/network.hpp"
#include "neurotopo/probe.hpp"
#include "neurotopo/synth.hpp"
#include "support.hpp"

using namespace ntopo;
using ntopo::test::random_record;
using ntopo::test::ScratchDir;

namespace {

CorrelationGraph graph_of(std::uint32_t d, std::vector<Edge> edges) {
  CorrelationGraph g;
  g.node_count = d;
  g.edges = std::move(edges);
  g.zero_variance.assign(d, false);
  g.density = d > 1 ? double(g.edges.size()) / g.pair_count() : 1.0;
  return g;
}

ActivationRecord record_of(std::uint32_t d, std::uint32_t n, const std::vector<float>& values) {
  ActivationRecord rec("x", 0, d, n);
  rec.values = values;
  for (std::uint32_t t = 0; t < n; ++t) rec.modality[t] = t % 2 ? Modality::Text : Modality::Vision;
  return rec;
}

HubSet set_of(std::uint32_t d, std::vector<std::uint32_t> members) {
  HubSet s;
  s.node_count = d;
  s.members = std::move(members);
  return s;
}

InterventionPlan plan_of(Directive d) {
  InterventionPlan p;
  p.directives.push_back(std::move(d));
  return p;
}

ActivationRecord permute_tokens(const ActivationRecord& rec, const std::vector<std::uint32_t>& perm) {
  ActivationRecord out = rec;
  for (std::uint32_t t = 0; t < rec.tokens; ++t) {
    out.modality[t] = rec.modality[perm[t]];
    for (std::uint32_t i = 0; i < rec.neurons; ++i) out.at(i, t) = rec.at(i, perm[t]);
  }
  return out;
}

std::vector<std::uint32_t> reversed_order(std::uint32_t n) {
  std::vector<std::uint32_t> p(n);
  std::iota(p.rbegin(), p.rend(), 0u);
  return p;
}

}  // namespace

TEST(ActdumpExamples, EverySingleByteCorruptionIsDetected) {
  auto rec = random_record(3, 4, 11);
  rec.label = std::uint32_t{1};
  const auto good = encode_record(rec);
  for (std::size_t k = 0; k < good.size(); ++k) {
    auto bad = good;
    bad[k] ^= 0xFF;
    EXPECT_THROW(decode_record(bad), DumpError) << "byte " << k;
  }
}

TEST(ActdumpExamples, TinyZeroRecordRoundTrips) {
  ActivationRecord rec("z", 0, 1, 2);
  rec.modality = {Modality::Text, Modality::Text};
  const auto back = decode_record(encode_record(rec));
  EXPECT_EQ(back, rec);
  EXPECT_EQ(back.values, (std::vector<float>{0.0f, 0.0f}));
}

TEST(ActdumpExamples, EmptyManifestAndInconsistentWidths) {
  ScratchDir dir("examples_manifest");
  {
    std::ofstream out(dir / "empty.tsv");
    out << "# split_seed=3\n";
  }
  EXPECT_EQ(load_manifest(dir / "empty.tsv").records.size(), 0u);

  write_record(random_record(8, 4, 1, 0, "a"), dir / "a.ntac");
  write_record(random_record(16, 4, 2, 0, "b"), dir / "b.ntac");
  {
    std::ofstream out(dir / "mixed.tsv");
    out << "a.ntac\ta\t0\t-\nb.ntac\tb\t0\t-\n";
  }
  EXPECT_THROW(load_manifest(dir / "mixed.tsv"), DataError);
}

TEST(GraphExamples, ReversedRowsCorrelateAtMinusOne) {
  const auto g = pearson_graph(record_of(2, 3, {1, 2, 3, 3, 2, 1}));
  ASSERT_EQ(g.edges.size(), 1u);
  EXPECT_EQ(g.edges[0].weight, -1.0f);
}

TEST(GraphExamples, FullDensityKeepsTheGraph) {
  const auto g = pearson_graph(random_record(9, 12, 4));
  EXPECT_EQ(sparsify_topk(g, 1.0), g);
}

TEST(GraphExamples, KeepsTheStrongestThirdOfSixEdges) {
  const auto g = graph_of(4, {{0, 1, 0.3f}, {0, 2, -0.9f}, {0, 3, 0.05f},
                              {1, 2, 0.1f}, {1, 3, 0.8f}, {2, 3, -0.2f}});
  const auto s = sparsify_topk(g, 1.0 / 3.0);
  ASSERT_EQ(s.edges.size(), 2u);
  EXPECT_EQ(ntopo::test::edge_set(s),
            (std::set<ntopo::test::EdgeKey>{{0, 2, -0.9f}, {1, 3, 0.8f}}));
}

TEST(GraphExamples, EqualWeightsKeepTheSmallestPairs) {
  std::vector<Edge> edges;
  for (std::uint32_t i = 0; i < 5; ++i)
    for (std::uint32_t j = i + 1; j < 5; ++j) edges.push_back({i, j, 0.5f});
  const auto s = sparsify_topk(graph_of(5, edges), 0.3);
  ASSERT_EQ(s.edges.size(), 3u);
  EXPECT_EQ(ntopo::test::edge_set(s),
            (std::set<ntopo::test::EdgeKey>{{0, 1, 0.5f}, {0, 2, 0.5f}, {0, 3, 0.5f}}));
}

TEST(GraphExamples, InvariantToTokenOrderAndRowScaling) {
  const auto rec = random_record(7, 15, 5);
  const auto a = pearson_graph(rec);
  const auto b = pearson_graph(permute_tokens(rec, reversed_order(rec.tokens)));
  auto scaled = rec;
  for (std::uint32_t t = 0; t < rec.tokens; ++t) scaled.at(3, t) *= 4.0f;
  const auto c = pearson_graph(scaled);
  ASSERT_EQ(a.edges.size(), b.edges.size());
  ASSERT_EQ(a.edges.size(), c.edges.size());
  for (std::size_t k = 0; k < a.edges.size(); ++k) {
    EXPECT_NEAR(a.edges[k].weight, b.edges[k].weight, 1e-6);
    EXPECT_NEAR(a.edges[k].weight, c.edges[k].weight, 1e-6);
  }
}

TEST(DegreeExamples, HandBuiltGraphs) {
  EXPECT_EQ(degree_vector(graph_of(4, {})), (std::vector<double>{0, 0, 0, 0}));
  EXPECT_EQ(degree_vector(graph_of(3, {{0, 1, -1.0f}})), (std::vector<double>{1, 1, 0}));
  const auto tri = graph_of(3, {{0, 1, 0.5f}, {0, 2, -0.5f}, {1, 2, 1.0f}});
  EXPECT_EQ(degree_vector(tri), (std::vector<double>{1.0, 1.5, 1.5}));
  EXPECT_EQ(graph_hub_set(tri, HubDefinition::Graph, 34.0).members, (std::vector<std::uint32_t>{1}));
}

TEST(HubExamples, FullBudgetAndSingleHub) {
  const auto rec = random_record(100, 20, 6);
  const auto all = hub_set(rec, HubOptions{HubDefinition::Graph, 100.0});
  EXPECT_EQ(all.members.size(), 100u);
  HubOptions one{HubDefinition::Graph, 1.0};
  const auto single = hub_set(rec, one);
  ASSERT_EQ(single.members.size(), 1u);
  const auto deg = degree_vector(sparsify_topk(pearson_graph(rec), one.sparsity));
  const auto best = std::max_element(deg.begin(), deg.end()) - deg.begin();
  EXPECT_EQ(single.members[0], static_cast<std::uint32_t>(best));
}

TEST(HubExamples, RecurrenceOfSmallSets) {
  const std::vector<HubSet> sets{set_of(5, {1, 2}), set_of(5, {1, 3}), set_of(5, {1, 4})};
  const auto p = recurrence(sets);
  EXPECT_DOUBLE_EQ(p.pi[1], 1.0);
  for (std::uint32_t i : {2u, 3u, 4u}) EXPECT_DOUBLE_EQ(p.pi[i], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(p.pi[0], 0.0);

  const std::vector<HubSet> one{set_of(4, {0, 2})};
  for (double v : recurrence(one).pi) EXPECT_TRUE(v == 0.0 || v == 1.0);
  const std::vector<HubSet> disjoint{set_of(4, {0, 1}), set_of(4, {2, 3})};
  for (double v : recurrence(disjoint).pi) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(HubExamples, HubsIgnoreRowRescaling) {
  const auto rec = random_record(40, 30, 7);
  auto scaled = rec;
  for (std::uint32_t i = 0; i < rec.neurons; ++i)
    for (std::uint32_t t = 0; t < rec.tokens; ++t) scaled.at(i, t) *= float(1 + i % 3);
  const HubOptions opts{HubDefinition::Graph, 10.0};
  EXPECT_EQ(hub_set(rec, opts).members, hub_set(scaled, opts).members);
}

TEST(HubExamples, PlantedHubsRecurInTheirLayerOnly) {
  auto spec = synth_preset("hubs");
  spec.sample_count = 20;
  spec.layer_count = 3;
  spec.hub_layers = {1};
  spec.signal_layers = {0, 1, 2};
  const auto data = generate(spec);
  const HubOptions opts{HubDefinition::Graph, 100.0 * spec.planted_hub_indices.size() / spec.d};
  std::vector<double> mean(3);
  for (std::uint32_t l = 0; l < 3; ++l) {
    std::vector<HubSet> sets;
    for (const auto& rec : data.layer(l)) sets.push_back(hub_set(rec, opts));
    mean[l] = recurrence(sets).mean_over(spec.planted_hub_indices);
  }
  EXPECT_GE(mean[1], 0.9);
  EXPECT_GT(mean[1], mean[0]);
  EXPECT_GT(mean[1], mean[2]);
}

TEST(CouplingExamples, IdenticalAndNegatedTokens) {
  // columns are tokens; token 1 copies token 0, token 2 negates it
  const auto rec = record_of(3, 3, {1, 1, -1, 2, 2, -2, 4, 4, -4});
  const auto c = token_correlation(rec);
  EXPECT_DOUBLE_EQ(c.at(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(c.at(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(c.at(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(c.at(0, 2), -1.0);
}

TEST(CouplingExamples, IdenticalTokensCoupleFully) {
  ActivationRecord rec("x", 0, 5, 4);
  for (std::uint32_t i = 0; i < 5; ++i)
    for (std::uint32_t t = 0; t < 4; ++t) rec.at(i, t) = float(i * i);
  rec.modality = {Modality::Vision, Modality::Vision, Modality::Text, Modality::Text};
  const auto m = modality_coupling(rec);
  EXPECT_DOUBLE_EQ(*m.vv.value, 1.0);
  EXPECT_DOUBLE_EQ(*m.tt.value, 1.0);
  EXPECT_DOUBLE_EQ(*m.vt.value, 1.0);
}

TEST(CouplingExamples, SingleVisionTokenHasNoWithinMean) {
  auto rec = random_record(6, 4, 8);
  rec.modality = {Modality::Vision, Modality::Text, Modality::Text, Modality::Text};
  const auto m = modality_coupling(rec);
  EXPECT_FALSE(m.vv.present());
  EXPECT_TRUE(m.tt.present());
  EXPECT_TRUE(m.vt.present());
}

TEST(CouplingExamples, SingleSampleHasZeroSpread) {
  const auto row = aggregate_coupling(0, {modality_coupling(random_record(6, 8, 9))});
  EXPECT_EQ(row.sample_count, 1u);
  EXPECT_DOUBLE_EQ(*row.sd_vv, 0.0);
  EXPECT_DOUBLE_EQ(*row.sd_tt, 0.0);
  EXPECT_DOUBLE_EQ(*row.sd_vt, 0.0);
}

TEST(CouplingExamples, InvariantToTokenOrder) {
  const auto rec = random_record(8, 10, 10);
  const auto a = modality_coupling(rec);
  const auto b = modality_coupling(permute_tokens(rec, reversed_order(rec.tokens)));
  EXPECT_NEAR(*a.vv.value, *b.vv.value, 1e-12);
  EXPECT_NEAR(*a.tt.value, *b.tt.value, 1e-12);
  EXPECT_NEAR(*a.vt.value, *b.vt.value, 1e-12);
}

TEST(CouplingExamples, ExchangeableModalitiesAgreeOnAverage) {
  std::vector<double> diff;
  for (std::uint32_t s = 0; s < 200; ++s) {
    const auto m = modality_coupling(random_record(10, 12, 12, s));
    diff.push_back(*m.vv.value - *m.tt.value);
  }
  const double mean = std::accumulate(diff.begin(), diff.end(), 0.0) / diff.size();
  double var = 0.0;
  for (double x : diff) var += (x - mean) * (x - mean);
  const double se = std::sqrt(var / (diff.size() - 1) / diff.size());
  EXPECT_LT(std::fabs(mean), 3.0 * se);
}

TEST(AdjacencyExamples, TwoNodesAndEdgeless) {
  const auto two = normalize_adjacency(graph_of(2, {{0, 1, 1.0f}}));
  EXPECT_LT(max_abs_diff(two.dense(), Tensor2(2, 2, {0.5, 0.5, 0.5, 0.5})), 1e-15);
  EXPECT_LT(max_abs_diff(normalize_adjacency(graph_of(4, {})).dense(), Tensor2::identity(4)), 1e-15);
}

TEST(AdjacencyExamples, SymmetricWithPositiveDiagonal) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto g = sparsify_topk(pearson_graph(random_record(9, 14, seed)), 0.3);
    for (auto mode : {AdjacencyMode::Absolute, AdjacencyMode::Signed}) {
      const auto a = normalize_adjacency(g, mode).dense();
      EXPECT_EQ(a, transpose(a));
      for (std::size_t i = 0; i < a.rows(); ++i) EXPECT_GT(a(i, i), 0.0);
    }
  }
}

TEST(GcnExamples, IdentityWeightsZeroInputAndLinearity) {
  const auto adj = normalize_adjacency(sparsify_topk(pearson_graph(random_record(6, 9, 13)), 0.5));
  RandomStream rng(14, 0);
  Tensor2 x(6, 3), y(6, 3), w(3, 2);
  for (auto* t : {&x, &y, &w})
    for (auto& v : t->data()) v = rng.normal();
  EXPECT_LT(max_abs_diff(gcn_forward(adj, x, Tensor2::identity(3), Activation::Identity),
                         adj.multiply(x)), 1e-15);
  EXPECT_EQ(gcn_forward(adj, Tensor2(6, 3), w, Activation::Relu), Tensor2(6, 2));
  Tensor2 mix = x;
  mix *= 2.0;
  Tensor2 y3 = y;
  y3 *= -3.0;
  mix += y3;
  auto expect = gcn_forward(adj, x, w, Activation::Identity);
  expect *= 2.0;
  auto fy = gcn_forward(adj, y, w, Activation::Identity);
  fy *= -3.0;
  expect += fy;
  EXPECT_LT(max_abs_diff(gcn_forward(adj, mix, w, Activation::Identity), expect), 1e-12);
}

TEST(GcnExamples, PoolingOfASmallTable) {
  EXPECT_EQ(pool_signature(Tensor2(2, 2, {1, 2, 3, 0})), (std::vector<double>{2, 1, 3, 2}));
  EXPECT_EQ(pool_signature(Tensor2(1, 3, {4, -1, 2})), (std::vector<double>{4, -1, 2, 4, -1, 2}));
}

TEST(GcnExamples, EdgelessSignatureIsThePooledEmbeddingTable) {
  GcnEncoder enc(GcnConfig{5, 4, 1, 3});
  enc.parameters()[1].value = Tensor2::identity(4);
  const auto adj = normalize_adjacency(graph_of(5, {}));
  EXPECT_EQ(enc.forward(adj), pool_signature(enc.parameters()[0].value));
}

TEST(AdamExamples, FirstStepAndZeroGradient) {
  Adam adam(AdamConfig{1e-3});
  Parameter p("p", Tensor2(1, 1, {0.0}));
  p.grad[0] = 1.0;
  std::vector<Parameter*> ps{&p};
  adam.step(ps);
  EXPECT_NEAR(p.value[0], -1e-3, 1e-10);

  Adam still(AdamConfig{1e-3});
  Parameter q("q", Tensor2(1, 3, {0.5, -2.0, 7.0}));
  std::vector<Parameter*> qs{&q};
  for (int t = 0; t < 10; ++t) still.step(qs);
  EXPECT_EQ(q.value, Tensor2(1, 3, {0.5, -2.0, 7.0}));
}

TEST(AdamExamples, QuadraticMatchesExtendedPrecisionReference) {
  const AdamConfig cfg{0.05, 0.9, 0.999, 1e-8};
  Adam adam(cfg);
  Parameter p("p", Tensor2(1, 2, {1.5, -0.75}));
  std::vector<Parameter*> ps{&p};
  long double theta[2] = {1.5L, -0.75L}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int t = 1; t <= 100; ++t) {
    zero_grad(std::span<Parameter* const>(ps));
    half_squared_norm(p.value, &p.grad);
    adam.step(ps);
    for (int i = 0; i < 2; ++i) {
      const long double g = theta[i];
      m[i] = 0.9L * m[i] + 0.1L * g;
      v[i] = 0.999L * v[i] + 0.001L * g * g;
      const long double mh = m[i] / (1 - std::pow(0.9L, t)), vh = v[i] / (1 - std::pow(0.999L, t));
      theta[i] -= 0.05L * mh / (std::sqrt(vh) + 1e-8L);
    }
  }
  EXPECT_NEAR(p.value[0], double(theta[0]), 1e-10);
  EXPECT_NEAR(p.value[1], double(theta[1]), 1e-10);
}

TEST(MetricExamples, ConfusionCounts) {
  const std::vector<std::uint32_t> truth{1, 1, 1, 0, 0, 0}, pred{1, 1, 0, 1, 0, 0};
  const auto m = classification_metrics(truth, pred);
  EXPECT_DOUBLE_EQ(m.accuracy, 4.0 / 6.0);
  EXPECT_NEAR(m.macro_f1, 2.0 / 3.0, 1e-15);
}

TEST(MetricExamples, MacroF1MatchesBruteForce) {
  RandomStream rng(15, 0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::uint32_t k = 2 + rng.below(4), n = 5 + rng.below(30);
    std::vector<std::uint32_t> truth(n), pred(n);
    for (auto& v : truth) v = rng.below(k);
    for (auto& v : pred) v = rng.below(k);
    double sum = 0.0;
    int present = 0;
    for (std::uint32_t c = 0; c < k; ++c) {
      int tp = 0, fp = 0, fn = 0;
      for (std::uint32_t s = 0; s < n; ++s) {
        tp += truth[s] == c && pred[s] == c;
        fp += truth[s] != c && pred[s] == c;
        fn += truth[s] == c && pred[s] != c;
      }
      if (tp + fp + fn == 0) continue;
      ++present;
      sum += 2.0 * tp / (2.0 * tp + fp + fn);
    }
    EXPECT_NEAR(classification_metrics(truth, pred).macro_f1, sum / present, 1e-12) << trial;
  }
}

TEST(MetricExamples, PerfectAndMeanRegression) {
  const std::vector<double> y{1, 4, 2, 8};
  const auto perfect = regression_metrics(y, y);
  EXPECT_DOUBLE_EQ(perfect.mse, 0.0);
  EXPECT_DOUBLE_EQ(*perfect.r2, 1.0);
  EXPECT_NEAR(*perfect.pearson, 1.0, 1e-15);
  const std::vector<double> mean(4, 3.75);
  EXPECT_NEAR(*regression_metrics(y, mean).r2, 0.0, 1e-15);
}

TEST(MetricExamples, PairAucAndMonotoneInvariance) {
  const std::vector<double> pos{0.7, 0.3}, neg{0.5, 0.1};
  EXPECT_DOUBLE_EQ(pairwise_auc(pos, neg), 0.75);
  std::vector<double> pe, ne;
  for (double v : pos) pe.push_back(std::exp(5 * v));
  for (double v : neg) ne.push_back(std::exp(5 * v));
  EXPECT_DOUBLE_EQ(pairwise_auc(pe, ne), 0.75);
}

TEST(ProbeExamples, SplitSizes) {
  for (auto [n, train, test] : {std::tuple{10u, 8u, 2u}, std::tuple{5u, 4u, 1u}}) {
    const auto s = split_indices(n, 1, 0.8);
    EXPECT_EQ(s.train.size(), train);
    EXPECT_EQ(s.test.size(), test);
  }
}

TEST(ProbeExamples, ConstantLabelsAreLearnedImmediately) {
  std::vector<ActivationRecord> recs;
  for (std::uint32_t s = 0; s < 20; ++s) {
    auto rec = random_record(8, 10, 16, s, "c" + std::to_string(s));
    rec.label = std::uint32_t{1};
    recs.push_back(rec);
  }
  ProbeConfig cfg;
  cfg.epochs = 1;
  cfg.embedding_dim = 8;
  cfg.learning_rate = 0.05;
  cfg.sparsity = 0.3;
  const auto samples = build_samples(recs, cfg);
  const auto result = train_probe(samples, cfg, split_indices(samples.size(), 1, 0.8));
  EXPECT_DOUBLE_EQ(result.report.classification->accuracy, 1.0);
}

TEST(ProbeExamples, FeaturesDependOnNeuronIdentity) {
  ProbeConfig cfg;
  cfg.kind = ProbeKind::Linear;
  cfg.embedding_dim = 8;
  cfg.sparsity = 0.4;
  const auto rec = random_record(8, 12, 17);
  ActivationRecord shuffled = rec;
  for (std::uint32_t i = 0; i < rec.neurons; ++i)
    for (std::uint32_t t = 0; t < rec.tokens; ++t) shuffled.at(i, t) = rec.at(rec.neurons - 1 - i, t);
  const auto enc = frozen_encoder(cfg, rec.neurons);
  EXPECT_NE(featurize(rec, cfg, &enc).linear_features, featurize(shuffled, cfg, &enc).linear_features);

  cfg.sparsity = 1.0;
  const auto dense = featurize(rec, cfg, &enc);
  EXPECT_EQ(dense.adjacency.nonzeros(), 8u + 2u * 28u);
}

TEST(AlignExamples, SinglePairHasZeroLoss) {
  Tensor2 omega(1, 4, {0.3, -1.0, 2.0, 0.5}), gamma(1, 4, {1.0, 0.0, -0.2, 0.7});
  const auto r = infonce(omega, gamma, 0.07);
  EXPECT_DOUBLE_EQ(r.loss, 0.0);
}

TEST(InterveneExamples, FullBudgetSelectsEveryNeuron) {
  const auto rec = random_record(12, 10, 18);
  for (auto c : {SelectionCriterion::Degree, SelectionCriterion::Activation, SelectionCriterion::Random}) {
    const auto plan = select_ablation_targets(rec, c, 100.0);
    const auto& z = std::get<ZeroDirective>(plan.directives.at(0));
    EXPECT_EQ(z.neurons.size(), 12u) << to_string(c);
  }
}

TEST(InterveneExamples, TopEdgeOfOneRecordAndOfEqualRows) {
  const auto rec = random_record(9, 16, 19);
  const auto g = sparsify_topk(pearson_graph(rec), kDefaultSparsity);
  const auto best = *std::max_element(g.edges.begin(), g.edges.end(), [](const Edge& a, const Edge& b) {
    return std::fabs(a.weight) < std::fabs(b.weight);
  });
  const std::vector<ActivationRecord> one{rec};
  EXPECT_EQ(top_edge(one), std::make_pair(best.i, best.j));

  ActivationRecord flat("f", 0, 5, 6);
  for (std::uint32_t i = 0; i < 5; ++i)
    for (std::uint32_t t = 0; t < 6; ++t) flat.at(i, t) = float(t * t);
  const std::vector<ActivationRecord> same{flat};
  EXPECT_EQ(top_edge(same), std::make_pair(0u, 1u));
}

TEST(InterveneExamples, DirectiveAlgebra) {
  const auto rec = random_record(6, 8, 20);
  const auto zero = plan_of(ZeroDirective{{1, 4}});
  EXPECT_EQ(apply(zero, apply(zero, rec)), apply(zero, rec));

  const auto twice = apply(plan_of(ScaleDirective{{2}, 0.5}), apply(plan_of(ScaleDirective{{2}, 3.0}), rec));
  const auto once = apply(plan_of(ScaleDirective{{2}, 1.5}), rec);
  for (std::uint32_t t = 0; t < rec.tokens; ++t) EXPECT_NEAR(twice.at(2, t), once.at(2, t), 1e-6);

  ReplaceDirective self_opp;
  self_opp.target = self_opp.source = 3;
  self_opp.mode = ReplaceMode::Opposite;
  EXPECT_EQ(apply(plan_of(self_opp), apply(plan_of(self_opp), rec)), rec);

  ReplaceDirective opp;
  opp.target = 1;
  opp.source = 5;
  opp.mode = ReplaceMode::Opposite;
  const auto once_opp = apply(plan_of(opp), rec);
  EXPECT_EQ(apply(plan_of(opp), once_opp), once_opp);
}

TEST(SynthExamples, NoiselessBlockIsPerfectlyCorrelated) {
  auto spec = synth_preset("classify");
  spec.sample_count = 4;
  spec.noise_sigma = 0.0;
  spec.distractor_blocks = 0;
  const auto rec = generate_record(spec, 1, 0);
  const auto g = pearson_graph(rec);
  const auto size = spec.block_sizes[1];
  for (const auto& e : g.edges) {
    if (e.j < size) EXPECT_NEAR(e.weight, 1.0f, 1e-6) << e.i << "," << e.j;
  }
}

TEST(SynthExamples, BreakingTheBlockFlipsTheOracle) {
  auto spec = synth_preset("classify");
  spec.sample_count = 4;
  spec.block_sizes = {8, 16};
  auto rec = generate_record(spec, 1, 0);
  ASSERT_EQ(std::get<std::uint32_t>(oracle_label(spec, rec)), 1u);
  RandomStream rng(21, 0);
  for (std::uint32_t i = 8; i < 16; ++i)
    for (std::uint32_t t = 0; t < rec.tokens; ++t) rec.at(i, t) = float(rng.normal());
  EXPECT_EQ(std::get<std::uint32_t>(oracle_label(spec, rec)), 0u);
}
