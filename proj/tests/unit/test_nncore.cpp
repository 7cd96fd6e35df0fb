#include <gtest/gtest.h>

#include <cmath>

#include "neurotopo/adam.hpp"
#include "neurotopo/adjacency.hpp"
#include "neurotopo/checkpoint.hpp"
#include "neurotopo/metrics.hpp"
#include "neurotopo/network.hpp"
#include "neurotopo/tensor.hpp"
#include "support.hpp"

using namespace ntopo;
using ntopo::test::random_record;
using ntopo::test::ScratchDir;

namespace {

Tensor2 random_tensor(std::size_t r, std::size_t c, std::uint64_t seed) {
  RandomStream rng(seed, 0);
  Tensor2 t(r, c);
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

Tensor2 naive_matmul(const Tensor2& a, const Tensor2& b) {
  Tensor2 c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j)
      for (std::size_t k = 0; k < a.cols(); ++k) c(i, j) += a(i, k) * b(k, j);
  return c;
}

}  // namespace

TEST(Tensor, MatmulVariantsAgreeWithLoops) {
  const auto a = random_tensor(4, 3, 1), b = random_tensor(3, 5, 2), c = random_tensor(4, 5, 3);
  EXPECT_LT(max_abs_diff(matmul(a, b), naive_matmul(a, b)), 1e-12);
  EXPECT_LT(max_abs_diff(matmul_tn(a, c), naive_matmul(transpose(a), c)), 1e-12);
  EXPECT_LT(max_abs_diff(matmul_nt(a, transpose(b)), naive_matmul(a, b)), 1e-12);
  EXPECT_THROW(matmul(a, a), std::invalid_argument);
  EXPECT_EQ(matmul(Tensor2::identity(4), a), a);
  EXPECT_EQ(a.shape_string(), "4x3");
}

TEST(Adjacency, MatchesDenseSymmetricNormalization) {
  const auto g = sparsify_topk(pearson_graph(random_record(7, 10, 4)), 0.4);
  for (auto mode : {AdjacencyMode::Absolute, AdjacencyMode::Signed}) {
    Tensor2 w = Tensor2::identity(7);
    for (const auto& e : g.edges) w(e.i, e.j) = w(e.j, e.i) = e.weight;
    std::vector<double> deg(7, 0.0);
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t j = 0; j < 7; ++j) deg[i] += std::fabs(w(i, j));
    Tensor2 oracle(7, 7);
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t j = 0; j < 7; ++j) {
        const double v = mode == AdjacencyMode::Absolute ? std::fabs(w(i, j)) : w(i, j);
        oracle(i, j) = v / std::sqrt(deg[i] * deg[j]);
      }
    const auto adj = normalize_adjacency(g, mode);
    EXPECT_LT(max_abs_diff(adj.dense(), oracle), 1e-12);
    EXPECT_EQ(adj.nonzeros(), 7 + 2 * g.edges.size());
    const auto x = random_tensor(7, 3, 5);
    EXPECT_LT(max_abs_diff(adj.multiply(x), matmul(oracle, x)), 1e-12);
  }
}

TEST(Network, GcnForwardIsActOfAXW) {
  const auto adj = normalize_adjacency(pearson_graph(random_record(5, 8, 6)));
  const auto x = random_tensor(5, 3, 7), w = random_tensor(3, 2, 8);
  const auto lin = matmul(matmul(adj.dense(), x), w);
  EXPECT_LT(max_abs_diff(gcn_forward(adj, x, w, Activation::Identity), lin), 1e-12);
  auto relu = lin;
  for (auto& v : relu.data()) v = std::max(0.0, v);
  EXPECT_EQ(gcn_forward(adj, x, w, Activation::Relu), relu);
  EXPECT_THROW(gcn_forward(adj, w, w, Activation::Relu), std::invalid_argument);
}

TEST(Network, PoolSignatureIsMeanThenMax) {
  Tensor2 z(3, 2, {1.0, -2.0, 4.0, 0.0, 1.0, 5.0});
  std::vector<std::uint32_t> argmax;
  EXPECT_EQ(pool_signature(z, &argmax), (std::vector<double>{2.0, 1.0, 4.0, 5.0}));
  EXPECT_EQ(argmax, (std::vector<std::uint32_t>{1, 2}));
}

TEST(Network, EncoderIsDeterministicPerSeed) {
  const auto adj = normalize_adjacency(pearson_graph(random_record(6, 8, 6)));
  GcnEncoder a(GcnConfig{6, 4, 2, 3}), b(GcnConfig{6, 4, 2, 3}), c(GcnConfig{6, 4, 2, 4});
  EXPECT_EQ(a.forward(adj), b.forward(adj));
  EXPECT_NE(a.forward(adj), c.forward(adj));
  EXPECT_EQ(a.forward(adj).size(), 8u);
  EXPECT_EQ(a.parameters().size(), 3u);
  EXPECT_EQ(a.parameters()[0].name, "embedding");
  EXPECT_EQ(a.parameters()[2].name, "gcn.1.weight");
  ForwardTrace empty;
  std::vector<double> dsig(8, 1.0);
  EXPECT_THROW(a.backward(empty, dsig), std::logic_error);
}

TEST(Network, SoftmaxIsStableAndNormalized) {
  const std::vector<double> big{1000.0, 1001.0, 999.0};
  const auto p = softmax(big);
  EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-12);
  EXPECT_NEAR(p[1] / p[0], std::exp(1.0), 1e-9);
  Tensor2 logits(1, 2, {0.0, 0.0});
  const std::vector<std::uint32_t> label{1};
  EXPECT_NEAR(softmax_cross_entropy(logits, label).loss, std::log(2.0), 1e-12);
}

TEST(Adam, MatchesHandRolledRecurrence) {
  AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};
  Adam adam(cfg);
  Parameter p("w", Tensor2(1, 2, {0.5, -1.0}));
  double theta[2] = {0.5, -1.0}, m[2] = {0, 0}, v[2] = {0, 0};
  const double grads[3][2] = {{0.2, -3.0}, {-0.1, 1.0}, {0.4, 0.0}};
  std::vector<Parameter*> params{&p};
  for (int t = 1; t <= 3; ++t) {
    for (int i = 0; i < 2; ++i) {
      p.grad[i] = grads[t - 1][i];
      m[i] = 0.9 * m[i] + 0.1 * grads[t - 1][i];
      v[i] = 0.999 * v[i] + 0.001 * grads[t - 1][i] * grads[t - 1][i];
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      theta[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
    adam.step(params);
    EXPECT_NEAR(p.value[0], theta[0], 1e-15);
    EXPECT_NEAR(p.value[1], theta[1], 1e-15);
  }
  EXPECT_EQ(adam.steps(), 3u);
  // first step moves each coordinate by about lr
  Adam fresh(cfg);
  Parameter q("q", Tensor2(1, 1, {0.0}));
  q.grad[0] = 123.0;
  std::vector<Parameter*> qs{&q};
  fresh.step(qs);
  EXPECT_NEAR(q.value[0], -0.01, 1e-9);
}

TEST(Adam, RestoreContinuesIdentically) {
  Adam a(AdamConfig{0.05});
  Parameter p("w", Tensor2(2, 2, {1, 2, 3, 4}));
  std::vector<Parameter*> ps{&p};
  for (int t = 0; t < 3; ++t) {
    p.grad.fill(0.1 * (t + 1));
    a.step(ps);
  }
  Adam b(AdamConfig{0.05});
  b.restore(a.steps(), a.first_moments(), a.second_moments());
  Parameter q = p;
  std::vector<Parameter*> qs{&q};
  p.grad.fill(-0.3);
  q.grad.fill(-0.3);
  a.step(ps);
  b.step(qs);
  EXPECT_EQ(p.value, q.value);
}

TEST(Metrics, ClassificationMacroAverages) {
  const std::vector<std::uint32_t> truth{0, 0, 1, 1, 2}, pred{0, 1, 1, 1, 0};
  const auto m = classification_metrics(truth, pred);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.6);
  // class 0: p 1/2 r 1/2; class 1: p 2/3 r 1; class 2: p 0 r 0
  EXPECT_NEAR(m.macro_precision, (0.5 + 2.0 / 3) / 3, 1e-12);
  EXPECT_NEAR(m.macro_recall, 0.5, 1e-12);
  EXPECT_NEAR(m.macro_f1, (0.5 + 0.8 + 0.0) / 3, 1e-12);
  EXPECT_EQ(m.classes_averaged, 3u);
}

TEST(Metrics, RegressionAndCorrelations) {
  const std::vector<double> t{1, 2, 3, 4}, p{1.5, 2, 2.5, 4};
  const auto r = regression_metrics(t, p);
  EXPECT_NEAR(r.mse, (0.25 + 0 + 0.25 + 0) / 4, 1e-12);
  EXPECT_NEAR(*r.r2, 1 - 0.5 / 5.0, 1e-12);
  EXPECT_DOUBLE_EQ(r.count_accuracy, 0.75);  // only round(1.5) = 2 misses
  const std::vector<double> flat{2, 2, 2, 2};
  EXPECT_FALSE(regression_metrics(flat, p).r2.has_value());
  EXPECT_FALSE(pearson(flat, p).has_value());
  EXPECT_NEAR(*pearson(t, t), 1.0, 1e-12);
  const std::vector<double> ties{1, 2, 2, 3};
  EXPECT_EQ(average_ranks(ties), (std::vector<double>{1, 2.5, 2.5, 4}));
  const std::vector<double> mono{10, 20, 30, 1000};
  EXPECT_DOUBLE_EQ(*spearman(t, mono), 1.0);
}

TEST(Metrics, PairwiseAucMatchesQuadraticOracle) {
  RandomStream rng(13, 0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> pos(1 + rng.below(20)), neg(1 + rng.below(20));
    for (auto& v : pos) v = std::round(rng.normal() * 3) / 3;  // force ties
    for (auto& v : neg) v = std::round(rng.normal() * 3) / 3;
    double wins = 0;
    for (double a : pos)
      for (double b : neg) wins += a > b ? 1.0 : a == b ? 0.5 : 0.0;
    EXPECT_NEAR(pairwise_auc(pos, neg), wins / (pos.size() * neg.size()), 1e-12);
  }
  const std::vector<double> p{0.7, 0.3}, n{0.5, 0.1};
  EXPECT_DOUBLE_EQ(pairwise_auc(p, n), 0.75);
  const std::vector<double> same{0.2, 0.2};
  EXPECT_DOUBLE_EQ(pairwise_auc(same, same), 0.5);
  EXPECT_THROW(pairwise_auc({}, n), std::invalid_argument);
}

TEST(Checkpoint, RoundTripAndCorruption) {
  ScratchDir dir("ckpt");
  Checkpoint c;
  c.config_json = R"({"a":1})";
  c.tensors.push_back({"w", random_tensor(3, 2, 1)});
  c.tensors.push_back({"b", Tensor2(1, 2, {1.5, -2.0})});
  write_checkpoint(c, dir / "m.ntpm");
  const auto back = read_checkpoint(dir / "m.ntpm");
  EXPECT_EQ(back, c);
  EXPECT_TRUE(back.has("w"));
  EXPECT_EQ(back.tensor("b")(0, 1), -2.0);
  EXPECT_THROW(back.tensor("zzz"), DataError);
  auto bytes = encode_checkpoint(c);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "NTPM");
  bytes[20] ^= 0x40;
  EXPECT_THROW(decode_checkpoint(bytes), DataError);
  bytes.resize(10);
  EXPECT_THROW(decode_checkpoint(bytes), DataError);
}
