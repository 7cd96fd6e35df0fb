#include <benchmark/benchmark.h>

#include "neurotopo/align.hpp"
#include "neurotopo/corrgraph.hpp"
#include "neurotopo/network.hpp"
#include "neurotopo/philox.hpp"

using namespace ntopo;

namespace {

ActivationRecord make_record(std::uint32_t d, std::uint32_t n) {
  RandomStream rng(1, 0);
  ActivationRecord rec("bench", 0, d, n);
  for (auto& v : rec.values) v = static_cast<float>(rng.normal());
  return rec;
}

void BM_PearsonGraph(benchmark::State& state) {
  const auto d = static_cast<std::uint32_t>(state.range(0));
  const auto rec = make_record(d, 256);
  for (auto _ : state) benchmark::DoNotOptimize(pearson_graph(rec));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(d) * (d - 1) / 2);
}
BENCHMARK(BM_PearsonGraph)->Arg(64)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

void BM_SparsifyTopk(benchmark::State& state) {
  const auto dense = pearson_graph(make_record(static_cast<std::uint32_t>(state.range(0)), 64));
  for (auto _ : state) benchmark::DoNotOptimize(sparsify_topk(dense, 0.05));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(dense.edges.size()));
}
BENCHMARK(BM_SparsifyTopk)->Arg(64)->Arg(256)->Arg(1024)->Unit(benchmark::kMicrosecond);

void BM_GcnForwardBackward(benchmark::State& state) {
  const auto d = static_cast<std::uint32_t>(state.range(0));
  const auto adj = normalize_adjacency(sparsify_topk(pearson_graph(make_record(d, 64)), 0.05));
  GcnEncoder enc(GcnConfig{d, 64, 2, 3});
  const std::vector<double> dsig(enc.signature_dim(), 1.0);
  for (auto _ : state) {
    ForwardTrace trace;
    benchmark::DoNotOptimize(enc.forward(adj, &trace));
    enc.backward(trace, dsig);
  }
}
BENCHMARK(BM_GcnForwardBackward)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_InfoNce(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  RandomStream rng(2, 0);
  Tensor2 o(b, 128), g(b, 128);
  for (auto& v : o.data()) v = rng.normal();
  for (auto& v : g.data()) v = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(infonce(o, g, 0.07));
}
BENCHMARK(BM_InfoNce)->Arg(32)->Arg(256)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
