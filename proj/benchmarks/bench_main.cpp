#include <benchmark/benchmark.h>

#include "moesim/collectives.hpp"
#include "moesim/prefetch_cache.hpp"
#include "moesim/rng.hpp"
#include "moesim/sim_engine.hpp"
#include "moesim/workload.hpp"

namespace {

using namespace moesim;

std::array<LinkParams, kLinkClassCount> bench_links() {
  std::array<LinkParams, kLinkClassCount> links;
  links.fill(LinkParams{25ull * 1000 * 1000 * 1000, 2000});
  return links;
}

void BM_EngineRun(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    state.PauseTiming();
    SimEngine engine;
    SplitMix64 rng(1);
    std::vector<StreamId> streams;
    for (int i = 0; i < 8; ++i) streams.push_back(engine.stream("s" + std::to_string(i)));
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<TaskId> deps;
      if (i > 0 && rng.next() % 2 == 0) deps.push_back(rng.next() % i);
      engine.submit(streams[rng.next() % streams.size()], "t", rng.next() % 100, deps);
    }
    state.ResumeTiming();
    benchmark::DoNotOptimize(engine.run());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_EngineRun)->Arg(1000)->Arg(10000)->Arg(100000);

void BM_AlltoAllFlat(benchmark::State& state) {
  const auto gpn = static_cast<std::uint32_t>(state.range(0));
  const Topology topo(2, 2, gpn, bench_links());
  SplitMix64 rng(2);
  ShardedPayload payload = ShardedPayload::make(topo.total_gpus());
  for (Chunk& c : payload.chunks) {
    c.resize(rng.next() % 256);
    for (auto& b : c) b = static_cast<std::uint8_t>(rng.next());
  }
  for (auto _ : state) benchmark::DoNotOptimize(alltoall_flat(payload));
}
BENCHMARK(BM_AlltoAllFlat)->Arg(2)->Arg(4)->Arg(8);

void BM_AlltoAllHierarchical(benchmark::State& state) {
  const auto gpn = static_cast<std::uint32_t>(state.range(0));
  const Topology topo(2, 2, gpn, bench_links());
  SplitMix64 rng(2);
  ShardedPayload payload = ShardedPayload::make(topo.total_gpus());
  for (Chunk& c : payload.chunks) {
    c.resize(rng.next() % 256);
    for (auto& b : c) b = static_cast<std::uint8_t>(rng.next());
  }
  for (auto _ : state) benchmark::DoNotOptimize(alltoall_hierarchical(payload, topo));
}
BENCHMARK(BM_AlltoAllHierarchical)->Arg(2)->Arg(4)->Arg(8);

void BM_CacheAccess(benchmark::State& state) {
  const auto universe = static_cast<std::uint64_t>(state.range(0));
  CachePolicyParams params{static_cast<std::size_t>(universe / 2), 1.0, 0.5, 4};
  SparseCache cache(params);
  SplitMix64 rng(3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(cache.access(rng.next() % universe));
    if (rng.next() % 16 == 0) cache.end_step();
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_CacheAccess)->Arg(16)->Arg(256)->Arg(4096);

void BM_GenTrace(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        gen_trace(7, 4, 8, static_cast<std::uint32_t>(state.range(0)), 1024, 1.0));
  }
}
BENCHMARK(BM_GenTrace)->Arg(8)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
