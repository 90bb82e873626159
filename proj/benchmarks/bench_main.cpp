#include <benchmark/benchmark.h>

#include "dcc/cutoff.hpp"
#include "dcc/random.hpp"

namespace {

using namespace dcc;

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({r, c});
  for (auto& v : t.data()) v = static_cast<float>(rng.normal());
  return t;
}

const Transformer& default_model() {
  static const Transformer m{ModelConfig{}};
  return m;
}

EnsembleModel ensemble_for(const Transformer& m) {
  const std::vector<HeadTap> heads{{1, 0}, {2, 3}, {3, 5}};
  const auto tasks = gen_single_hop(20, LengthRange{64, 128}, 3);
  const auto set = collect_activations(m, tasks, ChunkingSpec::percent(0.10), heads);
  return build_ensemble(feature_matrix(set, heads), labels_of(set), heads, EnsembleOptions{});
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, 128, 1);
  const auto b = random_matrix(128, 128, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(128)->Arg(512);

// Prefill of n tokens in chunks of `chunk` with cache reuse.
void BM_ChunkedPrefill(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto chunk = static_cast<std::size_t>(state.range(1));
  const auto& m = default_model();
  std::vector<int> tokens(n);
  for (std::size_t i = 0; i < n; ++i) tokens[i] = 8 + static_cast<int>(i % 256);
  for (auto _ : state) {
    auto cache = m.make_cache();
    for (std::size_t pos = 0; pos < n; pos += chunk) {
      const auto len = std::min(chunk, n - pos);
      m.forward(std::span<const int>(tokens).subspan(pos, len), cache, {}, LogitsMode::none);
    }
    benchmark::DoNotOptimize(cache.cached_len);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_ChunkedPrefill)->Args({128, 128})->Args({128, 13})->Args({512, 51});

void BM_CutoffEpisode(benchmark::State& state) {
  const auto& m = default_model();
  const auto ens = ensemble_for(m);
  const auto task = gen_single_hop(1, 128, 9).front();
  CutoffConfig cfg;
  cfg.tau = static_cast<double>(state.range(0)) / 100.0;
  for (auto _ : state) benchmark::DoNotOptimize(run_cutoff(m, ens, task, cfg));
}
BENCHMARK(BM_CutoffEpisode)->Arg(50)->Arg(100);

void BM_FullEpisode(benchmark::State& state) {
  const auto task = gen_single_hop(1, 128, 9).front();
  for (auto _ : state) benchmark::DoNotOptimize(run_full(default_model(), task));
}
BENCHMARK(BM_FullEpisode);

void BM_EnsembleConfidence(benchmark::State& state) {
  const auto ens = ensemble_for(default_model());
  Rng rng(4);
  std::vector<float> x(ens.feature_width());
  for (auto& v : x) v = static_cast<float>(rng.normal());
  for (auto _ : state) benchmark::DoNotOptimize(ens.confidence(x));
}
BENCHMARK(BM_EnsembleConfidence);

void BM_Bm25(benchmark::State& state) {
  const auto task = gen_single_hop(1, 512, 5).front();
  const auto plan = plan_chunks(task.context.size(), ChunkingSpec::percent(0.01));
  std::vector<std::vector<int>> chunks;
  for (std::size_t i = 1; i <= plan.num_chunks(); ++i) {
    const auto r = delta(plan, i);
    chunks.emplace_back(task.context.begin() + static_cast<long>(r.begin),
                        task.context.begin() + static_cast<long>(r.end));
  }
  for (auto _ : state) benchmark::DoNotOptimize(bm25_scores(chunks, task.query));
}
BENCHMARK(BM_Bm25);

}  // namespace

BENCHMARK_MAIN();
