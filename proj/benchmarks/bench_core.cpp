#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "bimark/detect.hpp"
#include "bimark/embed.hpp"
#include "bimark/prf.hpp"
#include "bimark/reweight.hpp"
#include "bimark/toylm.hpp"

using namespace bimark;

namespace {

ProbabilityDistribution random_dist(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> w(n);
  for (auto& v : w) v = expo(rng);
  return ProbabilityDistribution::from_weights(std::move(w));
}

void BM_MultilayerReweight(benchmark::State& state) {
  const auto vocab = static_cast<std::size_t>(state.range(0));
  const auto d = static_cast<std::size_t>(state.range(1));
  const auto key = WatermarkKey::from_seed(1);
  const auto stack = derive_partitions(key, vocab, d);
  const auto dist = random_dist(vocab, 2);
  std::vector<CoinFlip> flips(d);
  for (std::size_t i = 0; i < d; ++i) flips[i] = to_flip(i & 1);
  for (auto _ : state) benchmark::DoNotOptimize(multilayer_reweight(dist, stack, flips, 1.0));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_MultilayerReweight)->Args({1024, 1})->Args({1024, 10})->Args({32000, 10})->Args({128000, 10});

void BM_DeriveSeed(benchmark::State& state) {
  const auto key = WatermarkKey::from_seed(1);
  const ContextWindow window({17, 4242});
  const auto payload = window.payload();
  for (auto _ : state) benchmark::DoNotOptimize(derive_seed(key, SeedDomain::mask, payload));
}
BENCHMARK(BM_DeriveSeed);

void BM_PositionAndMask(benchmark::State& state) {
  const auto key = WatermarkKey::from_seed(1);
  const ContextWindow window({17, 4242});
  for (auto _ : state) {
    benchmark::DoNotOptimize(prf_position(key, window, 32));
    benchmark::DoNotOptimize(prf_mask(key, window, 10));
  }
}
BENCHMARK(BM_PositionAndMask);

void BM_DerivePartitions(benchmark::State& state) {
  const auto key = WatermarkKey::from_seed(1);
  const auto vocab = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(derive_partitions(key, vocab, 10));
}
BENCHMARK(BM_DerivePartitions)->Arg(1024)->Arg(32000);

void BM_GatherVotes(benchmark::State& state) {
  const auto T = static_cast<std::size_t>(state.range(0));
  EmbedParams params;
  params.vocab_size = 1024;
  params.ell = 32;
  const auto key = WatermarkKey::from_seed(3);
  const auto stack = derive_partitions(key, params.vocab_size, params.d);
  std::mt19937_64 rng(4);
  std::vector<TokenId> tokens(T);
  for (auto& t : tokens) t = static_cast<TokenId>(rng() % params.vocab_size);
  for (auto _ : state) benchmark::DoNotOptimize(gather_votes(tokens, key, params, stack));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(T));
}
BENCHMARK(BM_GatherVotes)->Arg(200)->Arg(2000);

void BM_GenerateSynthetic(benchmark::State& state) {
  const SyntheticLM lm(1024, 1, 1.0, 5);
  EmbedParams params;
  params.vocab_size = 1024;
  params.ell = 8;
  params.max_new_tokens = 200;
  const auto key = WatermarkKey::from_seed(5);
  const auto stack = derive_partitions(key, 1024, params.d);
  const auto msg = Message::from_string("10110010");
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(generate(lm, {}, msg, key, params, stack, ++seed));
  state.SetItemsProcessed(state.iterations() * 200);
}
BENCHMARK(BM_GenerateSynthetic);

}  // namespace

BENCHMARK_MAIN();
