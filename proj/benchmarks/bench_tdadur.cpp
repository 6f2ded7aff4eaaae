#include <benchmark/benchmark.h>

#include <cmath>

#include "tdadur/maskgit.hpp"
#include "tdadur/metrics.hpp"
#include "tdadur/regression.hpp"
#include "tdadur/regulator.hpp"

using namespace tdadur;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = std::exp(rng.normal(2.0, 0.6));
  return v;
}

nn::ModelCheckpoint checkpoint(Family f, const std::string& preset) {
  ModelSpec spec;
  spec.family = f;
  spec.variant = Variant::tda;
  spec.phone_vocab = 40;
  spec.max_duration = 64;
  spec.net = nn::TransformerConfig::preset(preset);
  return create_checkpoint(spec, 1);
}

void BM_UniformNormalize(benchmark::State& state) {
  const auto v = random_values(static_cast<std::size_t>(state.range(0)), 1);
  const long long target = static_cast<long long>(state.range(0)) * 8;
  for (auto _ : state) benchmark::DoNotOptimize(uniform_normalize_integer(v, target));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_UniformNormalize)->Arg(8)->Arg(64)->Arg(512);

void BM_RegressionForward(benchmark::State& state) {
  const auto ck = checkpoint(Family::regression, "desk");
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  std::vector<int> phones(n), durations(n, 7);
  for (std::size_t i = 0; i < n; ++i) phones[i] = static_cast<int>(i % 40);
  std::vector<std::uint8_t> f(n, 1);
  f[0] = 0;
  const MaskSequence m(f);
  const PhonemeSequence ph(phones, 40);
  const DurationContext ctx = build_context(durations, m);
  const TargetTrack tgt = build_target_track(m, 8.0 * static_cast<double>(n));
  for (auto _ : state) benchmark::DoNotOptimize(regression_forward(ph, ctx, tgt, Variant::tda, ck));
}
BENCHMARK(BM_RegressionForward)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_MaskGitDecode(benchmark::State& state) {
  const auto ck = checkpoint(Family::maskgit, "desk");
  const std::size_t n = 32;
  std::vector<int> phones(n), durations(n, 7);
  for (std::size_t i = 0; i < n; ++i) phones[i] = static_cast<int>(i % 40);
  std::vector<std::uint8_t> f(n, 1);
  for (std::size_t i = 0; i < 8; ++i) f[i] = 0;
  const MaskSequence m(f);
  const PhonemeSequence ph(phones, 40);
  const DurationContext ctx = build_context(durations, m);
  MaskGitConfig cfg;
  cfg.steps = static_cast<int>(state.range(0));
  Rng rng(3);
  for (auto _ : state) benchmark::DoNotOptimize(maskgit_decode(ph, ctx, 200, Variant::tda, ck, cfg, rng));
}
BENCHMARK(BM_MaskGitDecode)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_Fdd(benchmark::State& state) {
  const auto a = random_values(static_cast<std::size_t>(state.range(0)), 4);
  const auto b = random_values(static_cast<std::size_t>(state.range(0)), 5);
  for (auto _ : state) benchmark::DoNotOptimize(fdd(a, b));
  state.SetItemsProcessed(state.iterations() * state.range(0) * 2);
}
BENCHMARK(BM_Fdd)->Arg(1000)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
