#include <benchmark/benchmark.h>

#include "rfl/metrics.hpp"
#include "rfl/rng.hpp"

namespace {

rfl::RadioMap random_map(int n, std::uint64_t seed) {
  rfl::RadioMap m;
  m.h = m.w = n;
  m.grid.resize(static_cast<std::size_t>(n) * n);
  rfl::Rng rng(seed);
  for (auto& v : m.grid) v = rng.uniform();
  return m;
}

void bench_ssim(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto a = random_map(n, 1);
  const auto b = random_map(n, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(rfl::ssim(a, b));
  }
}

void bench_idw(benchmark::State& state) {
  rfl::SynthConfig sc;
  sc.size = static_cast<int>(state.range(0));
  sc.seed = 5;
  const rfl::Scene scene = rfl::synth_scene(sc);
  rfl::Rng rng(6);
  const auto obs = rfl::sample_random(scene, 100, rng);
  for (auto _ : state) {
    auto pred = rfl::idw_predict(scene.building, obs);
    benchmark::DoNotOptimize(pred.grid.data());
  }
}

}  // namespace

BENCHMARK(bench_ssim)->Arg(48)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(bench_idw)->Arg(48)->Arg(256)->Unit(benchmark::kMillisecond);
