#include <benchmark/benchmark.h>

#include "rfl/sampling.hpp"
#include "rfl/scene.hpp"

namespace {

rfl::Scene scene_256() {
  rfl::SynthConfig sc;
  sc.size = 256;
  sc.building_count = 24;
  sc.seed = 11;
  return rfl::synth_scene(sc);
}

void bench_sample_random(benchmark::State& state) {
  const auto scene = scene_256();
  rfl::Rng rng(3);
  for (auto _ : state) {
    auto set = rfl::sample_random(scene, static_cast<int>(state.range(0)), rng);
    benchmark::DoNotOptimize(set.points.data());
  }
}

void bench_sample_uniform(benchmark::State& state) {
  const auto scene = scene_256();
  rfl::Rng rng(3);
  for (auto _ : state) {
    auto res = rfl::sample_uniform(scene, static_cast<int>(state.range(0)), rng);
    benchmark::DoNotOptimize(res.set.points.data());
  }
}

}  // namespace

BENCHMARK(bench_sample_random)->Arg(9)->Arg(100)->Arg(1000);
BENCHMARK(bench_sample_uniform)->Arg(3)->Arg(10)->Arg(31);
