#include <benchmark/benchmark.h>

#include "rfl/model.hpp"
#include "rfl/scene.hpp"

namespace {

rfl::ModelConfig desk_config() {
  rfl::ModelConfig cfg;
  cfg.map_size = 48;
  cfg.patch_size = 8;
  cfg.embed_dim = 48;
  cfg.n_heads = 4;
  cfg.validate();
  return cfg;
}

rfl::Scene desk_scene() {
  rfl::SynthConfig sc;
  sc.size = 48;
  sc.seed = 7;
  return rfl::synth_scene(sc);
}

void bench_forward_inference(benchmark::State& state) {
  const auto cfg = desk_config();
  const auto params = rfl::init_params<float>(cfg, 1);
  const auto scene = desk_scene();
  rfl::Rng rng(2);
  const auto obs =
      rfl::sample_random(scene, static_cast<int>(state.range(0)), rng);
  for (auto _ : state) {
    auto fwd = rfl::model_forward<float>(cfg, params, scene.building, obs);
    benchmark::DoNotOptimize(fwd.prediction.grid.data());
  }
}

void bench_forward_with_gradients(benchmark::State& state) {
  const auto cfg = desk_config();
  const auto params = rfl::init_params<float>(cfg, 1);
  const auto scene = desk_scene();
  rfl::Rng rng(2);
  const auto obs = rfl::sample_random(scene, 9, rng);
  for (auto _ : state) {
    rfl::ForwardOptions opts;
    opts.target = &scene.radio;
    opts.with_grad = true;
    auto fwd = rfl::model_forward<float>(cfg, params, scene.building, obs, opts);
    fwd.tape.backward(fwd.loss);
    benchmark::DoNotOptimize(fwd.tape.grad(fwd.param_ids[0]).data.data());
  }
}

}  // namespace

BENCHMARK(bench_forward_inference)->Arg(9)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(bench_forward_with_gradients)->Unit(benchmark::kMillisecond);
