#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "rfl/error.hpp"
#include "rfl/metrics.hpp"
#include "rfl/model.hpp"
#include "rfl/rng.hpp"
#include "rfl/sampling.hpp"

namespace rfl {

enum class Precision { F32, F64 };

std::string to_string(Precision p);
Precision precision_from_string(const std::string& s);

struct TrainConfig {
  double lr_init = 1e-3;
  double weight_decay = 1e-4;
  int total_steps = 0;  // cosine horizon; 0 means max_steps
  int batch_size = 8;
  int max_steps = 2000;
  int obs_budget = 9;
  SamplerKind sampler_kind = SamplerKind::Random;
  std::uint64_t seed = 0;
  Precision precision = Precision::F32;
  bool mask_buildings = false;
  bool reverse_building = false;  // encoder sees 1 - grid (robustness probe)

  void validate() const;
  int cosine_horizon() const { return total_steps > 0 ? total_steps : max_steps; }
};

struct SplitSpec {
  int test_threshold = 550;   // ids strictly greater go to the test set
  int ratio_train = 12;
  int ratio_val = 1;
  std::uint64_t split_seed = 0;
};

struct SplitResult {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};

SplitResult split_dataset(const std::vector<int>& ids, const SplitSpec& spec);

double mse_loss(const RadioMap& truth, const RadioMap& pred);

// lr_init * (1 + cos(pi * step / total)) / 2, annealed to zero.
double cosine_lr(double lr_init, int step, int total_steps);

struct MetricReport {
  double rmse_mean = 0.0;
  double ssim_mean = 0.0;
  double psnr_mean = 0.0;
  std::vector<double> rmse_runs;
  std::vector<double> ssim_runs;
  std::vector<double> psnr_runs;
  // max - min of per-kind mean RMSE; filled by multi-sampler evaluations.
  double fluctuation = std::numeric_limits<double>::quiet_NaN();
};

template <typename T>
struct TrainResult {
  ParamStore<T> params;
  std::vector<double> loss_curve;
};

// AdamW with decoupled weight decay and a cosine-annealed learning rate.
// Every step resamples a fresh observation set per batch scene. Fully
// deterministic for a fixed config and seed.
template <typename T>
TrainResult<T> train(const ModelConfig& model_cfg, const TrainConfig& cfg,
                     const std::vector<Scene>& scenes,
                     const ParamStore<T>* initial = nullptr,
                     double lr_scale = 1.0);

// Continues optimization at lr_init/10 on the target scenes.
template <typename T>
TrainResult<T> fine_tune(const ModelConfig& model_cfg, const TrainConfig& cfg,
                         const std::vector<Scene>& target_scenes,
                         const ParamStore<T>& pretrained) {
  return train(model_cfg, cfg, target_scenes, &pretrained, 0.1);
}

template <typename T>
RadioMap predict(const ModelConfig& model_cfg, const ParamStore<T>& params,
                 const Scene& scene, const ObservationSet& obs,
                 bool reverse_building = false) {
  ForwardOptions opts;
  opts.reverse_building = reverse_building;
  auto fwd = model_forward<T>(model_cfg, params, scene.building, obs, opts);
  return fwd.prediction;
}

// Five-run (by default) averaged evaluation with fresh seeded sampling per
// repeat and scene.
template <typename T>
MetricReport evaluate(const ModelConfig& model_cfg, const ParamStore<T>& params,
                      const std::vector<Scene>& scenes, SamplerKind kind,
                      int obs_budget, int repeats, std::uint64_t seed,
                      const SsimConfig& ssim_cfg = SsimConfig{},
                      bool reverse_building = false);

// Evaluates all three sampler kinds and reports the random-sampler metrics
// with fluctuation = max - min of the per-kind mean RMSE.
template <typename T>
MetricReport evaluate_samplers(const ModelConfig& model_cfg,
                               const ParamStore<T>& params,
                               const std::vector<Scene>& scenes, int obs_budget,
                               int repeats, std::uint64_t seed,
                               const SsimConfig& ssim_cfg = SsimConfig{});

// Same protocol applied to the IDW baseline.
MetricReport evaluate_idw(const std::vector<Scene>& scenes, SamplerKind kind,
                          int obs_budget, int repeats, std::uint64_t seed,
                          const SsimConfig& ssim_cfg = SsimConfig{});

// ---------------------------------------------------------------------------
// implementation
// ---------------------------------------------------------------------------

template <typename T>
TrainResult<T> train(const ModelConfig& model_cfg, const TrainConfig& cfg,
                     const std::vector<Scene>& scenes,
                     const ParamStore<T>* initial, double lr_scale) {
  cfg.validate();
  if (scenes.empty()) throw ConfigError("no training scenes");

  TrainResult<T> result;
  result.params = initial ? *initial
                          : init_params<T>(model_cfg,
                                           Rng::derive_seed(cfg.seed, 0x1717));
  auto& params = result.params;

  std::vector<Tensor<T>> m1, m2, grad_acc;
  m1.reserve(params.tensors.size());
  for (const auto& t : params.tensors) {
    m1.emplace_back(t.shape);
    m2.emplace_back(t.shape);
    grad_acc.emplace_back(t.shape);
  }

  Rng batch_rng(Rng::derive_seed(cfg.seed, 0xbaccULL));
  const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

  for (int step = 0; step < cfg.max_steps; ++step) {
    for (auto& t : grad_acc) std::fill(t.data.begin(), t.data.end(), T(0));

    const int batch = std::min<int>(cfg.batch_size, scenes.size());
    double loss_sum = 0.0;
    for (int b = 0; b < batch; ++b) {
      const std::size_t si =
          scenes.size() <= static_cast<std::size_t>(cfg.batch_size)
              ? static_cast<std::size_t>(b)
              : batch_rng.uniform_index(scenes.size());
      const Scene& scene = scenes[si];
      Rng obs_rng(Rng::derive_seed(cfg.seed,
                                   0x0b5ULL * 1000003 + step * 131 + b));
      const ObservationSet obs =
          sample_observations(scene, cfg.sampler_kind, cfg.obs_budget, obs_rng);

      ForwardOptions opts;
      opts.target = &scene.radio;
      opts.mask_buildings = cfg.mask_buildings;
      opts.reverse_building = cfg.reverse_building;
      opts.with_grad = true;
      auto fwd = model_forward<T>(model_cfg, params, scene.building, obs, opts);
      const double loss = static_cast<double>(fwd.tape.val(fwd.loss).data[0]);
      if (!std::isfinite(loss)) {
        throw DivergenceError("non-finite loss at step " + std::to_string(step));
      }
      loss_sum += loss;
      fwd.tape.backward(fwd.loss);
      for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        const auto id = fwd.param_ids[i];
        if (id < 0) continue;
        const auto& g = fwd.tape.grad(id);
        for (std::size_t j = 0; j < g.size(); ++j) grad_acc[i].data[j] += g.data[j];
      }
    }
    result.loss_curve.push_back(loss_sum / batch);

    const double lr =
        lr_scale * cosine_lr(cfg.lr_init, step, cfg.cosine_horizon());
    const double bc1 = 1.0 - std::pow(beta1, step + 1);
    const double bc2 = 1.0 - std::pow(beta2, step + 1);
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
      auto& p = params.tensors[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double g = static_cast<double>(grad_acc[i].data[j]) / batch;
        const double mm = beta1 * static_cast<double>(m1[i].data[j]) + (1.0 - beta1) * g;
        const double vv =
            beta2 * static_cast<double>(m2[i].data[j]) + (1.0 - beta2) * g * g;
        m1[i].data[j] = static_cast<T>(mm);
        m2[i].data[j] = static_cast<T>(vv);
        const double update = (mm / bc1) / (std::sqrt(vv / bc2) + adam_eps) +
                              cfg.weight_decay * static_cast<double>(p.data[j]);
        p.data[j] = static_cast<T>(static_cast<double>(p.data[j]) - lr * update);
      }
    }
  }
  return result;
}

template <typename T>
MetricReport evaluate(const ModelConfig& model_cfg, const ParamStore<T>& params,
                      const std::vector<Scene>& scenes, SamplerKind kind,
                      int obs_budget, int repeats, std::uint64_t seed,
                      const SsimConfig& ssim_cfg, bool reverse_building) {
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  if (scenes.empty()) throw ConfigError("no evaluation scenes");
  MetricReport report;
  for (int r = 0; r < repeats; ++r) {
    double rmse_acc = 0.0, ssim_acc = 0.0, psnr_acc = 0.0;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      Rng rng(Rng::derive_seed(seed, static_cast<std::uint64_t>(r) * 1000003 + i));
      const ObservationSet obs =
          sample_observations(scenes[i], kind, obs_budget, rng);
      const RadioMap pred =
          predict(model_cfg, params, scenes[i], obs, reverse_building);
      rmse_acc += rmse(scenes[i].radio, pred);
      ssim_acc += ssim(scenes[i].radio, pred, ssim_cfg);
      psnr_acc += psnr(scenes[i].radio, pred, ssim_cfg.dynamic_range);
    }
    report.rmse_runs.push_back(rmse_acc / scenes.size());
    report.ssim_runs.push_back(ssim_acc / scenes.size());
    report.psnr_runs.push_back(psnr_acc / scenes.size());
  }
  for (int r = 0; r < repeats; ++r) {
    report.rmse_mean += report.rmse_runs[r] / repeats;
    report.ssim_mean += report.ssim_runs[r] / repeats;
    report.psnr_mean += report.psnr_runs[r] / repeats;
  }
  return report;
}

template <typename T>
MetricReport evaluate_samplers(const ModelConfig& model_cfg,
                               const ParamStore<T>& params,
                               const std::vector<Scene>& scenes, int obs_budget,
                               int repeats, std::uint64_t seed,
                               const SsimConfig& ssim_cfg) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  MetricReport random_report;
  for (const SamplerKind kind :
       {SamplerKind::Random, SamplerKind::Constrained, SamplerKind::Uniform}) {
    MetricReport r = evaluate(model_cfg, params, scenes, kind, obs_budget,
                              repeats, seed, ssim_cfg);
    lo = std::min(lo, r.rmse_mean);
    hi = std::max(hi, r.rmse_mean);
    if (kind == SamplerKind::Random) random_report = std::move(r);
  }
  random_report.fluctuation = hi - lo;
  return random_report;
}

}  // namespace rfl
