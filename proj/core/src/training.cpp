#include "rfl/training.hpp"

#include <algorithm>
#include <cmath>

namespace rfl {

std::string to_string(Precision p) { return p == Precision::F32 ? "f32" : "f64"; }

Precision precision_from_string(const std::string& s) {
  if (s == "f32") return Precision::F32;
  if (s == "f64") return Precision::F64;
  throw ConfigError("unknown precision: " + s);
}

void TrainConfig::validate() const {
  if (!(lr_init > 0.0) || weight_decay < 0.0) {
    throw ConfigError("learning rate must be positive, weight decay non-negative");
  }
  if (batch_size < 1 || max_steps < 0 || obs_budget < 1) {
    throw ConfigError("batch size, step and observation budgets must be positive");
  }
}

double cosine_lr(double lr_init, int step, int total_steps) {
  if (total_steps < 1) throw ConfigError("total_steps must be >= 1");
  const double frac = std::min(1.0, static_cast<double>(step) / total_steps);
  return lr_init * 0.5 * (1.0 + std::cos(M_PI * frac));
}

double mse_loss(const RadioMap& truth, const RadioMap& pred) {
  return mse(truth, pred);
}

SplitResult split_dataset(const std::vector<int>& ids, const SplitSpec& spec) {
  if (spec.ratio_train < 1 || spec.ratio_val < 1) {
    throw ConfigError("split ratio parts must be positive");
  }
  SplitResult result;
  std::vector<int> remaining;
  for (int id : ids) {
    if (id > spec.test_threshold) {
      result.test.push_back(id);
    } else {
      remaining.push_back(id);
    }
  }
  Rng rng(spec.split_seed);
  rng.shuffle(remaining);
  const std::size_t n = remaining.size();
  // train gets ceil(a/(a+b) * n)
  const std::size_t n_train =
      (n * static_cast<std::size_t>(spec.ratio_train) +
       static_cast<std::size_t>(spec.ratio_train + spec.ratio_val) - 1) /
      static_cast<std::size_t>(spec.ratio_train + spec.ratio_val);
  result.train.assign(remaining.begin(), remaining.begin() + n_train);
  result.val.assign(remaining.begin() + n_train, remaining.end());
  if (result.train.empty() || result.val.empty() || result.test.empty()) {
    throw EmptySplit("a split partition is empty");
  }
  return result;
}

MetricReport evaluate_idw(const std::vector<Scene>& scenes, SamplerKind kind,
                          int obs_budget, int repeats, std::uint64_t seed,
                          const SsimConfig& ssim_cfg) {
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  if (scenes.empty()) throw ConfigError("no evaluation scenes");
  MetricReport report;
  for (int r = 0; r < repeats; ++r) {
    double rmse_acc = 0.0, ssim_acc = 0.0, psnr_acc = 0.0;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      Rng rng(Rng::derive_seed(seed, static_cast<std::uint64_t>(r) * 1000003 + i));
      const ObservationSet obs =
          sample_observations(scenes[i], kind, obs_budget, rng);
      const RadioMap pred = idw_predict(scenes[i].building, obs);
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

}  // namespace rfl
