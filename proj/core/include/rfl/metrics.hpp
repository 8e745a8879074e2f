#pragma once

#include "rfl/sampling.hpp"
#include "rfl/scene.hpp"

namespace rfl {

struct SsimConfig {
  int window = 11;
  double window_sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;

  void validate() const;
};

double mse(const RadioMap& a, const RadioMap& b);
double rmse(const RadioMap& a, const RadioMap& b);

// 10*log10(L^2 / mse); +infinity for identical inputs.
double psnr(const RadioMap& a, const RadioMap& b, double dynamic_range = 1.0);

// Mean of Gaussian-windowed local SSIM over all fully interior windows.
double ssim(const RadioMap& a, const RadioMap& b,
            const SsimConfig& cfg = SsimConfig{});

// Inverse-distance-weighting baseline: free pixels get the weighted mean of
// observed values with weights 1/d^p; an exact positional match copies the
// observed value; building pixels are 0.
RadioMap idw_predict(const BuildingMap& building, const ObservationSet& obs,
                     double power = 2.0);

}  // namespace rfl
