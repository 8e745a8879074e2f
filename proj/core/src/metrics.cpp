#include "rfl/metrics.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "rfl/error.hpp"

namespace rfl {

void SsimConfig::validate() const {
  if (window < 1 || window % 2 == 0) throw ConfigError("SSIM window must be odd");
  if (!(window_sigma > 0.0 && k1 > 0.0 && k2 > 0.0 && dynamic_range > 0.0)) {
    throw ConfigError("SSIM constants must be positive");
  }
}

namespace {

void check_same_dims(const RadioMap& a, const RadioMap& b) {
  if (a.h != b.h || a.w != b.w) {
    throw ShapeError("radio map dimensions differ");
  }
}

}  // namespace

double mse(const RadioMap& a, const RadioMap& b) {
  check_same_dims(a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.grid.size(); ++i) {
    const double d = a.grid[i] - b.grid[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.grid.size());
}

double rmse(const RadioMap& a, const RadioMap& b) { return std::sqrt(mse(a, b)); }

double psnr(const RadioMap& a, const RadioMap& b, double dynamic_range) {
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(dynamic_range * dynamic_range / m);
}

namespace {

// Separable Gaussian filtering restricted to fully interior windows.
// Output dims are (h - 2r) x (w - 2r).
std::vector<double> gaussian_filter_valid(const std::vector<double>& field,
                                          int h, int w,
                                          const std::vector<double>& kernel) {
  const int r = static_cast<int>(kernel.size()) / 2;
  const int wh = h - 2 * r;
  const int ww = w - 2 * r;
  std::vector<double> horiz(static_cast<std::size_t>(h) * ww);
  for (int x = 0; x < h; ++x) {
    for (int y = 0; y < ww; ++y) {
      double acc = 0.0;
      for (int t = 0; t < static_cast<int>(kernel.size()); ++t) {
        acc += kernel[t] * field[static_cast<std::size_t>(x) * w + y + t];
      }
      horiz[static_cast<std::size_t>(x) * ww + y] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(wh) * ww);
  for (int x = 0; x < wh; ++x) {
    for (int y = 0; y < ww; ++y) {
      double acc = 0.0;
      for (int t = 0; t < static_cast<int>(kernel.size()); ++t) {
        acc += kernel[t] * horiz[static_cast<std::size_t>(x + t) * ww + y];
      }
      out[static_cast<std::size_t>(x) * ww + y] = acc;
    }
  }
  return out;
}

}  // namespace

double ssim(const RadioMap& a, const RadioMap& b, const SsimConfig& cfg) {
  check_same_dims(a, b);
  cfg.validate();
  if (a.h < cfg.window || a.w < cfg.window) {
    throw ShapeError("map smaller than the SSIM window");
  }

  std::vector<double> kernel(cfg.window);
  const int r = cfg.window / 2;
  double ksum = 0.0;
  for (int t = 0; t < cfg.window; ++t) {
    const double d = t - r;
    kernel[t] = std::exp(-d * d / (2.0 * cfg.window_sigma * cfg.window_sigma));
    ksum += kernel[t];
  }
  for (auto& k : kernel) k /= ksum;

  const std::size_t n = a.grid.size();
  std::vector<double> aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = a.grid[i] * a.grid[i];
    bb[i] = b.grid[i] * b.grid[i];
    ab[i] = a.grid[i] * b.grid[i];
  }

  const auto mu_a = gaussian_filter_valid(a.grid, a.h, a.w, kernel);
  const auto mu_b = gaussian_filter_valid(b.grid, a.h, a.w, kernel);
  const auto m_aa = gaussian_filter_valid(aa, a.h, a.w, kernel);
  const auto m_bb = gaussian_filter_valid(bb, a.h, a.w, kernel);
  const auto m_ab = gaussian_filter_valid(ab, a.h, a.w, kernel);

  const double c1 = cfg.k1 * cfg.dynamic_range * cfg.k1 * cfg.dynamic_range;
  const double c2 = cfg.k2 * cfg.dynamic_range * cfg.k2 * cfg.dynamic_range;

  double acc = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double va = m_aa[i] - mu_a[i] * mu_a[i];
    const double vb = m_bb[i] - mu_b[i] * mu_b[i];
    const double cov = m_ab[i] - mu_a[i] * mu_b[i];
    const double num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2);
    const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2);
    acc += num / den;
  }
  return acc / static_cast<double>(mu_a.size());
}

RadioMap idw_predict(const BuildingMap& building, const ObservationSet& obs,
                     double power) {
  if (obs.k() < 1) throw ConfigError("IDW needs at least one observation");
  RadioMap out;
  out.h = building.h;
  out.w = building.w;
  out.grid.assign(building.cells(), 0.0);
  for (int x = 0; x < building.h; ++x) {
    for (int y = 0; y < building.w; ++y) {
      if (building.at(x, y) != 0) continue;
      double wsum = 0.0;
      double vsum = 0.0;
      bool exact = false;
      for (const auto& p : obs.points) {
        if (p.x == x && p.y == y) {
          out.at(x, y) = p.v;
          exact = true;
          break;
        }
        const double d = std::hypot(static_cast<double>(p.x - x),
                                    static_cast<double>(p.y - y));
        const double w = 1.0 / std::pow(d, power);
        wsum += w;
        vsum += w * p.v;
      }
      if (!exact) out.at(x, y) = vsum / wsum;
    }
  }
  return out;
}

}  // namespace rfl
