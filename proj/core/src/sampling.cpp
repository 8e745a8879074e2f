#include "rfl/sampling.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "rfl/error.hpp"

namespace rfl {

void ConstraintBox::validate(int h, int w) const {
  if (!(0 <= row_lo && row_lo < row_hi && row_hi <= h) ||
      !(0 <= col_lo && col_lo < col_hi && col_hi <= w)) {
    throw ConfigError("invalid constraint box");
  }
}

std::string to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::Random: return "random";
    case SamplerKind::Constrained: return "constrained";
    case SamplerKind::Uniform: return "uniform";
  }
  return "unknown";
}

SamplerKind sampler_kind_from_string(const std::string& s) {
  if (s == "random") return SamplerKind::Random;
  if (s == "constrained") return SamplerKind::Constrained;
  if (s == "uniform") return SamplerKind::Uniform;
  throw ConfigError("unknown sampler kind: " + s);
}

namespace {

ObservationSet draw_without_replacement(const Scene& scene,
                                        std::vector<int>& eligible, int k,
                                        Rng& rng) {
  if (static_cast<int>(eligible.size()) < k) {
    throw InsufficientFreePixels("fewer than K eligible free pixels");
  }
  ObservationSet out;
  out.points.reserve(k);
  const int w = scene.building.w;
  for (int i = 0; i < k; ++i) {
    const std::size_t j = i + rng.uniform_index(eligible.size() - i);
    std::swap(eligible[i], eligible[j]);
    const int x = eligible[i] / w;
    const int y = eligible[i] % w;
    out.points.push_back({x, y, scene.radio.at(x, y)});
  }
  return out;
}

}  // namespace

ObservationSet sample_random(const Scene& scene, int k, Rng& rng) {
  if (k < 1) throw ConfigError("K must be >= 1");
  std::vector<int> eligible;
  for (int x = 0; x < scene.building.h; ++x) {
    for (int y = 0; y < scene.building.w; ++y) {
      if (scene.building.at(x, y) == 0) {
        eligible.push_back(x * scene.building.w + y);
      }
    }
  }
  return draw_without_replacement(scene, eligible, k, rng);
}

ObservationSet sample_constrained(const Scene& scene, int k,
                                  const ConstraintBox& box, Rng& rng) {
  if (k < 1) throw ConfigError("K must be >= 1");
  box.validate(scene.building.h, scene.building.w);
  std::vector<int> eligible;
  for (int x = box.row_lo + 1; x < box.row_hi; ++x) {
    for (int y = box.col_lo + 1; y < box.col_hi; ++y) {
      if (scene.building.at(x, y) == 0) {
        eligible.push_back(x * scene.building.w + y);
      }
    }
  }
  return draw_without_replacement(scene, eligible, k, rng);
}

UniformSampleResult sample_uniform(const Scene& scene, int grid_order,
                                   Rng& rng) {
  if (grid_order < 1) throw ConfigError("grid order must be >= 1");
  const int h = scene.building.h;
  const int w = scene.building.w;
  const double hs = static_cast<double>(h) / grid_order;
  const double ws = static_cast<double>(w) / grid_order;

  UniformSampleResult result;
  for (int cell = 0; cell < grid_order * grid_order; ++cell) {
    const int ci = cell / grid_order;
    const int cj = cell % grid_order;
    // Strict real-valued cell bounds; boundary pixels stay unreachable.
    std::vector<int> eligible;
    for (int x = 0; x < h; ++x) {
      if (!(ci * hs < x && x < (ci + 1) * hs)) continue;
      for (int y = 0; y < w; ++y) {
        if (!(cj * ws < y && y < (cj + 1) * ws)) continue;
        if (scene.building.at(x, y) == 0) eligible.push_back(x * w + y);
      }
    }
    if (eligible.empty()) {
      ++result.skipped_cells;
      continue;
    }
    const int cell_pick = eligible[rng.uniform_index(eligible.size())];
    const int x = cell_pick / w;
    const int y = cell_pick % w;
    result.set.points.push_back({x, y, scene.radio.at(x, y)});
  }
  return result;
}

ObservationSet sample_observations(const Scene& scene, SamplerKind kind, int k,
                                   Rng& rng) {
  switch (kind) {
    case SamplerKind::Random:
      return sample_random(scene, k, rng);
    case SamplerKind::Constrained: {
      const int h = scene.building.h;
      const int w = scene.building.w;
      const ConstraintBox box{h / 4 - 1, h - h / 4, w / 4 - 1, w - w / 4};
      return sample_constrained(scene, k, box, rng);
    }
    case SamplerKind::Uniform: {
      const int order =
          std::max(1, static_cast<int>(std::lround(std::sqrt(k))));
      return sample_uniform(scene, order, rng).set;
    }
  }
  throw ConfigError("unknown sampler kind");
}

void write_observations_csv(const std::string& path, const ObservationSet& set,
                            const std::string& meta_comment) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "# " << meta_comment << "\n";
  out << "x,y,v\n";
  out.precision(17);
  for (const auto& p : set.points) {
    out << p.x << "," << p.y << "," << p.v << "\n";
  }
}

ObservationSet read_observations_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open " + path);
  ObservationSet set;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("x,", 0) == 0) continue;
    std::istringstream ss(line);
    ObservationPoint p;
    char comma;
    if (ss >> p.x >> comma >> p.y >> comma >> p.v) set.points.push_back(p);
  }
  return set;
}

}  // namespace rfl
