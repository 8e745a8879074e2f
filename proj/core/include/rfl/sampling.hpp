#pragma once

#include <string>
#include <vector>

#include "rfl/rng.hpp"
#include "rfl/scene.hpp"

namespace rfl {

struct ObservationPoint {
  int x = 0;  // pixel row
  int y = 0;  // pixel column
  double v = 0.0;
};

struct ObservationSet {
  std::vector<ObservationPoint> points;

  int k() const { return static_cast<int>(points.size()); }
};

// Strict bounds of the constrained region: row_lo < x < row_hi,
// col_lo < y < col_hi.
struct ConstraintBox {
  int row_lo, row_hi, col_lo, col_hi;

  void validate(int h, int w) const;
};

enum class SamplerKind { Random, Constrained, Uniform };

std::string to_string(SamplerKind kind);
SamplerKind sampler_kind_from_string(const std::string& s);

// K distinct free pixels, uniform without replacement.
ObservationSet sample_random(const Scene& scene, int k, Rng& rng);

// Like sample_random restricted strictly inside the box.
ObservationSet sample_constrained(const Scene& scene, int k,
                                  const ConstraintBox& box, Rng& rng);

struct UniformSampleResult {
  ObservationSet set;
  int skipped_cells = 0;  // k*k cells with no eligible free pixel
};

// One free pixel per k x k grid cell, strictly inside each cell's real-valued
// bounds. Cells without an eligible pixel are skipped and counted.
UniformSampleResult sample_uniform(const Scene& scene, int grid_order,
                                   Rng& rng);

// Dispatch helper used by training/evaluation: Constrained uses the centered
// half-size box, Uniform uses ceil(sqrt(K)) as grid order and trims/draws to
// exactly K where possible.
ObservationSet sample_observations(const Scene& scene, SamplerKind kind, int k,
                                   Rng& rng);

// CSV rows `x,y,v` preceded by a `#` comment carrying sampler metadata.
void write_observations_csv(const std::string& path, const ObservationSet& set,
                            const std::string& meta_comment);
ObservationSet read_observations_csv(const std::string& path);

}  // namespace rfl
