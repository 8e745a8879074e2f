#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "rfl/error.hpp"
#include "rfl/scene.hpp"

using namespace rfl;

TEST_CASE("gray codec endpoints and midpoint") {
  const PathlossCodec codec{-47.0, -147.0};
  CHECK(to_gray(-147.0, codec) == doctest::Approx(0.0));
  CHECK(to_gray(-47.0, codec) == doctest::Approx(1.0));
  CHECK(to_gray(-97.0, codec) == doctest::Approx(0.5));
  // Below truncation clamps to zero.
  CHECK(to_gray(-200.0, codec) == doctest::Approx(0.0));
  CHECK_THROWS_AS(to_gray(-46.0, codec), PathlossAboveMax);
}

TEST_CASE("gray codec inverse and round trip") {
  const PathlossCodec codec{-47.0, -147.0};
  CHECK(from_gray(0.0, codec) == doctest::Approx(-147.0));
  CHECK(from_gray(1.0, codec) == doctest::Approx(-47.0));
  CHECK_THROWS_AS(from_gray(-0.01, codec), DomainError);
  CHECK_THROWS_AS(from_gray(1.01, codec), DomainError);
  for (int i = 0; i <= 100; ++i) {
    const double pl = -147.0 + i;
    CHECK(from_gray(to_gray(pl, codec), codec) == doctest::Approx(pl).epsilon(1e-9));
  }
  CHECK_THROWS_AS((PathlossCodec{-147.0, -147.0}.validate()), ConfigError);
}

TEST_CASE("synthetic scenes are deterministic and physical") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SynthConfig cfg;
    cfg.seed = seed;
    const Scene a = synth_scene(cfg);
    const Scene b = synth_scene(cfg);
    REQUIRE(a.building.grid == b.building.grid);
    REQUIRE(a.radio.grid == b.radio.grid);
    REQUIRE(a.tx_x == b.tx_x);
    REQUIRE(a.tx_y == b.tx_y);

    CHECK(a.radio.at(a.tx_x, a.tx_y) == doctest::Approx(1.0));
    CHECK(a.building.at(a.tx_x, a.tx_y) == 0);
    for (std::size_t i = 0; i < a.radio.grid.size(); ++i) {
      CHECK(a.radio.grid[i] >= 0.0);
      CHECK(a.radio.grid[i] <= 1.0);
      if (a.building.grid[i]) CHECK(a.radio.grid[i] == 0.0);
    }
  }
}

TEST_CASE("values non-increasing along unobstructed rays") {
  SynthConfig cfg;
  cfg.seed = 11;
  const Scene s = synth_scene(cfg);
  // March the four axis rays from the transmitter until the first building.
  const int dirs[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  for (const auto& d : dirs) {
    double prev = s.radio.at(s.tx_x, s.tx_y);
    for (int step = 1;; ++step) {
      const int x = s.tx_x + d[0] * step, y = s.tx_y + d[1] * step;
      if (x < 0 || x >= s.building.h || y < 0 || y >= s.building.w) break;
      if (s.building.at(x, y)) break;
      CHECK(s.radio.at(x, y) <= prev + 1e-12);
      prev = s.radio.at(x, y);
    }
  }
}

namespace {

// Exact segment/rectangle-interior intersection count: the number of placed
// rectangles whose open interior (in cell-center coordinates) the continuous
// segment between cell centers enters. Rectangles never touch, so each
// entered rectangle contributes exactly one free->building transition.
int oracle_crossings(const std::vector<Rect>& rects, int x0, int y0, int x1,
                     int y1) {
  int crossings = 0;
  const double dx = x1 - x0, dy = y1 - y0;
  for (const auto& r : rects) {
    const double lox = r.x0 - 0.5, hix = r.x1 + 0.5;
    const double loy = r.y0 - 0.5, hiy = r.y1 + 0.5;
    double t_lo = 0.0, t_hi = 1.0;
    bool empty = false;
    auto clip = [&](double p, double d, double lo, double hi) {
      if (d == 0.0) {
        if (p <= lo || p >= hi) empty = true;
        return;
      }
      double ta = (lo - p) / d, tb = (hi - p) / d;
      if (ta > tb) std::swap(ta, tb);
      t_lo = std::max(t_lo, ta);
      t_hi = std::min(t_hi, tb);
    };
    clip(x0, dx, lox, hix);
    clip(y0, dy, loy, hiy);
    if (!empty && t_hi > t_lo + 1e-12) ++crossings;
  }
  return crossings;
}

}  // namespace

TEST_CASE("rasterized crossing count matches the geometric oracle") {
  Rng rng(99);
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 100; ++seed) {
    SynthConfig cfg;
    cfg.seed = 500 + seed;
    std::vector<Rect> rects;
    const Scene s = synth_scene(cfg, &rects);
    for (int trial = 0; trial < 5 && checked < 100; ++trial) {
      int x, y;
      do {
        x = static_cast<int>(rng.uniform_index(s.building.h));
        y = static_cast<int>(rng.uniform_index(s.building.w));
      } while (s.building.at(x, y));
      const int got = count_wall_crossings(s.building, s.tx_x, s.tx_y, x, y);
      const int want = oracle_crossings(rects, s.tx_x, s.tx_y, x, y);
      CAPTURE(seed);
      CAPTURE(x);
      CAPTURE(y);
      CHECK(got == want);
      ++checked;
    }
  }
}

TEST_CASE("two-wall pixels attenuate by the squared wall factor") {
  // Construct the map by hand: free corridor with two separated walls.
  SynthConfig cfg;
  cfg.seed = 3;
  std::vector<Rect> rects;
  const Scene s = synth_scene(cfg, &rects);
  int found = 0;
  for (int x = 0; x < s.building.h && found < 5; ++x) {
    for (int y = 0; y < s.building.w && found < 5; ++y) {
      if (s.building.at(x, y)) continue;
      if (oracle_crossings(rects, s.tx_x, s.tx_y, x, y) != 2) continue;
      const double d = std::hypot(x - s.tx_x, y - s.tx_y);
      const double los = std::max(0.0, 1.0 - cfg.distance_decay * d);
      const double expect = los * cfg.wall_attenuation * cfg.wall_attenuation;
      CHECK(s.radio.at(x, y) == doctest::Approx(expect).epsilon(1e-9));
      ++found;
    }
  }
  CHECK(found > 0);
}

TEST_CASE("reverse building map") {
  BuildingMap b;
  b.h = 2;
  b.w = 3;
  b.grid = {0, 1, 0, 1, 1, 0};
  const BuildingMap r = reverse_building_map(b);
  CHECK(r.grid == std::vector<std::uint8_t>{1, 0, 1, 0, 0, 1});
  const BuildingMap rr = reverse_building_map(r);
  CHECK(rr.grid == b.grid);
  CHECK(r.building_count() == b.free_count());

  BuildingMap zeros;
  zeros.h = 2;
  zeros.w = 2;
  zeros.grid = {0, 0, 0, 0};
  CHECK(reverse_building_map(zeros).grid == std::vector<std::uint8_t>{1, 1, 1, 1});
}

TEST_CASE("dataset save/load round trip") {
  const std::string root =
      (std::filesystem::temp_directory_path() / "rfl_scene_io").string();
  std::filesystem::create_directories(root);
  SynthConfig cfg;
  cfg.seed = 21;
  const Scene s = synth_scene(cfg);
  save_dataset_scene(root, 3, 0, s);

  const Scene a = load_dataset_scene(root, 3, 0);
  const Scene b = load_dataset_scene(root, 3, 0);
  CHECK(a.building.grid == b.building.grid);
  CHECK(a.radio.grid == b.radio.grid);
  CHECK(a.source_tag == SourceTag::Dataset);

  // Loaded values honor the normalization and masking contracts.
  CHECK(a.building.grid == s.building.grid);
  for (std::size_t i = 0; i < a.radio.grid.size(); ++i) {
    CHECK(a.radio.grid[i] >= 0.0);
    CHECK(a.radio.grid[i] <= 1.0);
    if (a.building.grid[i]) CHECK(a.radio.grid[i] == 0.0);
    // 8-bit quantization bound on the round trip.
    CHECK(std::abs(a.radio.grid[i] - s.radio.grid[i]) <= 0.5 / 255 + 1e-12);
  }
  // tx recovered as the radio argmax.
  CHECK(a.tx_x == s.tx_x);
  CHECK(a.tx_y == s.tx_y);

  CHECK_THROWS_AS(load_dataset_scene(root, 999, 0), NotFound);
}
