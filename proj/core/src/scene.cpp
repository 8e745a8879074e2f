#include "rfl/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>

#include "rfl/error.hpp"

namespace rfl {

std::size_t BuildingMap::building_count() const {
  std::size_t n = 0;
  for (auto c : grid) n += c;
  return n;
}

void PathlossCodec::validate() const {
  if (!(max_pathloss > truncation)) {
    throw ConfigError("PathlossCodec requires max_pathloss > truncation");
  }
}

double to_gray(double pathloss_db, const PathlossCodec& codec) {
  codec.validate();
  if (pathloss_db > codec.max_pathloss) {
    throw PathlossAboveMax("pathloss exceeds the dataset maximum M1");
  }
  const double g = (pathloss_db - codec.truncation) /
                   (codec.max_pathloss - codec.truncation);
  return std::max(g, 0.0);
}

double from_gray(double gray, const PathlossCodec& codec) {
  codec.validate();
  if (gray < 0.0 || gray > 1.0) {
    throw DomainError("gray value outside [0, 1]");
  }
  return codec.truncation + gray * (codec.max_pathloss - codec.truncation);
}

std::string to_string(SourceTag tag) {
  switch (tag) {
    case SourceTag::SynthA: return "synth_a";
    case SourceTag::SynthB: return "synth_b";
    case SourceTag::Dataset: return "dataset";
  }
  return "unknown";
}

SourceTag source_tag_from_string(const std::string& s) {
  if (s == "synth_a") return SourceTag::SynthA;
  if (s == "synth_b") return SourceTag::SynthB;
  if (s == "dataset") return SourceTag::Dataset;
  throw ConfigError("unknown source tag: " + s);
}

void Scene::validate() const {
  if (building.h != radio.h || building.w != radio.w) {
    throw ShapeError("building and radio map dimensions differ");
  }
  if (tx_x < 0 || tx_x >= building.h || tx_y < 0 || tx_y >= building.w ||
      building.at(tx_x, tx_y) != 0) {
    throw DomainError("transmitter is not on a free cell");
  }
}

void SynthConfig::validate() const {
  if (size < 8) throw ConfigError("synth size too small");
  if (building_min < 1 || building_max < building_min ||
      building_max >= size) {
    throw ConfigError("invalid building size range");
  }
  if (!(wall_attenuation > 0.0 && wall_attenuation < 1.0)) {
    throw ConfigError("wall_attenuation must lie in (0, 1)");
  }
  if (!(distance_decay > 0.0)) {
    throw ConfigError("distance_decay must be positive");
  }
}

int count_wall_crossings(const BuildingMap& b, int x0, int y0, int x1,
                         int y1) {
  const int dx = x1 - x0;
  const int dy = y1 - y0;
  const std::int64_t adx = std::abs(dx);
  const std::int64_t ady = std::abs(dy);
  const int sx = dx > 0 ? 1 : -1;
  const int sy = dy > 0 ? 1 : -1;

  int cx = x0;
  int cy = y0;
  bool prev_in = b.at(cx, cy) != 0;
  int crossings = prev_in ? 1 : 0;  // tx is free in practice; keep the walk total

  // The segment joins cell centers, so the j-th x-plane crossing happens at
  // parameter (2j-1)/(2*adx). Comparing (2j-1)*ady against (2l-1)*adx orders
  // the crossings exactly in integer arithmetic; equality is a lattice-corner
  // hit and steps diagonally.
  std::int64_t j = 1;
  std::int64_t l = 1;
  while (j <= adx || l <= ady) {
    if (l > ady) {
      cx += sx;
      ++j;
    } else if (j > adx) {
      cy += sy;
      ++l;
    } else {
      const std::int64_t tx_num = (2 * j - 1) * ady;
      const std::int64_t ty_num = (2 * l - 1) * adx;
      if (tx_num < ty_num) {
        cx += sx;
        ++j;
      } else if (tx_num > ty_num) {
        cy += sy;
        ++l;
      } else {
        cx += sx;
        cy += sy;
        ++j;
        ++l;
      }
    }
    const bool in = b.at(cx, cy) != 0;
    if (in && !prev_in) ++crossings;
    prev_in = in;
  }
  return crossings;
}

namespace {

bool expanded_overlap(const Rect& a, const Rect& b) {
  return a.x0 - 1 <= b.x1 && a.x1 + 1 >= b.x0 && a.y0 - 1 <= b.y1 &&
         a.y1 + 1 >= b.y0;
}

}  // namespace

Scene synth_scene(const SynthConfig& cfg, Rng& rng,
                  std::vector<Rect>* placed) {
  cfg.validate();
  const int n = cfg.size;

  Scene scene;
  scene.building.h = scene.building.w = n;
  scene.building.grid.assign(static_cast<std::size_t>(n) * n, 0);
  scene.radio.h = scene.radio.w = n;
  scene.radio.grid.assign(static_cast<std::size_t>(n) * n, 0.0);

  // Rectangles keep a one-cell clearance from each other so every wall run
  // along a ray maps to exactly one rectangle.
  std::vector<Rect> rects;
  const int span = cfg.building_max - cfg.building_min + 1;
  for (int i = 0; i < cfg.building_count; ++i) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      const int sh = cfg.building_min + static_cast<int>(rng.uniform_index(span));
      const int sw = cfg.building_min + static_cast<int>(rng.uniform_index(span));
      if (sh >= n || sw >= n) continue;
      const int x0 = static_cast<int>(rng.uniform_index(n - sh + 1));
      const int y0 = static_cast<int>(rng.uniform_index(n - sw + 1));
      const Rect r{x0, y0, x0 + sh - 1, y0 + sw - 1};
      bool clear = true;
      for (const Rect& other : rects) {
        if (expanded_overlap(r, other)) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;
      rects.push_back(r);
      for (int x = r.x0; x <= r.x1; ++x) {
        for (int y = r.y0; y <= r.y1; ++y) scene.building.at(x, y) = 1;
      }
      break;
    }
  }

  std::vector<int> free_cells;
  free_cells.reserve(scene.building.cells());
  for (int x = 0; x < n; ++x) {
    for (int y = 0; y < n; ++y) {
      if (scene.building.at(x, y) == 0) free_cells.push_back(x * n + y);
    }
  }
  if (free_cells.empty()) {
    throw GenerationFailure("building placement left no free cell");
  }

  const int tx_cell = free_cells[rng.uniform_index(free_cells.size())];
  scene.tx_x = tx_cell / n;
  scene.tx_y = tx_cell % n;

  for (int x = 0; x < n; ++x) {
    for (int y = 0; y < n; ++y) {
      if (scene.building.at(x, y) != 0) continue;
      const double d = std::hypot(static_cast<double>(x - scene.tx_x),
                                  static_cast<double>(y - scene.tx_y));
      double v = 1.0 - cfg.distance_decay * d;
      if (v > 0.0) {
        const int crossings =
            count_wall_crossings(scene.building, scene.tx_x, scene.tx_y, x, y);
        v *= std::pow(cfg.wall_attenuation, crossings);
      }
      scene.radio.at(x, y) = std::clamp(v, 0.0, 1.0);
    }
  }

  if (placed) *placed = rects;
  return scene;
}

Scene synth_scene(const SynthConfig& cfg, std::vector<Rect>* placed) {
  Rng rng(cfg.seed);
  return synth_scene(cfg, rng, placed);
}

BuildingMap reverse_building_map(const BuildingMap& b) {
  BuildingMap out = b;
  for (auto& c : out.grid) c = c ? 0 : 1;
  return out;
}

GrayImage radio_to_gray(const RadioMap& m) {
  GrayImage img;
  img.h = m.h;
  img.w = m.w;
  img.pixels.resize(m.grid.size());
  for (std::size_t i = 0; i < m.grid.size(); ++i) {
    img.pixels[i] = static_cast<std::uint8_t>(
        std::lround(std::clamp(m.grid[i], 0.0, 1.0) * 255.0));
  }
  return img;
}

GrayImage building_to_gray(const BuildingMap& b) {
  GrayImage img;
  img.h = b.h;
  img.w = b.w;
  img.pixels.resize(b.grid.size());
  for (std::size_t i = 0; i < b.grid.size(); ++i) {
    img.pixels[i] = b.grid[i] ? 255 : 0;
  }
  return img;
}

namespace {

std::string building_path(const std::string& root, int map_id) {
  return root + "/buildings/" + std::to_string(map_id) + ".png";
}

std::string radio_path(const std::string& root, int map_id, int tx_id) {
  return root + "/radio/" + std::to_string(map_id) + "_" +
         std::to_string(tx_id) + ".png";
}

}  // namespace

Scene load_dataset_scene(const std::string& root, int map_id, int tx_id) {
  const GrayImage bimg = read_png_gray8(building_path(root, map_id));
  const GrayImage rimg = read_png_gray8(radio_path(root, map_id, tx_id));
  if (bimg.h != rimg.h || bimg.w != rimg.w || bimg.h == 0 || bimg.w == 0) {
    throw FormatError("building/radio dimensions mismatch for map " +
                      std::to_string(map_id));
  }

  Scene scene;
  scene.source_tag = SourceTag::Dataset;
  scene.building.h = bimg.h;
  scene.building.w = bimg.w;
  scene.building.grid.resize(bimg.pixels.size());
  for (std::size_t i = 0; i < bimg.pixels.size(); ++i) {
    scene.building.grid[i] = bimg.pixels[i] >= 128 ? 1 : 0;
  }

  scene.radio.h = rimg.h;
  scene.radio.w = rimg.w;
  scene.radio.grid.resize(rimg.pixels.size());
  std::size_t argmax = 0;
  for (std::size_t i = 0; i < rimg.pixels.size(); ++i) {
    scene.radio.grid[i] = rimg.pixels[i] / 255.0;
    if (rimg.pixels[i] > rimg.pixels[argmax]) argmax = i;
  }
  scene.tx_x = static_cast<int>(argmax) / scene.radio.w;
  scene.tx_y = static_cast<int>(argmax) % scene.radio.w;
  return scene;
}

void save_dataset_scene(const std::string& root, int map_id, int tx_id,
                        const Scene& scene) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(root) / "buildings");
  fs::create_directories(fs::path(root) / "radio");
  write_png_gray8(building_path(root, map_id), building_to_gray(scene.building));
  write_png_gray8(radio_path(root, map_id, tx_id), radio_to_gray(scene.radio));
}

}  // namespace rfl
