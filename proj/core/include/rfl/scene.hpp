#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rfl/png_io.hpp"
#include "rfl/rng.hpp"

namespace rfl {

// Binary occupancy grid; 1 = building, 0 = free. x indexes rows, y columns.
struct BuildingMap {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> grid;

  std::uint8_t at(int x, int y) const { return grid[static_cast<std::size_t>(x) * w + y]; }
  std::uint8_t& at(int x, int y) { return grid[static_cast<std::size_t>(x) * w + y]; }
  std::size_t cells() const { return static_cast<std::size_t>(h) * w; }
  std::size_t building_count() const;
  std::size_t free_count() const { return cells() - building_count(); }
};

// Unit-interval signal map with the same dimensions as its building map.
struct RadioMap {
  int h = 0;
  int w = 0;
  std::vector<double> grid;

  double at(int x, int y) const { return grid[static_cast<std::size_t>(x) * w + y]; }
  double& at(int x, int y) { return grid[static_cast<std::size_t>(x) * w + y]; }
};

// Linear map between dB pathloss and gray values on [truncation, max_pathloss].
struct PathlossCodec {
  double max_pathloss;  // M1
  double truncation;    // P_trnc

  void validate() const;
};

double to_gray(double pathloss_db, const PathlossCodec& codec);
double from_gray(double gray, const PathlossCodec& codec);

enum class SourceTag { SynthA, SynthB, Dataset };

std::string to_string(SourceTag tag);
SourceTag source_tag_from_string(const std::string& s);

struct Scene {
  BuildingMap building;
  RadioMap radio;
  int tx_x = 0;
  int tx_y = 0;
  SourceTag source_tag = SourceTag::SynthA;

  void validate() const;
};

// Synthetic scene generator: axis-aligned rectangular buildings, linear
// distance decay from the transmitter, multiplicative attenuation per wall
// crossed. Crossings are counted on the rasterized segment tx -> pixel.
struct SynthConfig {
  int size = 48;                 // square grid
  int building_count = 6;        // placement target; fewer if space runs out
  int building_min = 4;          // side length range, pixels
  int building_max = 10;
  double wall_attenuation = 0.5;  // in (0, 1), factor per wall crossed
  double distance_decay = 0.02;   // value lost per pixel of distance
  std::uint64_t seed = 0;

  void validate() const;
};

// Inclusive cell ranges of one placed building.
struct Rect {
  int x0, y0, x1, y1;
};

Scene synth_scene(const SynthConfig& cfg, Rng& rng,
                  std::vector<Rect>* placed = nullptr);
// Convenience overload seeding the stream from cfg.seed.
Scene synth_scene(const SynthConfig& cfg, std::vector<Rect>* placed = nullptr);

// Number of free->building transitions along the rasterized segment between
// the centers of (x0,y0) and (x1,y1). The traversal visits every cell whose
// open interior the continuous segment passes through; exact corner hits
// step diagonally. Integer arithmetic throughout.
int count_wall_crossings(const BuildingMap& b, int x0, int y0, int x1, int y1);

BuildingMap reverse_building_map(const BuildingMap& b);

// Dataset layout: <root>/buildings/<map_id>.png, <root>/radio/<map_id>_<tx_id>.png,
// 8-bit grayscale. Building maps binarize at 0.5; radio maps scale to [0,1];
// tx is the radio-map argmax (row-major first on ties).
Scene load_dataset_scene(const std::string& root, int map_id, int tx_id);
void save_dataset_scene(const std::string& root, int map_id, int tx_id,
                        const Scene& scene);

GrayImage radio_to_gray(const RadioMap& m);
GrayImage building_to_gray(const BuildingMap& b);

}  // namespace rfl
