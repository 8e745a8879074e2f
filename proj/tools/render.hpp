#pragma once

// Raster helpers for the CLI's static figures: a fixed colormap for signal
// maps, a 3x5 digit font, and a line-plot canvas with a log-scale x axis.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rfl/png_io.hpp"
#include "rfl/scene.hpp"

namespace rflab {

struct Rgb {
  std::uint8_t r, g, b;
};

// Blue -> cyan -> yellow -> red over [0,1]. Documented fixed palette; makes
// no attempt to match any published figure's colors.
inline Rgb colormap(double v) {
  v = std::clamp(v, 0.0, 1.0);
  auto lerp = [](double a, double b, double t) {
    return static_cast<std::uint8_t>(std::lround(a + (b - a) * t));
  };
  if (v < 1.0 / 3) {
    const double t = v * 3;
    return {lerp(20, 0, t), lerp(20, 200, t), lerp(120, 220, t)};
  }
  if (v < 2.0 / 3) {
    const double t = v * 3 - 1;
    return {lerp(0, 235, t), lerp(200, 220, t), lerp(220, 40, t)};
  }
  const double t = v * 3 - 2;
  return {lerp(235, 210, t), lerp(220, 30, t), lerp(40, 30, t)};
}

inline rfl::RgbImage render_map(const rfl::RadioMap& m,
                                const rfl::BuildingMap* buildings = nullptr) {
  rfl::RgbImage img;
  img.h = m.h;
  img.w = m.w;
  img.pixels.assign(static_cast<std::size_t>(m.h) * m.w * 3, 0);
  for (int x = 0; x < m.h; ++x) {
    for (int y = 0; y < m.w; ++y) {
      if (buildings && buildings->at(x, y)) {
        img.set(x, y, 60, 60, 60);
      } else {
        const Rgb c = colormap(m.at(x, y));
        img.set(x, y, c.r, c.g, c.b);
      }
    }
  }
  return img;
}

inline void mark_point(rfl::RgbImage& img, int x, int y, Rgb c) {
  for (int dx = -1; dx <= 1; ++dx) {
    for (int dy = -1; dy <= 1; ++dy) {
      if (dx != 0 && dy != 0) continue;  // plus-shaped marker
      const int px = x + dx, py = y + dy;
      if (px >= 0 && px < img.h && py >= 0 && py < img.w) {
        img.set(px, py, c.r, c.g, c.b);
      }
    }
  }
}

// Tiles images left to right with a separator column; rows padded to the max
// height.
inline rfl::RgbImage hstack(const std::vector<rfl::RgbImage>& panels,
                            int gap = 2) {
  int h = 0, w = 0;
  for (const auto& p : panels) {
    h = std::max(h, p.h);
    w += p.w;
  }
  w += gap * (static_cast<int>(panels.size()) - 1);
  rfl::RgbImage out;
  out.h = h;
  out.w = w;
  out.pixels.assign(static_cast<std::size_t>(h) * w * 3, 255);
  int ox = 0;
  for (const auto& p : panels) {
    for (int x = 0; x < p.h; ++x) {
      for (int y = 0; y < p.w; ++y) {
        const auto* src = &p.pixels[3 * (static_cast<std::size_t>(x) * p.w + y)];
        out.set(x, ox + y, src[0], src[1], src[2]);
      }
    }
    ox += p.w + gap;
  }
  return out;
}

// 3x5 glyphs for digits, '.', and 'x'; enough for tick labels.
inline const std::uint16_t* glyph_rows(char c) {
  // Each glyph is 5 rows of 3 bits (msb = left column).
  static const std::uint16_t digits[10][5] = {
      {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 3, 1, 7},
      {5, 5, 7, 1, 1}, {7, 4, 7, 1, 7}, {7, 4, 7, 5, 7}, {7, 1, 2, 2, 2},
      {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7}};
  static const std::uint16_t dot[5] = {0, 0, 0, 0, 2};
  static const std::uint16_t ex[5] = {0, 5, 2, 5, 0};
  if (c >= '0' && c <= '9') return digits[c - '0'];
  if (c == '.') return dot;
  return ex;
}

inline void draw_text(rfl::RgbImage& img, int x, int y, const std::string& s,
                      Rgb c) {
  for (char ch : s) {
    const std::uint16_t* rows = glyph_rows(ch);
    for (int r = 0; r < 5; ++r) {
      for (int col = 0; col < 3; ++col) {
        if (rows[r] & (4 >> col)) {
          const int px = x + r, py = y + col;
          if (px >= 0 && px < img.h && py >= 0 && py < img.w) {
            img.set(px, py, c.r, c.g, c.b);
          }
        }
      }
    }
    y += 4;
  }
}

inline void draw_line(rfl::RgbImage& img, int x0, int y0, int x1, int y1,
                      Rgb c) {
  const int dx = std::abs(x1 - x0), dy = std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx - dy;
  while (true) {
    if (x0 >= 0 && x0 < img.h && y0 >= 0 && y0 < img.w) {
      img.set(x0, y0, c.r, c.g, c.b);
    }
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 > -dy) {
      err -= dy;
      x0 += sx;
    }
    if (e2 < dx) {
      err += dx;
      y0 += sy;
    }
  }
}

struct Series {
  std::vector<double> x;  // positive; plotted on a log axis
  std::vector<double> y;
  Rgb color;
};

// Fixed-size line chart: log10 x axis with a tick per distinct x value,
// linear y axis from 0 to a padded maximum.
inline rfl::RgbImage line_plot_logx(const std::vector<Series>& series,
                                    int h = 360, int w = 520) {
  rfl::RgbImage img;
  img.h = h;
  img.w = w;
  img.pixels.assign(static_cast<std::size_t>(h) * w * 3, 255);
  const int top = 12, bottom = h - 24, left = 44, right = w - 12;

  double xmin = 1e300, xmax = 0, ymax = 0;
  for (const auto& s : series) {
    for (double v : s.x) {
      xmin = std::min(xmin, v);
      xmax = std::max(xmax, v);
    }
    for (double v : s.y) ymax = std::max(ymax, v);
  }
  if (ymax <= 0) ymax = 1;
  ymax *= 1.1;
  const double lx0 = std::log10(xmin), lx1 = std::log10(std::max(xmax, xmin * 1.01));

  auto px = [&](double yval) {
    return bottom - static_cast<int>(std::lround((bottom - top) * yval / ymax));
  };
  auto py = [&](double xval) {
    const double t = (std::log10(xval) - lx0) / (lx1 - lx0);
    return left + static_cast<int>(std::lround((right - left) * t));
  };

  const Rgb axis{40, 40, 40}, grid{220, 220, 220};
  // y gridlines + labels at quarters
  for (int i = 0; i <= 4; ++i) {
    const double yv = ymax * i / 4;
    draw_line(img, px(yv), left, px(yv), right, i == 0 ? axis : grid);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.2f", yv);
    draw_text(img, px(yv) - 2, 4, buf, axis);
  }
  // x ticks at each distinct sample position
  std::vector<double> ticks;
  for (const auto& s : series) ticks.insert(ticks.end(), s.x.begin(), s.x.end());
  std::sort(ticks.begin(), ticks.end());
  ticks.erase(std::unique(ticks.begin(), ticks.end()), ticks.end());
  for (double t : ticks) {
    draw_line(img, top, py(t), bottom, py(t), grid);
    draw_line(img, bottom, py(t), bottom + 3, py(t), axis);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%g", t);
    draw_text(img, bottom + 6, py(t) - 4, buf, axis);
  }
  draw_line(img, top, left, bottom, left, axis);
  draw_line(img, bottom, left, bottom, right, axis);

  for (const auto& s : series) {
    for (std::size_t i = 0; i + 1 < s.x.size(); ++i) {
      draw_line(img, px(s.y[i]), py(s.x[i]), px(s.y[i + 1]), py(s.x[i + 1]),
                s.color);
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      mark_point(img, px(s.y[i]), py(s.x[i]), s.color);
    }
  }
  return img;
}

}  // namespace rflab
