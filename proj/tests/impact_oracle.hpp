#pragma once

// Brute-force impact reference: every cell centre is tested against the
// polygon with a plain even-odd crossing count. Shares no code with the
// scanline rasterizer.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "cafl/impact.hpp"

namespace impact_oracle {

using cafl::Feature;
using cafl::GridHeader;
using cafl::Point2;

inline bool inside(const std::vector<std::vector<Point2>>& rings, double x, double y) {
  bool in = false;
  for (const auto& ring : rings)
    for (std::size_t k = 0; k + 1 < ring.size(); ++k) {
      const auto& a = ring[k];
      const auto& b = ring[k + 1];
      if ((a.y > y) != (b.y > y) && x < a.x + (y - a.y) / (b.y - a.y) * (b.x - a.x)) in = !in;
    }
  return in;
}

inline std::vector<std::size_t> polygon_cells(const Feature& f, const GridHeader& h) {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < h.nrows; ++r)
    for (std::size_t c = 0; c < h.ncols; ++c)
      if (inside(f.rings, h.cell_center_x(c), h.cell_center_y(r))) out.push_back(h.index(r, c));
  return out;
}

inline Feature polygon(std::string id, std::vector<Point2> shell) {
  Feature f;
  f.id = std::move(id);
  shell.push_back(shell.front());
  f.rings = {std::move(shell)};
  return f;
}

// Convex polygon with 3-10 vertices on a circle somewhere over the grid.
inline Feature random_convex(std::mt19937_64& rng, const GridHeader& h, std::string id) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double span = h.cellsize * static_cast<double>(h.ncols);
  const double cx = h.xllcorner + u(rng) * span, cy = h.yllcorner + u(rng) * span;
  const double rad = (0.05 + 0.3 * u(rng)) * span;
  std::vector<double> ang;
  for (int k = 0; k < 3 + static_cast<int>(rng() % 8); ++k) ang.push_back(u(rng) * 2.0 * M_PI);
  std::sort(ang.begin(), ang.end());
  std::vector<Point2> pts;
  for (double a : ang) pts.push_back({cx + rad * std::cos(a), cy + rad * std::sin(a)});
  return polygon(std::move(id), pts);
}

// Expected impact of a polygon feature on a depth raster.
inline cafl::FeatureImpact expected(const Feature& f, const std::vector<double>& depth, const GridHeader& h,
                                    double threshold) {
  cafl::FeatureImpact fi;
  fi.id = f.id;
  fi.kind = f.kind;
  double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
  for (const auto& p : f.rings[0]) {
    x0 = std::min(x0, p.x);
    y0 = std::min(y0, p.y);
    x1 = std::max(x1, p.x);
    y1 = std::max(y1, p.y);
  }
  const double gx1 = h.xllcorner + h.cellsize * static_cast<double>(h.ncols);
  const double gy1 = h.yllcorner + h.cellsize * static_cast<double>(h.nrows);
  fi.out_of_extent = x1 < h.xllcorner || x0 > gx1 || y1 < h.yllcorner || y0 > gy1;
  if (!fi.out_of_extent) {
    const auto cells = polygon_cells(f, h);
    fi.cell_count = cells.size();
    std::size_t wet = 0;
    for (auto i : cells) {
      fi.max_depth = std::max(fi.max_depth, depth[i]);
      wet += depth[i] > threshold ? 1 : 0;
    }
    if (!cells.empty()) fi.inundated_fraction = static_cast<double>(wet) / static_cast<double>(cells.size());
  }
  fi.affected = fi.max_depth > threshold;
  const double d = fi.max_depth;
  fi.depth_class = d < 0.5 ? "0-0.5" : d < 1.0 ? "0.5-1" : d < 2.0 ? "1-2" : d < 4.0 ? "2-4" : ">4";
  return fi;
}

}  // namespace impact_oracle
