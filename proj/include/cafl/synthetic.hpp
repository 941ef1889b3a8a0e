#pragma once

// Synthetic terrains for tests, benchmarks and the bundled fixtures.
// Elevations are rounded to multiples of 1/64 m so that stage = depth + bed
// sums are exact in binary floating point.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "cafl/raster_io.hpp"

namespace cafl::synthetic {

inline double quantize(double v) { return std::round(v * 64.0) / 64.0; }

inline GridHeader header(std::size_t rows, std::size_t cols, double cellsize = 1.0) {
  GridHeader h;
  h.nrows = rows;
  h.ncols = cols;
  h.cellsize = cellsize;
  h.xllcorner = 0.0;
  h.yllcorner = 0.0;
  h.nodata_value = -9999.0;
  return h;
}

template <typename F>
TerrainGrid make(std::size_t rows, std::size_t cols, double cellsize, double roughness, F&& elevation) {
  TerrainGrid t;
  t.header = header(rows, cols, cellsize);
  t.elevation.resize(rows * cols);
  t.roughness.assign(rows * cols, roughness);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t.elevation[r * cols + c] = quantize(elevation(r, c));
  t.crs_label = "local";
  return t;
}

inline TerrainGrid flat(std::size_t rows, std::size_t cols, double cellsize = 1.0, double roughness = 0.03) {
  return make(rows, cols, cellsize, roughness, [](std::size_t, std::size_t) { return 0.0; });
}

// Paraboloid centred on the grid; mirror-symmetric in both axes.
inline TerrainGrid bowl(std::size_t rows, std::size_t cols, double cellsize = 1.0, double rim = 2.0,
                        double roughness = 0.03) {
  const double rc = 0.5 * static_cast<double>(rows - 1), cc = 0.5 * static_cast<double>(cols - 1);
  const double norm = rc * rc + cc * cc;
  return make(rows, cols, cellsize, roughness, [&](std::size_t r, std::size_t c) {
    const double dr = static_cast<double>(r) - rc, dc = static_cast<double>(c) - cc;
    return rim * (dr * dr + dc * dc) / norm;
  });
}

// V-shaped valley draining towards the last row.
inline TerrainGrid valley(std::size_t rows, std::size_t cols, double cellsize = 1.0, double down_slope = 0.01,
                          double side_slope = 0.05, double roughness = 0.035) {
  const double cc = 0.5 * static_cast<double>(cols - 1);
  return make(rows, cols, cellsize, roughness, [&](std::size_t r, std::size_t c) {
    const double along = static_cast<double>(rows - 1 - r) * cellsize * down_slope;
    const double across = std::abs(static_cast<double>(c) - cc) * cellsize * side_slope;
    return along + across;
  });
}

// Deterministic bumpy bed: sum of a few sinusoids, no RNG involved.
inline TerrainGrid uneven(std::size_t rows, std::size_t cols, double cellsize = 1.0, double amplitude = 0.5,
                          double roughness = 0.03) {
  return make(rows, cols, cellsize, roughness, [&](std::size_t r, std::size_t c) {
    const double x = static_cast<double>(c), y = static_cast<double>(r);
    return amplitude * (1.0 + 0.5 * std::sin(0.7 * x) * std::cos(0.4 * y) + 0.3 * std::sin(0.23 * (x + 2 * y)));
  });
}

// Gaussian mound of water centred at (row, col).
inline std::vector<double> mound(std::size_t rows, std::size_t cols, double row, double col, double height,
                                 double radius) {
  std::vector<double> d(rows * cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double dr = static_cast<double>(r) - row, dc = static_cast<double>(c) - col;
      d[r * cols + c] = height * std::exp(-(dr * dr + dc * dc) / (radius * radius));
    }
  return d;
}

// Depth that fills every cell below `stage` up to it.
inline std::vector<double> still_water(const TerrainGrid& t, double stage) {
  std::vector<double> d(t.elevation.size(), 0.0);
  for (std::size_t i = 0; i < d.size(); ++i)
    if (t.valid(i) && stage > t.elevation[i]) d[i] = stage - t.elevation[i];
  return d;
}

}  // namespace cafl::synthetic
