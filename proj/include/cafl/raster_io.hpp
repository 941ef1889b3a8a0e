#pragma once

// Esri ASCII grid reader/writer and the terrain (elevation + roughness) grid
// built from it.
//
// Row 0 of every array is the northernmost row, i.e. file order. The centre
// of cell (row, col) sits at
//   x = xllcorner + (col + 0.5) * cellsize
//   y = yllcorner + (nrows - 1 - row + 0.5) * cellsize

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cafl/error.hpp"

namespace cafl {

struct GridHeader {
  std::size_t ncols = 0;
  std::size_t nrows = 0;
  double xllcorner = 0.0;
  double yllcorner = 0.0;
  double cellsize = 1.0;
  double nodata_value = -9999.0;

  std::size_t cell_count() const noexcept { return ncols * nrows; }
  std::size_t index(std::size_t row, std::size_t col) const noexcept { return row * ncols + col; }
  double cell_center_x(std::size_t col) const noexcept {
    return xllcorner + (static_cast<double>(col) + 0.5) * cellsize;
  }
  double cell_center_y(std::size_t row) const noexcept {
    return yllcorner + (static_cast<double>(nrows - 1 - row) + 0.5) * cellsize;
  }

  // Same cell space, compared with a tolerance relative to the cell size.
  bool aligned_with(const GridHeader& o) const noexcept {
    const double tol = 1e-9 * std::max(cellsize, 1.0);
    return ncols == o.ncols && nrows == o.nrows && std::abs(xllcorner - o.xllcorner) <= tol &&
           std::abs(yllcorner - o.yllcorner) <= tol && std::abs(cellsize - o.cellsize) <= tol;
  }

  bool operator==(const GridHeader&) const = default;
};

struct RasterLayer {
  GridHeader header;
  std::vector<double> values;  // row-major, row 0 = north

  double at(std::size_t row, std::size_t col) const { return values[header.index(row, col)]; }
  double& at(std::size_t row, std::size_t col) { return values[header.index(row, col)]; }
  bool is_nodata(std::size_t i) const noexcept { return values[i] == header.nodata_value; }
};

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline bool parse_double(std::string_view tok, double& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  const auto* first = tok.data();
  const auto* last = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

// Splits on ASCII whitespace.
template <typename F>
void for_each_token(std::string_view line, F&& fn) {
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) fn(line.substr(i, j - i));
    i = j;
  }
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct HeaderScan {
  GridHeader header;
  std::string pending;     // first body line, when one was reached
  bool have_pending = false;
  std::size_t lineno = 0;  // lines consumed so far
};

inline HeaderScan scan_header(std::istream& in) {
  HeaderScan scan;
  GridHeader& h = scan.header;
  std::optional<double> ncols, nrows, xll, yll, cellsize, dx, dy, nodata;
  bool x_center = false, y_center = false;
  std::size_t header_end_line = 0;
  std::string& line = scan.pending;
  std::size_t& lineno = scan.lineno;

  while (std::getline(in, line)) {
    ++lineno;
    std::vector<std::string_view> toks;
    for_each_token(line, [&](std::string_view t) { toks.push_back(t); });
    if (toks.empty()) continue;
    if (!std::isalpha(static_cast<unsigned char>(toks[0][0]))) {
      scan.have_pending = true;
      break;
    }
    if (toks.size() != 2) throw ParseError("malformed header line", lineno);
    const std::string key = lower(toks[0]);
    double value = 0.0;
    if (!parse_double(toks[1], value))
      throw ParseError("non-numeric header value '" + std::string(toks[1]) + "'", lineno);
    if (key == "ncols") ncols = value;
    else if (key == "nrows") nrows = value;
    else if (key == "xllcorner") xll = value;
    else if (key == "xllcenter") { xll = value; x_center = true; }
    else if (key == "yllcorner") yll = value;
    else if (key == "yllcenter") { yll = value; y_center = true; }
    else if (key == "cellsize") cellsize = value;
    else if (key == "dx") dx = value;
    else if (key == "dy") dy = value;
    else if (key == "nodata_value") nodata = value;
    else throw ParseError("malformed header key '" + std::string(toks[0]) + "'", lineno);
    header_end_line = lineno;
  }

  if (!ncols || !nrows || !xll || !yll || !(cellsize || dx))
    throw ParseError("incomplete header (need ncols, nrows, xllcorner, yllcorner, cellsize)",
                     header_end_line ? header_end_line : lineno);
  if (!cellsize) {
    if (dy && *dy != *dx)
      throw ParseError("rectangular cells (dx != dy) are not supported", header_end_line);
    cellsize = dx;
  }
  if (*ncols < 1 || *nrows < 1 || *ncols != std::floor(*ncols) || *nrows != std::floor(*nrows))
    throw ParseError("ncols and nrows must be positive integers", header_end_line);
  if (!(*cellsize > 0.0)) throw ParseError("cellsize must be > 0", header_end_line);

  h.ncols = static_cast<std::size_t>(*ncols);
  h.nrows = static_cast<std::size_t>(*nrows);
  h.cellsize = *cellsize;
  h.xllcorner = x_center ? *xll - 0.5 * h.cellsize : *xll;
  h.yllcorner = y_center ? *yll - 0.5 * h.cellsize : *yll;
  h.nodata_value = nodata.value_or(-9999.0);
  return scan;
}

}  // namespace detail

// Header only; stops at the first body line.
inline GridHeader read_ascii_header(std::istream& in) { return detail::scan_header(in).header; }

// Parses an Esri ASCII grid. Header keys are case-insensitive; accepted keys
// are ncols, nrows, xllcorner|xllcenter, yllcorner|yllcenter, cellsize (or
// equal dx/dy), nodata_value. NODATA defaults to -9999 when absent.
inline RasterLayer read_ascii_grid(std::istream& in) {
  auto scan = detail::scan_header(in);
  RasterLayer layer;
  layer.header = scan.header;
  const GridHeader& h = layer.header;
  std::string line = std::move(scan.pending);
  std::size_t lineno = scan.lineno;
  const bool have_pending = scan.have_pending;

  const std::size_t expected = h.cell_count();
  layer.values.reserve(expected);
  std::size_t last_data_line = lineno;
  auto consume = [&](std::string_view sv) {
    detail::for_each_token(sv, [&](std::string_view t) {
      if (layer.values.size() == expected)
        throw ParseError("value count mismatch: more than " + std::to_string(expected) + " values",
                         lineno);
      double v = 0.0;
      if (!detail::parse_double(t, v))
        throw ParseError("non-numeric value '" + std::string(t) + "'", lineno);
      layer.values.push_back(v);
    });
    last_data_line = lineno;
  };
  if (have_pending) consume(line);
  while (std::getline(in, line)) {
    ++lineno;
    bool blank = std::all_of(line.begin(), line.end(),
                             [](unsigned char c) { return std::isspace(c) != 0; });
    if (!blank) consume(line);
  }
  if (layer.values.size() != expected)
    throw ParseError("value count mismatch: expected " + std::to_string(expected) + " values, found " +
                         std::to_string(layer.values.size()),
                     last_data_line);
  return layer;
}

inline RasterLayer read_ascii_grid_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open raster file '" + path + "'");
  try {
    return read_ascii_grid(in);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

// Writes the six-line header and rows north to south. Values use the shortest
// representation that parses back to the same double.
inline void write_ascii_grid(const RasterLayer& layer, std::ostream& out) {
  const GridHeader& h = layer.header;
  if (layer.values.size() != h.cell_count())
    throw Error("raster array size does not match header");
  out << "ncols " << h.ncols << '\n'
      << "nrows " << h.nrows << '\n'
      << "xllcorner " << detail::format_double(h.xllcorner) << '\n'
      << "yllcorner " << detail::format_double(h.yllcorner) << '\n'
      << "cellsize " << detail::format_double(h.cellsize) << '\n'
      << "NODATA_value " << detail::format_double(h.nodata_value) << '\n';
  std::string row;
  for (std::size_t r = 0; r < h.nrows; ++r) {
    row.clear();
    for (std::size_t c = 0; c < h.ncols; ++c) {
      if (c) row += ' ';
      row += detail::format_double(layer.at(r, c));
    }
    row += '\n';
    out << row;
  }
  out.flush();
  if (!out) throw Error("raster write failed");
}

inline void write_ascii_grid_file(const RasterLayer& layer, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  write_ascii_grid(layer, out);
}

// Elevation plus Manning roughness on one square-cell grid.
struct TerrainGrid {
  GridHeader header;
  std::vector<double> elevation;
  std::vector<double> roughness;
  std::string crs_label;

  std::size_t rows() const noexcept { return header.nrows; }
  std::size_t cols() const noexcept { return header.ncols; }
  double cellsize() const noexcept { return header.cellsize; }
  double cell_area() const noexcept { return header.cellsize * header.cellsize; }
  bool valid(std::size_t i) const noexcept { return elevation[i] != header.nodata_value; }
  bool valid(std::size_t row, std::size_t col) const noexcept { return valid(header.index(row, col)); }

  std::vector<unsigned char> valid_mask() const {
    std::vector<unsigned char> mask(elevation.size());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = valid(i) ? 1 : 0;
    return mask;
  }

  RasterLayer elevation_layer() const { return {header, elevation}; }
};

inline std::vector<unsigned char> valid_mask(const RasterLayer& dem) {
  std::vector<unsigned char> mask(dem.values.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = dem.is_nodata(i) ? 0 : 1;
  return mask;
}

namespace detail {
inline void check_roughness_value(double r, std::size_t i, std::size_t ncols) {
  if (!(r > 0.0 && r < 1.0))
    throw Error("roughness must lie in (0, 1); got " + format_double(r) + " at row " +
                std::to_string(i / ncols) + ", col " + std::to_string(i % ncols));
}
}  // namespace detail

// Roughness raster must share the DEM's header exactly. A roughness nodata on a
// valid elevation cell is an error.
inline TerrainGrid make_terrain(const RasterLayer& dem, const RasterLayer& roughness,
                                std::string crs_label = {}) {
  if (!dem.header.aligned_with(roughness.header))
    throw Error("roughness raster header does not match the DEM header");
  TerrainGrid t{dem.header, dem.values, std::vector<double>(dem.values.size()), std::move(crs_label)};
  for (std::size_t i = 0; i < t.elevation.size(); ++i) {
    if (!t.valid(i)) {
      t.roughness[i] = t.header.nodata_value;
      continue;
    }
    if (roughness.is_nodata(i))
      throw Error("roughness missing on valid cell row " + std::to_string(i / t.cols()) + ", col " +
                  std::to_string(i % t.cols()));
    detail::check_roughness_value(roughness.values[i], i, t.cols());
    t.roughness[i] = roughness.values[i];
  }
  return t;
}

inline TerrainGrid make_terrain(const RasterLayer& dem, double roughness_const,
                                std::string crs_label = {}) {
  detail::check_roughness_value(roughness_const, 0, std::max<std::size_t>(dem.header.ncols, 1));
  TerrainGrid t{dem.header, dem.values, std::vector<double>(dem.values.size(), roughness_const),
                std::move(crs_label)};
  for (std::size_t i = 0; i < t.elevation.size(); ++i)
    if (!t.valid(i)) t.roughness[i] = t.header.nodata_value;
  return t;
}

}  // namespace cafl
