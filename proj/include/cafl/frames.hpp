#pragma once

// JSON flood frames: one snapshot of the water surface as a triangle mesh in
// coordinates local to the grid's lower-left corner.
//
//   {"xllcorner": .., "yllcorner": .., "cellsize": ..,
//    "vertex": [x0, y0, z0, x1, y1, z1, ...],
//    "index":  [a0, b0, c0, ...],
//    "depth":  [[d0, d1, ...], [min, max]],
//    "information": {"key": "value", ...}}

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cafl/ca_core.hpp"
#include "cafl/error.hpp"
#include "cafl/raster_io.hpp"

namespace cafl {

struct FloodFrame {
  double xllcorner = 0.0;
  double yllcorner = 0.0;
  double cellsize = 1.0;
  std::vector<double> vertex;
  std::vector<std::uint32_t> index;
  std::vector<double> depth;
  double depth_min = 0.0;
  double depth_max = 0.0;
  std::map<std::string, std::string> information;

  std::size_t vertex_count() const noexcept { return vertex.size() / 3; }
  bool operator==(const FloodFrame&) const = default;
};

// Vertices sit at the centres of wet cells (depth > wet_threshold) and of the
// valid cells in their 8-neighbour ring, in row-major order; z is the water
// stage. Each 2x2 block of vertex cells contributes two triangles.
inline FloodFrame build_frame(const FloodState& s, const TerrainGrid& t, double wet_threshold) {
  if (s.rows != t.rows() || s.cols != t.cols()) throw Error("state and terrain dimensions differ");
  FloodFrame f;
  f.xllcorner = t.header.xllcorner;
  f.yllcorner = t.header.yllcorner;
  f.cellsize = t.header.cellsize;
  const std::size_t rows = s.rows, cols = s.cols;

  std::vector<unsigned char> include(rows * cols, 0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = r * cols + c;
      if (!t.valid(i) || !(s.depth[i] > wet_threshold)) continue;
      const std::size_t r0 = r ? r - 1 : 0, r1 = std::min(r + 1, rows - 1);
      const std::size_t c0 = c ? c - 1 : 0, c1 = std::min(c + 1, cols - 1);
      for (std::size_t rr = r0; rr <= r1; ++rr)
        for (std::size_t cc = c0; cc <= c1; ++cc)
          if (t.valid(rr * cols + cc)) include[rr * cols + cc] = 1;
    }

  constexpr std::uint32_t none = 0xffffffffu;
  std::vector<std::uint32_t> vid(rows * cols, none);
  const double cs = t.header.cellsize;
  for (std::size_t i = 0; i < rows * cols; ++i) {
    if (!include[i]) continue;
    const std::size_t r = i / cols, c = i % cols;
    vid[i] = static_cast<std::uint32_t>(f.depth.size());
    f.vertex.push_back((static_cast<double>(c) + 0.5) * cs);
    f.vertex.push_back((static_cast<double>(rows - 1 - r) + 0.5) * cs);
    f.vertex.push_back(t.elevation[i] + s.depth[i]);
    f.depth.push_back(s.depth[i]);
  }
  for (std::size_t r = 0; r + 1 < rows; ++r)
    for (std::size_t c = 0; c + 1 < cols; ++c) {
      const std::uint32_t tl = vid[r * cols + c], tr = vid[r * cols + c + 1];
      const std::uint32_t bl = vid[(r + 1) * cols + c], br = vid[(r + 1) * cols + c + 1];
      if (tl != none && bl != none && tr != none) f.index.insert(f.index.end(), {tl, bl, tr});
      if (tr != none && bl != none && br != none) f.index.insert(f.index.end(), {tr, bl, br});
    }
  if (!f.depth.empty()) {
    auto [lo, hi] = std::minmax_element(f.depth.begin(), f.depth.end());
    f.depth_min = *lo;
    f.depth_max = *hi;
  }
  f.information["time"] = detail::format_double(s.time);
  f.information["step"] = std::to_string(s.step);
  f.information["nrows"] = std::to_string(rows);
  f.information["ncols"] = std::to_string(cols);
  if (!t.crs_label.empty()) f.information["crs_label"] = t.crs_label;
  return f;
}

// Linear map of [min, max] onto [0, palette - 1], rounding down and clamping.
inline std::size_t depth_to_color_index(double depth, double min, double max, std::size_t palette) {
  if (palette < 2 || !(max > min)) return 0;
  const double u = (depth - min) / (max - min);
  if (!(u > 0.0)) return 0;
  if (u >= 1.0) return palette - 1;
  const auto k = static_cast<std::size_t>(std::floor(u * static_cast<double>(palette - 1)));
  return std::min(k, palette - 1);
}

inline void check_frame(const FloodFrame& f) {
  if (f.vertex.size() % 3 != 0) throw Error("frame vertex list length is not a multiple of 3");
  if (f.index.size() % 3 != 0) throw Error("frame index list length is not a multiple of 3");
  if (f.depth.size() != f.vertex_count()) throw Error("frame depth list length differs from vertex count");
  for (auto k : f.index)
    if (k >= f.vertex_count()) throw Error("frame index out of range");
}

inline nlohmann::ordered_json frame_to_json(const FloodFrame& f) {
  check_frame(f);
  auto finite = [](double v, const char* field) {
    if (!std::isfinite(v)) throw Error(std::string("non-finite value in frame field '") + field + "'");
    return v;
  };
  nlohmann::ordered_json j;
  j["xllcorner"] = finite(f.xllcorner, "xllcorner");
  j["yllcorner"] = finite(f.yllcorner, "yllcorner");
  j["cellsize"] = finite(f.cellsize, "cellsize");
  auto vertex = nlohmann::ordered_json::array();
  for (double v : f.vertex) vertex.push_back(finite(v, "vertex"));
  j["vertex"] = std::move(vertex);
  j["index"] = f.index;
  auto depths = nlohmann::ordered_json::array();
  for (double d : f.depth) depths.push_back(finite(d, "depth"));
  j["depth"] = nlohmann::ordered_json::array(
      {std::move(depths), {finite(f.depth_min, "depth"), finite(f.depth_max, "depth")}});
  nlohmann::ordered_json info = nlohmann::ordered_json::object();
  for (const auto& [k, v] : f.information) info[k] = v;
  j["information"] = std::move(info);
  return j;
}

inline std::string serialize_frame(const FloodFrame& f) { return frame_to_json(f).dump(); }

template <typename Json>
FloodFrame frame_from_json(const Json& j) {
  FloodFrame f;
  try {
    f.xllcorner = j.at("xllcorner").template get<double>();
    f.yllcorner = j.at("yllcorner").template get<double>();
    f.cellsize = j.at("cellsize").template get<double>();
    f.vertex = j.at("vertex").template get<std::vector<double>>();
    f.index = j.at("index").template get<std::vector<std::uint32_t>>();
    const auto& depth = j.at("depth");
    if (!depth.is_array() || depth.size() != 2 || depth[1].size() != 2)
      throw ParseError("frame 'depth' must be [[...], [min, max]]");
    f.depth = depth[0].template get<std::vector<double>>();
    f.depth_min = depth[1][0].template get<double>();
    f.depth_max = depth[1][1].template get<double>();
    if (j.contains("information"))
      for (auto it = j["information"].begin(); it != j["information"].end(); ++it)
        f.information[it.key()] = it.value().template get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed frame: ") + e.what());
  }
  check_frame(f);
  return f;
}

inline FloodFrame parse_frame(const std::string& text) {
  try {
    return frame_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("unparsable frame: ") + e.what());
  }
}

// Batch output file name for a snapshot.
inline std::string frame_file_name(std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06zu.json", step);
  return buf;
}

// Depth raster (row-major, zero where no vertex) recovered from a frame whose
// information carries nrows/ncols.
inline std::vector<double> frame_depth_grid(const FloodFrame& f, std::size_t nrows, std::size_t ncols) {
  std::vector<double> grid(nrows * ncols, 0.0);
  for (std::size_t k = 0; k < f.vertex_count(); ++k) {
    const double x = f.vertex[3 * k], y = f.vertex[3 * k + 1];
    const auto col = static_cast<long long>(std::floor(x / f.cellsize));
    const auto row_from_bottom = static_cast<long long>(std::floor(y / f.cellsize));
    const long long row = static_cast<long long>(nrows) - 1 - row_from_bottom;
    if (col < 0 || row < 0 || col >= static_cast<long long>(ncols) || row >= static_cast<long long>(nrows)) continue;
    grid[static_cast<std::size_t>(row) * ncols + static_cast<std::size_t>(col)] = f.depth[k];
  }
  return grid;
}

}  // namespace cafl
