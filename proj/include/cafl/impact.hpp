#pragma once

// Inundation impact on vector features: which buildings, roads and
// infrastructure lie in wet cells, and how deep.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cafl/features.hpp"
#include "cafl/raster_io.hpp"

namespace cafl {

struct CellSet {
  std::vector<std::size_t> cells;  // sorted linear indices
  bool degenerate = false;         // zero-area polygon / zero-length line
};

namespace detail {

// x where edge a-b crosses the horizontal line y, for edges that straddle it.
inline double crossing_x(const Point2& a, const Point2& b, double y) {
  return a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y);
}

inline double polygon_area(const std::vector<std::vector<Point2>>& rings) {
  double a = 0.0;
  for (const auto& ring : rings)
    for (std::size_t k = 0; k + 1 < ring.size(); ++k) a += ring[k].x * ring[k + 1].y - ring[k + 1].x * ring[k].y;
  return 0.5 * a;
}

inline CellSet rasterize_polygon(const Feature& f, const GridHeader& h) {
  CellSet out;
  if (f.rings.empty() || polygon_area({f.rings[0]}) == 0.0) {
    out.degenerate = true;
    return out;
  }
  double ymin = f.rings[0][0].y, ymax = ymin;
  for (const auto& ring : f.rings)
    for (const auto& p : ring) {
      ymin = std::min(ymin, p.y);
      ymax = std::max(ymax, p.y);
    }
  std::vector<double> xs;
  for (std::size_t row = 0; row < h.nrows; ++row) {
    const double y = h.cell_center_y(row);
    if (y < ymin || y > ymax) continue;
    xs.clear();
    for (const auto& ring : f.rings)
      for (std::size_t k = 0; k + 1 < ring.size(); ++k) {
        const Point2& a = ring[k];
        const Point2& b = ring[k + 1];
        if ((a.y > y) != (b.y > y)) xs.push_back(crossing_x(a, b, y));
      }
    std::sort(xs.begin(), xs.end());
    // A centre x is inside when an odd number of crossings lie strictly to its right.
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      const double lo = xs[xs.size() - 2 - k], hi = xs[xs.size() - 1 - k];
      // centres with lo <= x < hi have (k+1) crossings to the right, odd
      const double c_lo = std::ceil((lo - h.xllcorner) / h.cellsize - 0.5);
      const double c_hi = std::ceil((hi - h.xllcorner) / h.cellsize - 0.5);
      long long first = static_cast<long long>(std::max(0.0, c_lo));
      long long last = static_cast<long long>(std::min(static_cast<double>(h.ncols), c_hi));
      // guard against rounding in the index arithmetic
      while (first > 0 && h.cell_center_x(static_cast<std::size_t>(first - 1)) >= lo) --first;
      while (first < last && h.cell_center_x(static_cast<std::size_t>(first)) < lo) ++first;
      while (last < static_cast<long long>(h.ncols) && h.cell_center_x(static_cast<std::size_t>(last)) < hi) ++last;
      while (last > first && h.cell_center_x(static_cast<std::size_t>(last - 1)) >= hi) --last;
      for (long long c = first; c < last; ++c) out.cells.push_back(h.index(row, static_cast<std::size_t>(c)));
    }
  }
  std::sort(out.cells.begin(), out.cells.end());
  out.cells.erase(std::unique(out.cells.begin(), out.cells.end()), out.cells.end());
  return out;
}

// Amanatides-Woo traversal of one segment in grid units (x to the east from the
// west edge, y to the south from the north edge).
inline void traverse_segment(double x0, double y0, double x1, double y1, const GridHeader& h,
                             std::vector<std::size_t>& out) {
  const double dx = x1 - x0, dy = y1 - y0;
  long long cx = static_cast<long long>(std::floor(x0));
  long long cy = static_cast<long long>(std::floor(y0));
  const long long ex = static_cast<long long>(std::floor(x1));
  const long long ey = static_cast<long long>(std::floor(y1));
  const int sx = dx > 0 ? 1 : (dx < 0 ? -1 : 0);
  const int sy = dy > 0 ? 1 : (dy < 0 ? -1 : 0);
  const double inf = std::numeric_limits<double>::infinity();
  double tmax_x = sx ? ((sx > 0 ? std::floor(x0) + 1.0 : std::floor(x0)) - x0) / dx : inf;
  double tmax_y = sy ? ((sy > 0 ? std::floor(y0) + 1.0 : std::floor(y0)) - y0) / dy : inf;
  const double tdx = sx ? std::abs(1.0 / dx) : inf;
  const double tdy = sy ? std::abs(1.0 / dy) : inf;
  auto emit = [&] {
    if (cx >= 0 && cy >= 0 && cx < static_cast<long long>(h.ncols) && cy < static_cast<long long>(h.nrows))
      out.push_back(h.index(static_cast<std::size_t>(cy), static_cast<std::size_t>(cx)));
  };
  emit();
  const std::size_t max_iter = static_cast<std::size_t>(std::abs(ex - cx) + std::abs(ey - cy)) + 2;
  for (std::size_t it = 0; it < max_iter && (cx != ex || cy != ey); ++it) {
    if (tmax_x < tmax_y) {
      if (tmax_x > 1.0) break;
      cx += sx;
      tmax_x += tdx;
    } else {
      if (tmax_y > 1.0) break;
      cy += sy;
      tmax_y += tdy;
    }
    emit();
  }
}

inline CellSet rasterize_polyline(const Feature& f, const GridHeader& h) {
  CellSet out;
  double length = 0.0;
  const double ytop = h.yllcorner + static_cast<double>(h.nrows) * h.cellsize;
  for (const auto& line : f.rings)
    for (std::size_t k = 0; k + 1 < line.size(); ++k) {
      const Point2& a = line[k];
      const Point2& b = line[k + 1];
      const double seg = std::hypot(b.x - a.x, b.y - a.y);
      if (seg == 0.0) continue;
      length += seg;
      traverse_segment((a.x - h.xllcorner) / h.cellsize, (ytop - a.y) / h.cellsize, (b.x - h.xllcorner) / h.cellsize,
                       (ytop - b.y) / h.cellsize, h, out.cells);
    }
  if (length == 0.0) out.degenerate = true;
  std::sort(out.cells.begin(), out.cells.end());
  out.cells.erase(std::unique(out.cells.begin(), out.cells.end()), out.cells.end());
  return out;
}

}  // namespace detail

// Polygons: cells whose centres fall inside (even-odd over all rings).
// Polylines: every cell a segment passes through.
inline CellSet rasterize_feature(const Feature& f, const GridHeader& h) {
  return f.geometry == GeometryType::polygon ? detail::rasterize_polygon(f, h) : detail::rasterize_polyline(f, h);
}

struct DepthClasses {
  // Upper bin edges in metres; the last class is open-ended.
  std::vector<double> edges{0.5, 1.0, 2.0, 4.0};

  std::string label(double depth) const {
    double lo = 0.0;
    for (double e : edges) {
      if (depth < e) return detail::format_double(lo) + "-" + detail::format_double(e);
      lo = e;
    }
    return ">" + detail::format_double(lo);
  }
};

struct FeatureImpact {
  std::string id;
  FeatureKind kind = FeatureKind::building;
  bool affected = false;
  double max_depth = 0.0;
  double inundated_fraction = 0.0;
  std::string depth_class;
  bool out_of_extent = false;
  bool degenerate = false;
  std::size_t cell_count = 0;
  bool operator==(const FeatureImpact&) const = default;
};

struct KindSummary {
  std::size_t total = 0;
  std::size_t affected = 0;
  bool operator==(const KindSummary&) const = default;
};

struct ImpactReport {
  std::vector<FeatureImpact> features;
  std::map<std::string, KindSummary> summary;  // keyed by kind name
  double threshold = 0.05;
  std::vector<std::string> warnings;

  std::size_t affected_count() const {
    std::size_t n = 0;
    for (const auto& f : features) n += f.affected ? 1 : 0;
    return n;
  }
};

inline bool outside_extent(const Feature& f, const GridHeader& h) {
  const double x0 = h.xllcorner, y0 = h.yllcorner;
  const double x1 = x0 + static_cast<double>(h.ncols) * h.cellsize;
  const double y1 = y0 + static_cast<double>(h.nrows) * h.cellsize;
  bool first = true;
  double bx0 = 0, by0 = 0, bx1 = 0, by1 = 0;
  for (const auto& ring : f.rings)
    for (const auto& p : ring) {
      if (first) {
        bx0 = bx1 = p.x;
        by0 = by1 = p.y;
        first = false;
      }
      bx0 = std::min(bx0, p.x);
      bx1 = std::max(bx1, p.x);
      by0 = std::min(by0, p.y);
      by1 = std::max(by1, p.y);
    }
  return first || bx1 < x0 || bx0 > x1 || by1 < y0 || by0 > y1;
}

// `depth` is a row-major depth raster on `h` (a state's depth field or a
// snapshot raster). Nodata/negative depths count as dry.
inline ImpactReport assess(const std::vector<double>& depth, const GridHeader& h, const FeatureSet& features,
                           double affect_threshold = 0.05, const DepthClasses& classes = {}) {
  if (depth.size() != h.cell_count()) throw Error("depth raster does not match grid header");
  ImpactReport rep;
  rep.threshold = affect_threshold;
  for (const char* k : {"building", "road", "infrastructure"}) rep.summary[k] = {};
  for (const auto& f : features.features) {
    FeatureImpact fi;
    fi.id = f.id;
    fi.kind = f.kind;
    if (outside_extent(f, h)) {
      fi.out_of_extent = true;
    } else {
      const CellSet cs = rasterize_feature(f, h);
      fi.degenerate = cs.degenerate;
      if (cs.degenerate) rep.warnings.push_back("feature '" + f.id + "' has degenerate geometry");
      fi.cell_count = cs.cells.size();
      std::size_t wet = 0;
      for (std::size_t i : cs.cells) {
        const double d = depth[i] == h.nodata_value ? 0.0 : std::max(0.0, depth[i]);
        fi.max_depth = std::max(fi.max_depth, d);
        if (d > affect_threshold) ++wet;
      }
      if (!cs.cells.empty()) fi.inundated_fraction = static_cast<double>(wet) / static_cast<double>(cs.cells.size());
    }
    fi.affected = fi.max_depth > affect_threshold;
    fi.depth_class = classes.label(fi.max_depth);
    auto& sum = rep.summary[to_string(f.kind)];
    ++sum.total;
    if (fi.affected) ++sum.affected;
    rep.features.push_back(std::move(fi));
  }
  return rep;
}

inline void write_impact_csv(const ImpactReport& r, std::ostream& out) {
  out << "id,kind,affected,max_depth,fraction,class\n";
  for (const auto& f : r.features) {
    std::string id = f.id;
    if (id.find_first_of(",\"\n") != std::string::npos) {
      std::string q = "\"";
      for (char c : id) q += c == '"' ? std::string("\"\"") : std::string(1, c);
      id = q + "\"";
    }
    out << id << ',' << to_string(f.kind) << ',' << (f.affected ? "true" : "false") << ','
        << detail::format_double(f.max_depth) << ',' << detail::format_double(f.inundated_fraction) << ','
        << f.depth_class << '\n';
  }
}

// The input features with the impact attached to their properties.
inline nlohmann::ordered_json impact_geojson(const ImpactReport& r, const FeatureSet& features) {
  nlohmann::ordered_json fc;
  fc["type"] = "FeatureCollection";
  auto arr = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < features.features.size() && k < r.features.size(); ++k) {
    const Feature& f = features.features[k];
    const FeatureImpact& fi = r.features[k];
    nlohmann::ordered_json g;
    if (f.geometry == GeometryType::polygon) {
      g["type"] = "Polygon";
      auto rings = nlohmann::ordered_json::array();
      for (const auto& ring : f.rings) {
        auto pts = nlohmann::ordered_json::array();
        for (const auto& p : ring) pts.push_back({p.x, p.y});
        rings.push_back(std::move(pts));
      }
      g["coordinates"] = std::move(rings);
    } else {
      g["type"] = "LineString";
      auto pts = nlohmann::ordered_json::array();
      if (!f.rings.empty())
        for (const auto& p : f.rings[0]) pts.push_back({p.x, p.y});
      g["coordinates"] = std::move(pts);
    }
    nlohmann::ordered_json props;
    for (const auto& [key, v] : f.properties) props[key] = v;
    props["kind"] = to_string(fi.kind);
    props["affected"] = fi.affected;
    props["max_depth"] = fi.max_depth;
    props["inundated_fraction"] = fi.inundated_fraction;
    props["depth_class"] = fi.depth_class;
    props["out_of_extent"] = fi.out_of_extent;
    arr.push_back({{"type", "Feature"}, {"id", fi.id}, {"geometry", std::move(g)}, {"properties", std::move(props)}});
  }
  fc["features"] = std::move(arr);
  return fc;
}

}  // namespace cafl
