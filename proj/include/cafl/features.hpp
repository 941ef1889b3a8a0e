#pragma once

// Vector features (buildings, roads, infrastructure) loaded from a GeoJSON
// FeatureCollection. Coordinates are taken as-is in the grid's projected CRS.

#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cafl/error.hpp"

namespace cafl {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

enum class FeatureKind { building, road, infrastructure };

inline const char* to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::building: return "building";
    case FeatureKind::road: return "road";
    case FeatureKind::infrastructure: return "infrastructure";
  }
  return "building";
}

enum class GeometryType { polygon, polyline };

struct Feature {
  std::string id;
  FeatureKind kind = FeatureKind::building;
  GeometryType geometry = GeometryType::polygon;
  // Polygon: every ring closed (first == last); ring 0 is the shell, the even-odd
  // rule treats the rest as holes. Polyline: exactly one vertex list.
  std::vector<std::vector<Point2>> rings;
  std::map<std::string, std::string> properties;
};

struct FeatureSet {
  std::vector<Feature> features;
  std::size_t size() const noexcept { return features.size(); }
  bool empty() const noexcept { return features.empty(); }
};

namespace detail {

inline std::vector<Point2> parse_positions(const nlohmann::json& arr, const std::string& id) {
  if (!arr.is_array()) throw ParseError("feature '" + id + "': coordinates must be an array");
  std::vector<Point2> pts;
  pts.reserve(arr.size());
  for (const auto& p : arr) {
    if (!p.is_array() || p.size() < 2 || !p[0].is_number() || !p[1].is_number())
      throw ParseError("feature '" + id + "': malformed position");
    Point2 q{p[0].get<double>(), p[1].get<double>()};
    if (!std::isfinite(q.x) || !std::isfinite(q.y))
      throw ParseError("feature '" + id + "': non-finite coordinate");
    pts.push_back(q);
  }
  return pts;
}

inline std::vector<std::vector<Point2>> parse_polygon(const nlohmann::json& coords,
                                                      const std::string& id) {
  if (!coords.is_array()) throw ParseError("feature '" + id + "': polygon coordinates must be an array");
  std::vector<std::vector<Point2>> rings;
  for (const auto& ring : coords) {
    auto pts = parse_positions(ring, id);
    if (pts.empty()) continue;
    if (!(pts.front() == pts.back())) pts.push_back(pts.front());
    rings.push_back(std::move(pts));
  }
  return rings;
}

inline FeatureKind kind_for(const std::map<std::string, std::string>& props, GeometryType g) {
  if (auto it = props.find("kind"); it != props.end()) {
    if (it->second == "building") return FeatureKind::building;
    if (it->second == "road") return FeatureKind::road;
    if (it->second == "infrastructure") return FeatureKind::infrastructure;
  }
  return g == GeometryType::polygon ? FeatureKind::building : FeatureKind::road;
}

}  // namespace detail

// MultiPolygon / MultiLineString members become separate features with ids
// suffixed "_0", "_1", ...
inline FeatureSet load_geojson_features(std::istream& in) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("unparsable GeoJSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection")
    throw ParseError("GeoJSON document is not a FeatureCollection");
  FeatureSet set;
  const auto& feats = doc.contains("features") ? doc["features"] : nlohmann::json::array();
  if (!feats.is_array()) throw ParseError("'features' must be an array");

  std::size_t ordinal = 0;
  for (const auto& f : feats) {
    std::map<std::string, std::string> props;
    if (f.contains("properties") && f["properties"].is_object()) {
      for (auto it = f["properties"].begin(); it != f["properties"].end(); ++it)
        props[it.key()] = it.value().is_string() ? it.value().get<std::string>() : it.value().dump();
    }
    std::string id;
    if (f.contains("id")) id = f["id"].is_string() ? f["id"].get<std::string>() : f["id"].dump();
    else if (auto it = props.find("id"); it != props.end()) id = it->second;
    else id = "feature_" + std::to_string(ordinal);
    ++ordinal;

    if (!f.contains("geometry") || !f["geometry"].is_object())
      throw ParseError("feature '" + id + "': missing geometry");
    const auto& geom = f["geometry"];
    const std::string type = geom.value("type", "");
    const auto& coords = geom.contains("coordinates") ? geom["coordinates"] : nlohmann::json();

    auto push = [&](std::string fid, GeometryType g, std::vector<std::vector<Point2>> rings) {
      Feature feat;
      feat.id = std::move(fid);
      feat.geometry = g;
      feat.rings = std::move(rings);
      feat.properties = props;
      feat.kind = detail::kind_for(props, g);
      set.features.push_back(std::move(feat));
    };

    if (type == "Polygon") {
      push(id, GeometryType::polygon, detail::parse_polygon(coords, id));
    } else if (type == "MultiPolygon") {
      if (!coords.is_array()) throw ParseError("feature '" + id + "': malformed MultiPolygon");
      for (std::size_t k = 0; k < coords.size(); ++k)
        push(id + "_" + std::to_string(k), GeometryType::polygon, detail::parse_polygon(coords[k], id));
    } else if (type == "LineString") {
      push(id, GeometryType::polyline, {detail::parse_positions(coords, id)});
    } else if (type == "MultiLineString") {
      if (!coords.is_array()) throw ParseError("feature '" + id + "': malformed MultiLineString");
      for (std::size_t k = 0; k < coords.size(); ++k)
        push(id + "_" + std::to_string(k), GeometryType::polyline, {detail::parse_positions(coords[k], id)});
    } else {
      throw ParseError("feature '" + id + "': unsupported geometry type '" + type + "'");
    }
  }
  return set;
}

inline FeatureSet load_geojson_features_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open GeoJSON file '" + path + "'");
  return load_geojson_features(in);
}

}  // namespace cafl
