// Writes the bundled fixtures: a 50x50 valley dataset with roughness,
// scenario config, features and dataset manifest, plus the small raster pair
// behind the golden frame.
//
//   make_fixtures <fixtures-dir>

#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "cafl/frames.hpp"
#include "cafl/raster_io.hpp"
#include "cafl/synthetic.hpp"

namespace fs = std::filesystem;
using namespace cafl;

namespace {

void write_json(const fs::path& p, const nlohmann::ordered_json& j) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << j.dump(2) << '\n';
}

nlohmann::ordered_json box(const std::string& id, const std::string& kind, double x0, double y0, double x1,
                           double y1) {
  return {{"type", "Feature"},
          {"id", id},
          {"properties", {{"kind", kind}}},
          {"geometry",
           {{"type", "Polygon"}, {"coordinates", {{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}}}}}}};
}

void valley(const fs::path& dir) {
  fs::create_directories(dir);
  const double x0 = 500000.0, y0 = 4100000.0, cs = 10.0;
  TerrainGrid t = synthetic::valley(50, 50, cs, 0.01, 0.05, 0.035);
  t.header.xllcorner = x0;
  t.header.yllcorner = y0;
  // a notch of nodata in one corner exercises closed faces
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) t.elevation[r * 50 + c] = t.header.nodata_value;
  write_ascii_grid_file(t.elevation_layer(), (dir / "valley.asc").string());

  RasterLayer n{t.header, std::vector<double>(t.elevation.size(), 0.06)};
  for (std::size_t r = 0; r < 50; ++r)
    for (std::size_t c = 22; c <= 27; ++c) n.values[r * 50 + c] = 0.03;
  for (std::size_t i = 0; i < n.values.size(); ++i)
    if (!t.valid(i)) n.values[i] = t.header.nodata_value;
  write_ascii_grid_file(n, (dir / "valley_n.asc").string());

  nlohmann::ordered_json cfg;
  cfg["dt"] = 0.5;
  cfg["duration"] = 300.0;
  cfg["snapshot_interval"] = 30.0;
  cfg["inlet_cells"] = {{{"row", 3}, {"col", 24}, {"mode", "hydrograph"}},
                        {{"row", 3}, {"col", 25}, {"mode", "hydrograph"}}};
  cfg["hydrograph"] = {{{"time", 0.0}, {"discharge", 2.0}},
                       {{"time", 60.0}, {"discharge", 20.0}},
                       {{"time", 240.0}, {"discharge", 4.0}}};
  cfg["total_discharge"] = 3000.0;
  cfg["dry_threshold"] = 1e-4;
  cfg["wet_rule_on"] = true;
  cfg["flux_limiter_on"] = true;
  cfg["scheduling"] = "serial";
  cfg["threads"] = 1;
  write_json(dir / "valley.json", cfg);

  nlohmann::ordered_json f;
  f["type"] = "FeatureCollection";
  const double top = y0 + 500.0;
  f["features"] = {
      box("house_floor_a", "building", x0 + 235, top - 415, x0 + 265, top - 385),
      box("house_floor_b", "building", x0 + 240, top - 475, x0 + 260, top - 455),
      box("house_bank", "building", x0 + 330, top - 300, x0 + 360, top - 270),
      box("barn_high", "building", x0 + 20, top - 200, x0 + 60, top - 160),
      box("pump_station", "infrastructure", x0 + 215, top - 495, x0 + 235, top - 475),
      box("far_away", "building", x0 + 5000, y0 + 5000, x0 + 5010, y0 + 5010),
      {{"type", "Feature"},
       {"id", "valley_road"},
       {"properties", {{"kind", "road"}}},
       {"geometry", {{"type", "LineString"}, {"coordinates", {{x0 + 5, top - 445}, {x0 + 495, top - 440}}}}}},
      {{"type", "Feature"},
       {"id", "ridge_track"},
       {"properties", {{"kind", "road"}}},
       {"geometry", {{"type", "LineString"}, {"coordinates", {{x0 + 15, top - 50}, {x0 + 15, top - 450}}}}}},
  };
  write_json(dir / "valley_features.geojson", f);

  write_json(dir / "valley.dataset.json", {{"id", "valley"},
                                          {"dem", "valley.asc"},
                                          {"roughness", "valley_n.asc"},
                                          {"crs_label", "EPSG:32633"}});
}

void frames(const fs::path& dir) {
  fs::create_directories(dir);
  TerrainGrid t = synthetic::make(6, 6, 2.0, 0.03, [](std::size_t r, std::size_t c) { return 0.25 * (r + c); });
  t.header.xllcorner = 100.0;
  t.header.yllcorner = 200.0;
  write_ascii_grid_file(t.elevation_layer(), (dir / "patch_dem.asc").string());
  RasterLayer d{t.header, std::vector<double>(36, 0.0)};
  d.at(2, 2) = 1.0;
  d.at(2, 3) = 0.5;
  d.at(3, 2) = 0.25;
  d.at(3, 3) = 0.75;
  write_ascii_grid_file(d, (dir / "patch_depth.asc").string());

  FloodState s(6, 6);
  s.depth = d.values;
  t.crs_label.clear();
  std::ofstream(dir / "patch_golden.json", std::ios::binary | std::ios::trunc)
      << serialize_frame(build_frame(s, t, 1e-4)) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixtures <fixtures-dir>\n";
    return 1;
  }
  const fs::path root = argv[1];
  valley(root / "valley");
  frames(root / "frames");
  write_json(root / "server.json", {{"host", "127.0.0.1"}, {"port", 8080}, {"dataset_dir", "valley"}, {"max_jobs", 1}});
  std::cout << "fixtures written to " << root.string() << '\n';
  return 0;
}
