#pragma once

// Simulation configuration, its JSON form and validation against a terrain.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cafl/error.hpp"
#include "cafl/raster_io.hpp"

namespace cafl {

enum class Policy { serial, static_blocks, dynamic };

inline const char* to_string(Policy p) {
  switch (p) {
    case Policy::serial: return "serial";
    case Policy::static_blocks: return "static";
    case Policy::dynamic: return "dynamic";
  }
  return "serial";
}

inline std::optional<Policy> parse_policy(const std::string& s) {
  if (s == "serial") return Policy::serial;
  if (s == "static") return Policy::static_blocks;
  if (s == "dynamic") return Policy::dynamic;
  return std::nullopt;
}

enum class InletMode { fixed_depth, hydrograph };

struct InletCell {
  std::size_t row = 0;
  std::size_t col = 0;
  InletMode mode = InletMode::fixed_depth;
};

struct HydrographPoint {
  double time = 0.0;       // s
  double discharge = 0.0;  // m^3/s
};

struct SimConfig {
  double dt = 0.1;
  double gravity = 9.81;
  double duration = 1.0;
  double snapshot_interval = 0.1;
  std::vector<InletCell> inlet_cells;
  double inlet_depth = 0.0;
  std::vector<HydrographPoint> hydrograph;
  std::optional<double> total_discharge;  // m^3 inflow budget
  double dry_threshold = 1e-4;
  bool wet_rule_on = true;
  bool flux_limiter_on = true;
  // Abort when dt * sqrt(2 g d_max) / cellsize exceeds this.
  double courant_limit = 1.0;
  Policy scheduling = Policy::serial;
  unsigned threads = 1;
  std::size_t block_size = 0;  // 0 = auto-tune

  std::size_t steps_total() const { return static_cast<std::size_t>(std::llround(std::ceil(duration / dt - 1e-9))); }
  std::size_t snapshot_every() const {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(snapshot_interval / dt)));
  }
};

// Piecewise-linear discharge; zero outside the breakpoint span.
inline double hydrograph_discharge(const std::vector<HydrographPoint>& h, double t) {
  if (h.empty()) return 0.0;
  if (h.size() == 1) return t >= h.front().time ? h.front().discharge : 0.0;
  if (t < h.front().time || t > h.back().time) return 0.0;
  for (std::size_t k = 1; k < h.size(); ++k) {
    if (t <= h[k].time) {
      const auto& a = h[k - 1];
      const auto& b = h[k];
      const double w = (t - a.time) / (b.time - a.time);
      return a.discharge + w * (b.discharge - a.discharge);
    }
  }
  return h.back().discharge;
}

inline double peak_flow(const std::vector<HydrographPoint>& h) {
  double q = 0.0;
  for (const auto& p : h) q = std::max(q, p.discharge);
  return q;
}

// Time-weighted mean over the breakpoint span; the single value for one point.
inline double mean_discharge(const std::vector<HydrographPoint>& h) {
  if (h.empty()) return 0.0;
  if (h.size() == 1) return h.front().discharge;
  double area = 0.0;
  for (std::size_t k = 1; k < h.size(); ++k)
    area += 0.5 * (h[k].discharge + h[k - 1].discharge) * (h[k].time - h[k - 1].time);
  return area / (h.back().time - h.front().time);
}

inline double drainage_time(const SimConfig& c) {
  if (c.hydrograph.empty()) return 0.0;
  if (c.total_discharge) {
    const double q = mean_discharge(c.hydrograph);
    return q > 0.0 ? *c.total_discharge / q : 0.0;
  }
  return c.hydrograph.back().time;
}

// Field-level validation. Returns an empty list when the config is usable on `terrain`.
inline std::vector<FieldIssue> validate(const SimConfig& c, const TerrainGrid& terrain) {
  std::vector<FieldIssue> out;
  auto bad = [&](std::string f, std::string m) { out.push_back({std::move(f), std::move(m)}); };
  if (!(c.dt > 0.0) || !std::isfinite(c.dt)) bad("dt", "must be > 0");
  if (!(c.gravity > 0.0)) bad("gravity", "must be > 0");
  if (!(c.duration >= 0.0) || !std::isfinite(c.duration)) bad("duration", "must be >= 0");
  if (!(c.snapshot_interval > 0.0)) {
    bad("snapshot_interval", "must be > 0");
  } else if (c.dt > 0.0) {
    const double k = c.snapshot_interval / c.dt;
    if (std::abs(k - std::round(k)) > 1e-9 * std::max(1.0, k) || std::round(k) < 1)
      bad("snapshot_interval", "must be an integer multiple of dt");
  }
  if (!(c.dry_threshold >= 0.0)) bad("dry_threshold", "must be >= 0");
  if (!(c.courant_limit > 0.0)) bad("courant_limit", "must be > 0");
  if (c.threads < 1) bad("threads", "must be >= 1");
  if (!(c.inlet_depth >= 0.0)) bad("inlet_depth", "must be >= 0");
  if (c.total_discharge && !(*c.total_discharge >= 0.0)) bad("total_discharge", "must be >= 0");

  bool any_hydro = false;
  for (std::size_t k = 0; k < c.inlet_cells.size(); ++k) {
    const auto& in = c.inlet_cells[k];
    const std::string f = "inlet_cells[" + std::to_string(k) + "]";
    if (in.row >= terrain.rows() || in.col >= terrain.cols()) {
      bad(f, "outside the grid (" + std::to_string(terrain.rows()) + " rows x " +
                 std::to_string(terrain.cols()) + " cols)");
    } else if (!terrain.valid(in.row, in.col)) {
      bad(f, "lies on an invalid (nodata) cell");
    }
    if (in.mode == InletMode::hydrograph) any_hydro = true;
  }
  if (any_hydro && c.hydrograph.empty()) bad("hydrograph", "empty while an inlet uses hydrograph mode");
  for (std::size_t k = 0; k < c.hydrograph.size(); ++k) {
    const std::string f = "hydrograph[" + std::to_string(k) + "]";
    if (!(c.hydrograph[k].discharge >= 0.0)) bad(f, "discharge must be >= 0");
    if (k > 0 && !(c.hydrograph[k].time > c.hydrograph[k - 1].time))
      bad(f, "times must be strictly increasing");
  }
  return out;
}

inline void validate_or_throw(const SimConfig& c, const TerrainGrid& terrain) {
  auto issues = validate(c, terrain);
  if (!issues.empty()) throw ValidationError(std::move(issues));
}

// JSON keys are the field names. Missing keys keep their defaults; `base`
// lets a file's values be layered over defaults or over another config.
inline SimConfig config_from_json(const nlohmann::json& j, SimConfig c = {}) {
  if (!j.is_object()) throw ParseError("configuration must be a JSON object");
  auto num = [&](const char* key, double& field) {
    if (!j.contains(key)) return;
    if (!j[key].is_number()) throw ParseError(std::string("config field '") + key + "' must be a number");
    field = j[key].get<double>();
  };
  try {
    num("dt", c.dt);
    num("gravity", c.gravity);
    num("duration", c.duration);
    num("snapshot_interval", c.snapshot_interval);
    num("inlet_depth", c.inlet_depth);
    num("dry_threshold", c.dry_threshold);
    num("courant_limit", c.courant_limit);
    if (j.contains("total_discharge") && !j["total_discharge"].is_null())
      c.total_discharge = j["total_discharge"].get<double>();
    if (j.contains("wet_rule_on")) c.wet_rule_on = j["wet_rule_on"].get<bool>();
    if (j.contains("flux_limiter_on")) c.flux_limiter_on = j["flux_limiter_on"].get<bool>();
    if (j.contains("threads")) {
      const auto t = j["threads"].get<long long>();
      if (t < 1) throw ParseError("config field 'threads' must be >= 1");
      c.threads = static_cast<unsigned>(t);
    }
    if (j.contains("block_size")) {
      const auto b = j["block_size"].get<long long>();
      if (b < 0) throw ParseError("config field 'block_size' must be >= 0");
      c.block_size = static_cast<std::size_t>(b);
    }
    if (j.contains("scheduling")) {
      auto p = parse_policy(j["scheduling"].get<std::string>());
      if (!p) throw ParseError("config field 'scheduling' must be serial, static or dynamic");
      c.scheduling = *p;
    }
    if (j.contains("inlet_cells")) {
      c.inlet_cells.clear();
      for (const auto& e : j["inlet_cells"]) {
        InletCell in;
        const auto row = e.at("row").get<long long>();
        const auto col = e.at("col").get<long long>();
        if (row < 0 || col < 0) throw ParseError("inlet row/col must be non-negative");
        in.row = static_cast<std::size_t>(row);
        in.col = static_cast<std::size_t>(col);
        const std::string mode = e.value("mode", "fixed_depth");
        if (mode == "fixed_depth") in.mode = InletMode::fixed_depth;
        else if (mode == "hydrograph") in.mode = InletMode::hydrograph;
        else throw ParseError("inlet mode must be fixed_depth or hydrograph");
        c.inlet_cells.push_back(in);
      }
    }
    if (j.contains("hydrograph")) {
      c.hydrograph.clear();
      for (const auto& e : j["hydrograph"]) {
        if (e.is_array() && e.size() == 2) c.hydrograph.push_back({e[0].get<double>(), e[1].get<double>()});
        else c.hydrograph.push_back({e.at("time").get<double>(), e.at("discharge").get<double>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad configuration value: ") + e.what());
  }
  return c;
}

inline nlohmann::ordered_json config_to_json(const SimConfig& c) {
  nlohmann::ordered_json j;
  j["dt"] = c.dt;
  j["gravity"] = c.gravity;
  j["duration"] = c.duration;
  j["snapshot_interval"] = c.snapshot_interval;
  auto inlets = nlohmann::ordered_json::array();
  for (const auto& in : c.inlet_cells)
    inlets.push_back({{"row", in.row},
                      {"col", in.col},
                      {"mode", in.mode == InletMode::fixed_depth ? "fixed_depth" : "hydrograph"}});
  j["inlet_cells"] = inlets;
  j["inlet_depth"] = c.inlet_depth;
  auto hydro = nlohmann::ordered_json::array();
  for (const auto& p : c.hydrograph) hydro.push_back({p.time, p.discharge});
  j["hydrograph"] = hydro;
  j["total_discharge"] = c.total_discharge ? nlohmann::ordered_json(*c.total_discharge) : nullptr;
  j["dry_threshold"] = c.dry_threshold;
  j["wet_rule_on"] = c.wet_rule_on;
  j["flux_limiter_on"] = c.flux_limiter_on;
  j["courant_limit"] = c.courant_limit;
  j["scheduling"] = to_string(c.scheduling);
  j["threads"] = c.threads;
  j["block_size"] = c.block_size;
  return j;
}

inline SimConfig load_config_file(const std::string& path, SimConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  return config_from_json(j, std::move(base));
}

}  // namespace cafl
