#pragma once

// Cellular-automaton shallow-water model.
//
// Staggered layout. For cell i = (row, col):
//   flux_x[i] is the single-width flux across the face between (row, col) and
//             (row, col + 1), positive towards col + 1;
//   flux_y[i] is the flux across the face between (row, col) and (row + 1, col),
//             positive towards row + 1.
// One step is: inlet injection, flux pass (reads depth at t, writes fluxes at
// t+1), depth pass (reads fluxes at t+1), optional wet/dry rule pass, ledger.
// Faces touching an invalid or out-of-grid cell carry no flux.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cafl/config.hpp"
#include "cafl/error.hpp"
#include "cafl/raster_io.hpp"
#include "cafl/scheduler.hpp"

namespace cafl {

struct FloodState {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> depth;
  std::vector<double> flux_x;
  std::vector<double> flux_y;
  double time = 0.0;
  std::size_t step = 0;

  FloodState() = default;
  FloodState(std::size_t r, std::size_t c)
      : rows(r), cols(c), depth(r * c, 0.0), flux_x(r * c, 0.0), flux_y(r * c, 0.0) {}

  std::size_t index(std::size_t row, std::size_t col) const noexcept { return row * cols + col; }

  std::vector<unsigned char> wet_mask(double dry_threshold) const {
    std::vector<unsigned char> m(depth.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = depth[i] > dry_threshold ? 1 : 0;
    return m;
  }
};

// Volume bookkeeping. volume_residual accumulates the water removed (positive)
// or created (negative) by depth clamping and the wet/dry rule, so that
// volume_in == volume_stored + volume_residual up to rounding.
struct MassLedger {
  double volume_initial = 0.0;  // water present at t = 0, counted as inflow
  double volume_in = 0.0;       // initial + inlet volume
  double volume_stored = 0.0;
  double volume_residual = 0.0;
  double clamp_volume = 0.0;    // water created by clamping negative depths
  double wetdry_volume = 0.0;   // net water removed by the wet/dry rule
  std::size_t clamp_events = 0;
  std::size_t wetdry_events = 0;
  std::size_t limiter_hits = 0;

  double inlet_volume() const noexcept { return volume_in - volume_initial; }
  double imbalance() const noexcept { return volume_in - volume_stored - volume_residual; }
  double relative_imbalance() const noexcept {
    const double scale = std::max({std::abs(volume_in), std::abs(volume_stored), 1e-300});
    return std::abs(imbalance()) / scale;
  }
};

// Read-only view of the fields the per-cell rules need.
struct FieldView {
  std::size_t rows = 0;
  std::size_t cols = 0;
  const double* elevation = nullptr;
  const double* roughness = nullptr;
  const unsigned char* valid = nullptr;
  const double* depth = nullptr;
  const double* flux_x = nullptr;
  const double* flux_y = nullptr;
};

struct StepParams {
  double dt = 0.1;
  double gravity = 9.81;
  double dx = 1.0;
  double dy = 1.0;
  double dry_threshold = 1e-4;
  bool limiter_on = true;

  static StepParams from(const SimConfig& c, const TerrainGrid& t) {
    return {c.dt, c.gravity, t.cellsize(), t.cellsize(), c.dry_threshold, c.flux_limiter_on};
  }
};

namespace rules {

inline bool face_open_x(const FieldView& v, std::size_t i, std::size_t col) noexcept {
  return col + 1 < v.cols && v.valid[i] && v.valid[i + 1];
}
inline bool face_open_y(const FieldView& v, std::size_t i, std::size_t row) noexcept {
  return row + 1 < v.rows && v.valid[i] && v.valid[i + v.cols];
}

// Face velocity: flux over face depth, zero on dry or closed faces.
inline double velocity_x(const FieldView& v, const StepParams& p, std::size_t row, std::size_t col) noexcept {
  const std::size_t i = row * v.cols + col;
  if (!face_open_x(v, i, col)) return 0.0;
  const double h = 0.5 * (v.depth[i] + v.depth[i + 1]);
  return h > p.dry_threshold ? v.flux_x[i] / h : 0.0;
}
inline double velocity_y(const FieldView& v, const StepParams& p, std::size_t row, std::size_t col) noexcept {
  const std::size_t i = row * v.cols + col;
  if (!face_open_y(v, i, row)) return 0.0;
  const double h = 0.5 * (v.depth[i] + v.depth[i + v.cols]);
  return h > p.dry_threshold ? v.flux_y[i] / h : 0.0;
}

// Mean of the four y-face velocities around the x-face east of (row, col).
inline double cross_velocity_at_x_face(const FieldView& v, const StepParams& p, std::size_t row,
                                       std::size_t col) noexcept {
  double s = velocity_y(v, p, row, col) + velocity_y(v, p, row, col + 1);
  if (row > 0) s += velocity_y(v, p, row - 1, col) + velocity_y(v, p, row - 1, col + 1);
  return 0.25 * s;
}
inline double cross_velocity_at_y_face(const FieldView& v, const StepParams& p, std::size_t row,
                                       std::size_t col) noexcept {
  double s = velocity_x(v, p, row, col) + velocity_x(v, p, row + 1, col);
  if (col > 0) s += velocity_x(v, p, row, col - 1) + velocity_x(v, p, row + 1, col - 1);
  return 0.25 * s;
}

struct FaceResult {
  double flux = 0.0;
  bool limited = false;
};

// Momentum update on one face. `near` is the cell owning the face, `far` the
// neighbour across it, `spacing` the distance between their centres.
inline FaceResult face_flux(double flux, double d_near, double d_far, double z_near, double z_far,
                            double roughness, double cross_velocity, double spacing,
                            const StepParams& p) noexcept {
  const double dsum = d_near + d_far;
  const double raw = flux - p.gravity * p.dt * dsum * (z_far - z_near) / spacing;
  double next = raw;
  const double h = 0.5 * dsum;
  if (h > p.dry_threshold) {
    const double u = flux / h;
    const double speed = std::sqrt(u * u + cross_velocity * cross_velocity);
    const double friction = p.gravity * roughness * roughness * u * p.dt * speed / std::cbrt(h);
    next = raw - friction;
    // friction may slow the flow to rest but never reverse it
    if (next * raw <= 0.0) next = 0.0;
  }
  FaceResult out{next, false};
  if (p.limiter_on) {
    const double cap = (next > 0.0 ? d_near : d_far) * spacing / p.dt;
    if (std::abs(next) > cap) {
      out.flux = std::copysign(cap, next);
      out.limited = true;
    }
  }
  return out;
}

inline FaceResult flux_x_at(const FieldView& v, const StepParams& p, std::size_t row, std::size_t col) noexcept {
  const std::size_t i = row * v.cols + col;
  if (!face_open_x(v, i, col)) return {};
  const double dn = v.depth[i], df = v.depth[i + 1];
  const double cross = cross_velocity_at_x_face(v, p, row, col);
  return face_flux(v.flux_x[i], dn, df, dn + v.elevation[i], df + v.elevation[i + 1], v.roughness[i], cross,
                   p.dx, p);
}

inline FaceResult flux_y_at(const FieldView& v, const StepParams& p, std::size_t row, std::size_t col) noexcept {
  const std::size_t i = row * v.cols + col;
  if (!face_open_y(v, i, row)) return {};
  const std::size_t j = i + v.cols;
  const double dn = v.depth[i], df = v.depth[j];
  const double cross = cross_velocity_at_y_face(v, p, row, col);
  return face_flux(v.flux_y[i], dn, df, dn + v.elevation[i], df + v.elevation[j], v.roughness[i], cross,
                   p.dy, p);
}

// Continuity update from the new fluxes. Unclamped.
inline double depth_at(double depth, const double* fx_new, const double* fy_new, std::size_t cols,
                       std::size_t row, std::size_t col, const StepParams& p) noexcept {
  const std::size_t i = row * cols + col;
  const double west = col > 0 ? fx_new[i - 1] : 0.0;
  const double north = row > 0 ? fy_new[i - cols] : 0.0;
  return depth - p.dt * (fx_new[i] - west) / p.dx - p.dt * (fy_new[i] - north) / p.dy;
}

// Wet cells in the Moore ring of (row, col).
inline int wet_neighbours(const double* depth, const unsigned char* valid, std::size_t rows, std::size_t cols,
                          std::size_t row, std::size_t col, double dry_threshold) noexcept {
  int n = 0;
  const std::size_t r0 = row > 0 ? row - 1 : 0, r1 = std::min(row + 1, rows - 1);
  const std::size_t c0 = col > 0 ? col - 1 : 0, c1 = std::min(col + 1, cols - 1);
  for (std::size_t r = r0; r <= r1; ++r)
    for (std::size_t c = c0; c <= c1; ++c) {
      if (r == row && c == col) continue;
      const std::size_t k = r * cols + c;
      if (valid[k] && depth[k] > dry_threshold) ++n;
    }
  return n;
}

// Depth a forced-wet cell is raised to: the smallest value the wet predicate accepts.
inline double wet_floor(double dry_threshold) noexcept {
  return std::nextafter(dry_threshold, std::numeric_limits<double>::infinity());
}

}  // namespace rules

// ---------------------------------------------------------------------------
// Per-cell operations on whole states. The engine runs the same rules in bulk.

inline FieldView view_of(const FloodState& s, const TerrainGrid& t, const std::vector<unsigned char>& valid) {
  return {s.rows, s.cols, t.elevation.data(), t.roughness.data(), valid.data(),
          s.depth.data(), s.flux_x.data(), s.flux_y.data()};
}

struct CellFlux {
  double flux_x = 0.0;
  double flux_y = 0.0;
};

inline CellFlux compute_flux(const FloodState& s, const TerrainGrid& t, const SimConfig& c, std::size_t row,
                             std::size_t col) {
  const auto valid = t.valid_mask();
  const auto v = view_of(s, t, valid);
  const auto p = StepParams::from(c, t);
  if (!t.valid(row, col)) return {};
  return {rules::flux_x_at(v, p, row, col).flux, rules::flux_y_at(v, p, row, col).flux};
}

struct DepthUpdate {
  double depth = 0.0;
  double clamped = 0.0;  // amount added to lift a negative result to zero
};

// `s` holds depths at t and fluxes already advanced to t+1.
inline DepthUpdate update_depth(const FloodState& s, const TerrainGrid& t, const SimConfig& c, std::size_t row,
                                std::size_t col) {
  const auto p = StepParams::from(c, t);
  if (!t.valid(row, col)) return {};
  const double d = rules::depth_at(s.depth[s.index(row, col)], s.flux_x.data(), s.flux_y.data(), s.cols, row,
                                   col, p);
  if (d < 0.0) return {0.0, -d};
  return {d, 0.0};
}

enum class WetDryChange { none, forced_wet, forced_dry };

struct WetDryOutcome {
  WetDryChange change = WetDryChange::none;
  double depth = 0.0;
  double volume_removed = 0.0;  // negative when water was added
};

// Applies the neighbourhood wet/dry rule to one cell of `s` and charges the
// volume change to `ledger`.
inline WetDryOutcome apply_wet_dry_rule(FloodState& s, const TerrainGrid& t, const SimConfig& c,
                                        std::size_t row, std::size_t col, MassLedger& ledger) {
  const std::size_t i = s.index(row, col);
  WetDryOutcome out{WetDryChange::none, s.depth[i], 0.0};
  if (!c.wet_rule_on || !t.valid(i)) return out;
  const auto valid = t.valid_mask();
  const int n = rules::wet_neighbours(s.depth.data(), valid.data(), s.rows, s.cols, row, col, c.dry_threshold);
  const double d = s.depth[i];
  if (d <= c.dry_threshold && n > 7) {
    out.change = WetDryChange::forced_wet;
    out.depth = rules::wet_floor(c.dry_threshold);
  } else if (d > c.dry_threshold && n < 2) {
    out.change = WetDryChange::forced_dry;
    out.depth = 0.0;
  } else {
    return out;
  }
  out.volume_removed = (d - out.depth) * t.cell_area();
  s.depth[i] = out.depth;
  ledger.volume_residual += out.volume_removed;
  ledger.wetdry_volume += out.volume_removed;
  ++ledger.wetdry_events;
  ledger.volume_stored -= out.volume_removed;
  return out;
}

// Adds inlet water for the step starting at time t. Returns the volume added.
inline double inject_inlets(FloodState& s, const SimConfig& c, double cell_area, double t, MassLedger& ledger) {
  if (c.inlet_cells.empty()) return 0.0;
  double remaining = std::numeric_limits<double>::infinity();
  if (c.total_discharge) remaining = std::max(0.0, *c.total_discharge - ledger.inlet_volume());
  std::size_t n_hydro = 0;
  for (const auto& in : c.inlet_cells) n_hydro += in.mode == InletMode::hydrograph ? 1 : 0;
  const double q = n_hydro ? hydrograph_discharge(c.hydrograph, t) : 0.0;

  double added = 0.0;
  for (const auto& in : c.inlet_cells) {
    double& d = s.depth[s.index(in.row, in.col)];
    const bool fixed = in.mode == InletMode::fixed_depth;
    double dv = fixed ? (c.inlet_depth - d) * cell_area : q * c.dt / static_cast<double>(n_hydro);
    const bool capped = dv > remaining;
    if (capped) dv = remaining;
    if (dv == 0.0) continue;
    if (fixed && !capped) d = c.inlet_depth;
    else d += dv / cell_area;
    if (dv > 0.0) remaining -= dv;
    added += dv;
  }
  ledger.volume_in += added;
  ledger.volume_stored += added;
  return added;
}

struct InitialState {
  FloodState state;
  MassLedger ledger;
  double peak_flow = 0.0;
  double drainage_time = 0.0;
  std::vector<std::string> warnings;
};

// Validates `c` against `t` and builds the t = 0 state.
inline InitialState initialize(const TerrainGrid& t, const SimConfig& c) {
  validate_or_throw(c, t);
  InitialState init;
  init.state = FloodState(t.rows(), t.cols());
  for (const auto& in : c.inlet_cells)
    if (in.mode == InletMode::fixed_depth) init.state.depth[init.state.index(in.row, in.col)] = c.inlet_depth;
  double stored = 0.0;
  for (double d : init.state.depth) stored += d;
  stored *= t.cell_area();
  init.ledger.volume_initial = stored;
  init.ledger.volume_in = stored;
  init.ledger.volume_stored = stored;
  init.peak_flow = peak_flow(c.hydrograph);
  init.drainage_time = drainage_time(c);

  const double d_expected = std::max(c.inlet_depth, 0.0);
  if (d_expected > 0.0) {
    const double dt_max = t.cellsize() / std::sqrt(c.gravity * d_expected);
    if (c.dt > dt_max)
      init.warnings.push_back("dt " + detail::format_double(c.dt) + " s exceeds the CFL advisory " +
                              detail::format_double(dt_max) + " s for depth " + detail::format_double(d_expected) +
                              " m");
  }
  return init;
}

// ---------------------------------------------------------------------------

struct StepCounters {
  // Blocks executed per worker, summed over the flux and depth passes.
  std::vector<std::size_t> per_thread_blocks;
};

// Grid engine: owns the double-buffered state and runs steps under an executor.
class Simulation {
 public:
  Simulation(TerrainGrid terrain, SimConfig config)
      : terrain_(std::move(terrain)), config_(std::move(config)) {
    auto init = initialize(terrain_, config_);
    state_ = std::move(init.state);
    ledger_ = init.ledger;
    peak_flow_ = init.peak_flow;
    drainage_time_ = init.drainage_time;
    warnings_ = std::move(init.warnings);
    valid_ = terrain_.valid_mask();
    space_ = CellSpace(terrain_.rows(), terrain_.cols(), valid_);
    is_inlet_.assign(state_.depth.size(), 0);
    for (const auto& in : config_.inlet_cells) is_inlet_[state_.index(in.row, in.col)] = 1;
    depth_next_.assign(state_.depth.size(), 0.0);
    fx_next_.assign(state_.depth.size(), 0.0);
    fy_next_.assign(state_.depth.size(), 0.0);
    adjust_.assign(state_.depth.size(), 0.0);
    wetdry_.assign(state_.depth.size(), 0.0);
    set_execution(config_.scheduling, config_.threads, config_.block_size);
    refresh_extremes();
  }

  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  const TerrainGrid& terrain() const noexcept { return terrain_; }
  const SimConfig& config() const noexcept { return config_; }
  const FloodState& state() const noexcept { return state_; }
  const MassLedger& ledger() const noexcept { return ledger_; }
  const BlockPlan& plan() const noexcept { return plan_; }
  const CellSpace& space() const noexcept { return space_; }
  const std::vector<unsigned char>& valid() const noexcept { return valid_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }
  double peak_flow() const noexcept { return peak_flow_; }
  double drainage_time() const noexcept { return drainage_time_; }
  const StepCounters& counters() const noexcept { return counters_; }
  Executor& executor() noexcept { return *executor_; }

  // block_size 0 picks a size giving every worker several blocks.
  void set_execution(Policy policy, unsigned threads, std::size_t block_size) {
    config_.scheduling = policy;
    config_.threads = std::max(1u, threads);
    if (block_size == 0) block_size = default_block_size(space_.size(), config_.threads);
    config_.block_size = block_size;
    const unsigned want = policy == Policy::serial ? 1u : config_.threads;
    if (!executor_ || executor_->policy() != policy || executor_->threads() != want)
      executor_ = std::make_unique<Executor>(policy, config_.threads);
    plan_ = partition(space_, block_size);
    slots_.assign(plan_.blocks.size(), BlockSlot{});
    counters_.per_thread_blocks.assign(executor_->threads(), 0);
  }

  static std::size_t default_block_size(std::size_t cells, unsigned threads) {
    const std::size_t target = static_cast<std::size_t>(threads) * 8;
    return std::max<std::size_t>(1, (cells + target - 1) / target);
  }

  // Replaces the depth field (initial condition). Ledger restarts from it.
  void set_depth(const std::vector<double>& depth) {
    if (depth.size() != state_.depth.size()) throw Error("depth field size mismatch");
    for (std::size_t i = 0; i < depth.size(); ++i) {
      if (!(depth[i] >= 0.0) || !std::isfinite(depth[i])) throw Error("initial depth must be finite and >= 0");
      state_.depth[i] = valid_[i] ? depth[i] : 0.0;
    }
    double stored = 0.0;
    for (double d : state_.depth) stored += d;
    stored *= terrain_.cell_area();
    ledger_ = MassLedger{};
    ledger_.volume_initial = ledger_.volume_in = ledger_.volume_stored = stored;
    refresh_extremes();
  }

  void set_fluxes(const std::vector<double>& fx, const std::vector<double>& fy) {
    if (fx.size() != state_.depth.size() || fy.size() != state_.depth.size())
      throw Error("flux field size mismatch");
    for (std::size_t i = 0; i < fx.size(); ++i) {
      const std::size_t row = i / state_.cols, col = i % state_.cols;
      const FieldView v = view();
      state_.flux_x[i] = rules::face_open_x(v, i, col) ? fx[i] : 0.0;
      state_.flux_y[i] = rules::face_open_y(v, i, row) ? fy[i] : 0.0;
    }
  }

  // True once inlets can add no more water.
  bool inflow_finished() const {
    if (config_.inlet_cells.empty()) return true;
    if (config_.total_discharge && ledger_.inlet_volume() >= *config_.total_discharge) return true;
    for (const auto& in : config_.inlet_cells)
      if (in.mode == InletMode::fixed_depth) return false;
    return config_.hydrograph.empty() || state_.time > config_.hydrograph.back().time;
  }

  bool drained() const {
    return inflow_finished() && ledger_.volume_stored < config_.dry_threshold * terrain_.cell_area();
  }

  // Advances one step. On instability nothing is committed: state() still
  // holds the last stable state (after this step's inlet injection).
  void step() {
    const StepParams p = StepParams::from(config_, terrain_);
    inject_inlets(state_, config_, terrain_.cell_area(), state_.time, ledger_);
    for (const auto& in : config_.inlet_cells) {
      const std::size_t i = state_.index(in.row, in.col);
      if (state_.depth[i] > max_depth_) {
        max_depth_ = state_.depth[i];
        max_depth_cell_ = i;
      }
    }
    check_courant(p);

    const FieldView v = view();
    const auto& cells = space_.cells;
    const std::size_t cols = state_.cols;
    for (auto& s : slots_) s = BlockSlot{};

    auto flux_stats = executor_->execute_pass(plan_, [&](std::size_t b, Block blk) {
      BlockSlot& slot = slots_[b];
      for (std::size_t k = blk.start; k < blk.end(); ++k) {
        const std::size_t i = cells[k];
        const std::size_t row = i / cols, col = i - row * cols;
        const auto fx = rules::flux_x_at(v, p, row, col);
        const auto fy = rules::flux_y_at(v, p, row, col);
        fx_next_[i] = fx.flux;
        fy_next_[i] = fy.flux;
        slot.limiter_hits += std::size_t(fx.limited) + std::size_t(fy.limited);
        if (!std::isfinite(fx.flux) || !std::isfinite(fy.flux)) slot.note_bad(i);
      }
    });
    throw_if_bad("non-finite flux");

    const bool rule = config_.wet_rule_on;
    const double area = terrain_.cell_area();
    auto depth_stats = executor_->execute_pass(plan_, [&](std::size_t b, Block blk) {
      BlockSlot& slot = slots_[b];
      for (std::size_t k = blk.start; k < blk.end(); ++k) {
        const std::size_t i = cells[k];
        const std::size_t row = i / cols, col = i - row * cols;
        double d = rules::depth_at(state_.depth[i], fx_next_.data(), fy_next_.data(), cols, row, col, p);
        if (!std::isfinite(d)) {
          slot.note_bad(i);
          d = 0.0;
        } else if (d < 0.0) {
          adjust_[i] = d * area;
          ++slot.clamp_events;
          d = 0.0;
        }
        depth_next_[i] = d;
        if (!rule) slot.note_depth(i, d);
      }
    });
    throw_if_bad("non-finite depth");

    if (rule) {
      const double thr = config_.dry_threshold;
      const double floor = rules::wet_floor(thr);
      const std::size_t rows = state_.rows;
      executor_->execute_pass(plan_, [&](std::size_t b, Block blk) {
        BlockSlot& slot = slots_[b];
        for (std::size_t k = blk.start; k < blk.end(); ++k) {
          const std::size_t i = cells[k];
          const std::size_t row = i / cols, col = i - row * cols;
          double d = depth_next_[i];
          const bool wet = d > thr;
          if (!wet || !is_inlet_[i]) {
            const int n = rules::wet_neighbours(depth_next_.data(), valid_.data(), rows, cols, row, col, thr);
            double nd = d;
            if (!wet && n > 7) nd = floor;
            else if (wet && n < 2 && !is_inlet_[i]) nd = 0.0;
            if (nd != d) {
              wetdry_[i] = (d - nd) * area;
              ++slot.wetdry_events;
              d = nd;
            }
          }
          state_.depth[i] = d;
          slot.note_depth(i, d);
        }
      });
    } else {
      state_.depth.swap(depth_next_);
    }
    state_.flux_x.swap(fx_next_);
    state_.flux_y.swap(fy_next_);

    for (std::size_t w = 0; w < counters_.per_thread_blocks.size(); ++w)
      counters_.per_thread_blocks[w] += flux_stats.per_thread_blocks[w] + depth_stats.per_thread_blocks[w];

    // Volumes are summed serially in cell order so the ledger does not depend
    // on the block plan or the executor.
    double stored = 0.0, clamp = 0.0, wd = 0.0;
    for (const std::uint32_t i : cells) {
      stored += state_.depth[i];
      if (adjust_[i] != 0.0) {
        clamp -= adjust_[i];
        adjust_[i] = 0.0;
      }
      if (wetdry_[i] != 0.0) {
        wd += wetdry_[i];
        wetdry_[i] = 0.0;
      }
    }
    max_depth_ = 0.0;
    for (const auto& s : slots_) {
      ledger_.clamp_events += s.clamp_events;
      ledger_.wetdry_events += s.wetdry_events;
      ledger_.limiter_hits += s.limiter_hits;
      if (s.max_depth > max_depth_) {
        max_depth_ = s.max_depth;
        max_depth_cell_ = s.max_cell;
      }
    }
    ledger_.volume_stored = stored * area;
    ledger_.clamp_volume += clamp;
    ledger_.wetdry_volume += wd;
    ledger_.volume_residual += wd - clamp;

    ++state_.step;
    state_.time = static_cast<double>(state_.step) * config_.dt;
  }

  // Courant number of the deepest cell for the current state.
  double courant_number() const {
    return config_.dt * std::sqrt(2.0 * config_.gravity * max_depth_) / terrain_.cellsize();
  }

 private:
  struct alignas(64) BlockSlot {
    double max_depth = 0.0;
    std::size_t max_cell = 0;
    std::size_t clamp_events = 0;
    std::size_t wetdry_events = 0;
    std::size_t limiter_hits = 0;
    std::size_t bad_cell = std::numeric_limits<std::size_t>::max();

    void note_bad(std::size_t i) noexcept {
      if (bad_cell == std::numeric_limits<std::size_t>::max()) bad_cell = i;
    }
    void note_depth(std::size_t i, double d) noexcept {
      if (d > max_depth) {
        max_depth = d;
        max_cell = i;
      }
    }
  };

  FieldView view() const {
    return {state_.rows, state_.cols, terrain_.elevation.data(), terrain_.roughness.data(), valid_.data(),
            state_.depth.data(), state_.flux_x.data(), state_.flux_y.data()};
  }

  void refresh_extremes() {
    max_depth_ = 0.0;
    max_depth_cell_ = 0;
    for (std::size_t i = 0; i < state_.depth.size(); ++i)
      if (state_.depth[i] > max_depth_) {
        max_depth_ = state_.depth[i];
        max_depth_cell_ = i;
      }
  }

  void check_courant(const StepParams& p) const {
    const double cr = p.dt * std::sqrt(2.0 * p.gravity * max_depth_) / p.dx;
    if (cr > config_.courant_limit)
      throw InstabilityError("unstable time step: Courant number " + detail::format_double(cr) +
                                 " exceeds limit " + detail::format_double(config_.courant_limit),
                             state_.step, max_depth_cell_ / state_.cols, max_depth_cell_ % state_.cols);
  }

  void throw_if_bad(const char* what) {
    for (const auto& s : slots_)
      if (s.bad_cell != std::numeric_limits<std::size_t>::max()) {
        std::fill(adjust_.begin(), adjust_.end(), 0.0);
        throw InstabilityError(what, state_.step, s.bad_cell / state_.cols, s.bad_cell % state_.cols);
      }
  }

  TerrainGrid terrain_;
  SimConfig config_;
  FloodState state_;
  MassLedger ledger_;
  double peak_flow_ = 0.0;
  double drainage_time_ = 0.0;
  std::vector<std::string> warnings_;
  std::vector<unsigned char> valid_;
  std::vector<unsigned char> is_inlet_;
  CellSpace space_;
  BlockPlan plan_;
  std::unique_ptr<Executor> executor_;
  std::vector<BlockSlot> slots_;
  std::vector<double> depth_next_, fx_next_, fy_next_;
  std::vector<double> adjust_, wetdry_;  // per-cell clamp deficit / rule removal, this step
  StepCounters counters_;
  double max_depth_ = 0.0;
  std::size_t max_depth_cell_ = 0;
};

}  // namespace cafl
