#pragma once

// The simulation loop: steps until the duration is reached (or the domain has
// drained), emits snapshots, and reports timings and the mass balance.

#include <atomic>
#include <chrono>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cafl/ca_core.hpp"
#include "cafl/frames.hpp"

namespace cafl {

struct RunReport {
  std::string status = "finished";  // finished | failed | cancelled
  std::string error_detail;
  std::optional<std::size_t> failed_step;

  double wall_serial = 0.0;    // t_s, set when measured
  double wall_parallel = 0.0;  // t_p
  double speedup = 0.0;        // t_s / t_p when both measured
  double wall_seconds = 0.0;   // step loop only
  unsigned threads = 1;
  Policy policy = Policy::serial;
  std::size_t block_size = 0;
  std::size_t block_count = 0;
  std::vector<std::size_t> per_thread_blocks;
  std::vector<double> per_step_timings;

  std::size_t steps = 0;
  double final_time = 0.0;
  std::size_t frames_emitted = 0;
  bool drained_early = false;
  MassLedger ledger;
  double mass_balance_error = 0.0;  // relative
  double peak_flow = 0.0;
  double drainage_time = 0.0;
  std::vector<std::string> warnings;
};

inline nlohmann::ordered_json report_to_json(const RunReport& r, bool include_step_timings = true) {
  nlohmann::ordered_json j;
  j["status"] = r.status;
  if (!r.error_detail.empty()) j["error_detail"] = r.error_detail;
  if (r.failed_step) j["failed_step"] = *r.failed_step;
  j["policy"] = to_string(r.policy);
  j["threads"] = r.threads;
  j["block_size"] = r.block_size;
  j["block_count"] = r.block_count;
  j["steps"] = r.steps;
  j["final_time"] = r.final_time;
  j["frames_emitted"] = r.frames_emitted;
  j["drained_early"] = r.drained_early;
  j["peak_flow"] = r.peak_flow;
  j["drainage_time"] = r.drainage_time;
  j["ledger"] = {{"volume_in", r.ledger.volume_in},
                 {"volume_initial", r.ledger.volume_initial},
                 {"volume_stored", r.ledger.volume_stored},
                 {"volume_residual", r.ledger.volume_residual},
                 {"clamp_volume", r.ledger.clamp_volume},
                 {"clamp_events", r.ledger.clamp_events},
                 {"wetdry_volume", r.ledger.wetdry_volume},
                 {"wetdry_events", r.ledger.wetdry_events},
                 {"limiter_hits", r.ledger.limiter_hits}};
  j["mass_balance_error"] = r.mass_balance_error;
  j["per_thread_blocks"] = r.per_thread_blocks;
  j["warnings"] = r.warnings;
  // Timing fields last: they are the only non-reproducible part of a report.
  nlohmann::ordered_json timing;
  timing["wall_seconds"] = r.wall_seconds;
  if (r.wall_serial > 0.0) timing["wall_serial"] = r.wall_serial;
  if (r.wall_parallel > 0.0) timing["wall_parallel"] = r.wall_parallel;
  if (r.speedup > 0.0) timing["speedup"] = r.speedup;
  if (include_step_timings) timing["per_step_timings"] = r.per_step_timings;
  j["timing"] = std::move(timing);
  return j;
}

struct RunSinks {
  std::function<void(const FloodFrame&, const FloodState&)> on_frame;
  // Called with (steps done, steps total) after every step.
  std::function<void(std::size_t, std::size_t)> on_progress;
  // Checked between steps; returning true cancels the run.
  std::function<bool()> cancelled;
};

// Thrown by run() on instability. Carries the partial report and the last
// stable snapshot.
class RunAborted : public InstabilityError {
 public:
  RunAborted(const InstabilityError& cause, RunReport report, FloodFrame last_stable)
      : InstabilityError(cause), report_(std::move(report)), last_stable_(std::move(last_stable)) {}
  const RunReport& report() const noexcept { return report_; }
  const FloodFrame& last_stable() const noexcept { return last_stable_; }

 private:
  RunReport report_;
  FloodFrame last_stable_;
};

// Runs `sim` from its current state to the configured duration. Frames are
// produced at step 0 and every snapshot interval before the end, plus one
// final frame at termination.
inline RunReport run(Simulation& sim, const RunSinks& sinks = {}) {
  const SimConfig& cfg = sim.config();
  RunReport rep;
  rep.threads = sim.executor().threads();
  rep.policy = cfg.scheduling;
  rep.block_size = sim.plan().block_size;
  rep.block_count = sim.plan().blocks.size();
  rep.peak_flow = sim.peak_flow();
  rep.drainage_time = sim.drainage_time();
  rep.warnings = sim.warnings();

  const std::size_t total = cfg.steps_total();
  const std::size_t every = cfg.snapshot_every();
  auto emit = [&] {
    if (!sinks.on_frame) {
      ++rep.frames_emitted;
      return;
    }
    auto frame = build_frame(sim.state(), sim.terrain(), cfg.dry_threshold);
    sinks.on_frame(frame, sim.state());
    ++rep.frames_emitted;
  };

  using clock = std::chrono::steady_clock;
  rep.per_step_timings.reserve(total);
  const auto blocks_before = sim.counters().per_thread_blocks;
  std::size_t done = 0;
  auto finish = [&] {
    rep.steps = done;
    rep.final_time = sim.state().time;
    rep.ledger = sim.ledger();
    rep.mass_balance_error = sim.ledger().relative_imbalance();
    rep.per_thread_blocks = sim.counters().per_thread_blocks;
    for (std::size_t w = 0; w < rep.per_thread_blocks.size() && w < blocks_before.size(); ++w)
      rep.per_thread_blocks[w] -= blocks_before[w];
    for (double s : rep.per_step_timings) rep.wall_seconds += s;
    if (rep.policy == Policy::serial) rep.wall_serial = rep.wall_seconds;
    else rep.wall_parallel = rep.wall_seconds;
  };

  while (done < total) {
    if (done % every == 0) emit();
    if (sinks.cancelled && sinks.cancelled()) {
      rep.status = "cancelled";
      finish();
      return rep;
    }
    const auto t0 = clock::now();
    try {
      sim.step();
    } catch (const InstabilityError& e) {
      rep.status = "failed";
      rep.error_detail = e.what();
      rep.failed_step = e.step();
      finish();
      throw RunAborted(e, rep, build_frame(sim.state(), sim.terrain(), cfg.dry_threshold));
    }
    rep.per_step_timings.push_back(std::chrono::duration<double>(clock::now() - t0).count());
    ++done;
    if (sinks.on_progress) sinks.on_progress(done, total);
    if (sim.drained()) {
      rep.drained_early = done < total;
      break;
    }
  }
  emit();
  finish();
  return rep;
}

// Picks the fastest block size among `candidates` by timing a few warm-up
// steps of a scratch copy of the scenario.
inline std::size_t autotune_block_size(const TerrainGrid& terrain, const SimConfig& cfg,
                                       const std::vector<std::size_t>& candidates, std::size_t warmup_steps = 3) {
  std::size_t best = 0;
  double best_time = std::numeric_limits<double>::infinity();
  for (std::size_t b : candidates) {
    if (b == 0) continue;
    SimConfig c = cfg;
    c.block_size = b;
    Simulation sim(terrain, c);
    const auto t0 = std::chrono::steady_clock::now();
    try {
      for (std::size_t k = 0; k < warmup_steps; ++k) sim.step();
    } catch (const InstabilityError&) {
      return b;  // the real run will report it
    }
    const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (t < best_time) {
      best_time = t;
      best = b;
    }
  }
  return best ? best : 1;
}

inline std::vector<std::size_t> block_size_candidates(std::size_t cells, unsigned threads) {
  std::vector<std::size_t> out;
  for (std::size_t per : {1, 2, 4, 8, 16, 32}) {
    const std::size_t target = static_cast<std::size_t>(threads) * per;
    const std::size_t b = std::max<std::size_t>(256, (cells + target - 1) / target);
    if (out.empty() || out.back() != b) out.push_back(b);
  }
  return out;
}

// Builds a Simulation, auto-tuning block_size when it is 0 on a parallel policy.
inline std::unique_ptr<Simulation> make_simulation(const TerrainGrid& terrain, SimConfig cfg) {
  if (cfg.block_size == 0 && cfg.scheduling != Policy::serial && cfg.threads > 1) {
    validate_or_throw(cfg, terrain);
    std::size_t valid = 0;
    for (std::size_t i = 0; i < terrain.elevation.size(); ++i) valid += terrain.valid(i) ? 1 : 0;
    cfg.block_size = autotune_block_size(terrain, cfg, block_size_candidates(valid, cfg.threads));
  }
  return std::make_unique<Simulation>(terrain, std::move(cfg));
}

}  // namespace cafl
