#pragma once

// Block-partitioned execution of data-parallel passes over the valid cells.
//
// The valid cells are numbered 0..n-1 in row-major order and cut into
// contiguous runs ("blocks"). A pass runs a kernel once per block under one of
// three policies:
//   serial  - blocks in order on the calling thread
//   static  - block k pre-assigned to worker k mod p
//   dynamic - workers claim the next unclaimed block from a shared cursor
// Every pass is a fork-join region: it returns only after all workers finish.

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "cafl/config.hpp"
#include "cafl/error.hpp"

namespace cafl {

struct Block {
  std::size_t start = 0;   // first valid-cell ordinal
  std::size_t length = 0;
  std::size_t end() const noexcept { return start + length; }
  bool operator==(const Block&) const = default;
};

struct BlockPlan {
  std::vector<Block> blocks;
  std::size_t block_size = 0;
  std::size_t cell_count = 0;  // number of valid cells covered
};

inline BlockPlan partition(std::size_t valid_cells, std::size_t block_size) {
  if (block_size == 0) throw Error("block_size must be >= 1");
  BlockPlan plan;
  plan.block_size = block_size;
  plan.cell_count = valid_cells;
  plan.blocks.reserve(valid_cells / block_size + 1);
  for (std::size_t s = 0; s < valid_cells; s += block_size)
    plan.blocks.push_back({s, std::min(block_size, valid_cells - s)});
  return plan;
}

// Valid-cell numbering of a rows x cols grid.
struct CellSpace {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint32_t> cells;  // linear index of each valid cell, row-major

  CellSpace() = default;
  CellSpace(std::size_t r, std::size_t c, const std::vector<unsigned char>& valid) : rows(r), cols(c) {
    cells.reserve(valid.size());
    for (std::size_t i = 0; i < valid.size(); ++i)
      if (valid[i]) cells.push_back(static_cast<std::uint32_t>(i));
  }
  std::size_t size() const noexcept { return cells.size(); }
};

inline BlockPlan partition(const CellSpace& space, std::size_t block_size) {
  return partition(space.size(), block_size);
}

// Persistent workers driven in fork-join regions. The calling thread acts as
// worker 0, so a pool of p threads owns p-1 OS threads.
class ForkJoinPool {
 public:
  explicit ForkJoinPool(unsigned threads = 1) : size_(std::max(1u, threads)) {
    for (unsigned w = 1; w < size_; ++w) workers_.emplace_back([this, w] { worker_loop(w); });
  }
  ForkJoinPool(const ForkJoinPool&) = delete;
  ForkJoinPool& operator=(const ForkJoinPool&) = delete;
  ~ForkJoinPool() {
    {
      std::lock_guard lk(mu_);
      shutdown_ = true;
    }
    start_cv_.notify_all();
    for (auto& t : workers_) t.join();
  }

  unsigned size() const noexcept { return size_; }

  // Runs body(worker_id) on every worker; returns after all have returned.
  void run(const std::function<void(unsigned)>& body) {
    if (size_ == 1) {
      body(0);
      return;
    }
    {
      std::lock_guard lk(mu_);
      body_ = &body;
      pending_ = size_ - 1;
      ++generation_;
    }
    start_cv_.notify_all();
    body(0);
    std::unique_lock lk(mu_);
    done_cv_.wait(lk, [this] { return pending_ == 0; });
    body_ = nullptr;
  }

 private:
  void worker_loop(unsigned id) {
    std::uint64_t seen = 0;
    for (;;) {
      const std::function<void(unsigned)>* body = nullptr;
      {
        std::unique_lock lk(mu_);
        start_cv_.wait(lk, [&] { return shutdown_ || generation_ != seen; });
        if (shutdown_) return;
        seen = generation_;
        body = body_;
      }
      (*body)(id);
      {
        std::lock_guard lk(mu_);
        if (--pending_ == 0) done_cv_.notify_one();
      }
    }
  }

  unsigned size_;
  std::vector<std::thread> workers_;
  std::mutex mu_;
  std::condition_variable start_cv_;
  std::condition_variable done_cv_;
  const std::function<void(unsigned)>* body_ = nullptr;
  unsigned pending_ = 0;
  std::uint64_t generation_ = 0;
  bool shutdown_ = false;
};

struct PassStats {
  std::vector<std::size_t> per_thread_blocks;
  // Block order as executed by each worker; filled only when requested.
  std::vector<std::vector<std::size_t>> trace;
};

// Scheduling policy + worker pool handle.
class Executor {
 public:
  Executor(Policy policy = Policy::serial, unsigned threads = 1)
      : policy_(policy), pool_(policy == Policy::serial ? 1u : std::max(1u, threads)) {}

  Policy policy() const noexcept { return policy_; }
  unsigned threads() const noexcept { return pool_.size(); }

  // kernel(block_index, block) must write only state owned by that block.
  // An exception thrown by a kernel stops further block claims and is
  // rethrown once every worker has stopped.
  template <typename Kernel>
  PassStats execute_pass(const BlockPlan& plan, Kernel&& kernel, bool record_trace = false) {
    const std::size_t nblocks = plan.blocks.size();
    const unsigned p = pool_.size();
    PassStats stats;
    stats.per_thread_blocks.assign(p, 0);
    if (record_trace) stats.trace.assign(p, {});

    if (policy_ == Policy::serial || p == 1) {
      for (std::size_t b = 0; b < nblocks; ++b) {
        kernel(b, plan.blocks[b]);
        if (record_trace) stats.trace[0].push_back(b);
      }
      stats.per_thread_blocks[0] = nblocks;
      return stats;
    }

    std::atomic<std::size_t> cursor{0};
    std::atomic<bool> stop{false};
    std::exception_ptr first_error;
    std::mutex err_mu;

    auto body = [&](unsigned w) {
      std::size_t count = 0;
      try {
        if (policy_ == Policy::static_blocks) {
          for (std::size_t b = w; b < nblocks && !stop.load(std::memory_order_relaxed); b += p) {
            kernel(b, plan.blocks[b]);
            ++count;
            if (record_trace) stats.trace[w].push_back(b);
          }
        } else {
          for (;;) {
            if (stop.load(std::memory_order_relaxed)) break;
            const std::size_t b = cursor.fetch_add(1, std::memory_order_relaxed);
            if (b >= nblocks) break;
            kernel(b, plan.blocks[b]);
            ++count;
            if (record_trace) stats.trace[w].push_back(b);
          }
        }
      } catch (...) {
        stop.store(true);
        std::lock_guard lk(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
      stats.per_thread_blocks[w] = count;
    };
    pool_.run(body);
    if (first_error) std::rethrow_exception(first_error);
    return stats;
  }

 private:
  Policy policy_;
  ForkJoinPool pool_;
};

}  // namespace cafl
