#include <gtest/gtest.h>

#include <atomic>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

#include "cafl/scheduler.hpp"

using namespace cafl;

namespace {

std::vector<std::size_t> lengths(const BlockPlan& p) {
  std::vector<std::size_t> out;
  for (const auto& b : p.blocks) out.push_back(b.length);
  return out;
}

const Policy kPolicies[] = {Policy::serial, Policy::static_blocks, Policy::dynamic};

}  // namespace

TEST(Partition, ExactBlocks) { EXPECT_EQ(lengths(partition(16, 4)), (std::vector<std::size_t>{4, 4, 4, 4})); }

TEST(Partition, ShortLastBlock) { EXPECT_EQ(lengths(partition(10, 4)), (std::vector<std::size_t>{4, 4, 2})); }

TEST(Partition, MillionCellsAt70000) {
  const auto p = partition(1000 * 1000, 70000);
  ASSERT_EQ(p.blocks.size(), 15u);
  for (std::size_t k = 0; k < 14; ++k) EXPECT_EQ(p.blocks[k].length, 70000u);
  EXPECT_EQ(p.blocks.back().length, 20000u);
}

TEST(Partition, ZeroBlockSizeRejected) { EXPECT_THROW(partition(10, 0), Error); }

TEST(Partition, CoversEveryCellOnce) {
  std::mt19937 rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = rng() % 5000, bs = 1 + rng() % 700;
    const auto p = partition(n, bs);
    std::size_t next = 0;
    for (const auto& b : p.blocks) {
      ASSERT_EQ(b.start, next);
      ASSERT_GE(b.length, 1u);
      ASSERT_LE(b.length, bs);
      next = b.end();
    }
    ASSERT_EQ(next, n);
  }
}

TEST(CellSpace, SkipsInvalidCellsRowMajor) {
  const CellSpace s(2, 3, {1, 0, 1, 1, 1, 0});
  EXPECT_EQ(s.cells, (std::vector<std::uint32_t>{0, 2, 3, 4}));
  EXPECT_EQ(partition(s, 3).blocks.size(), 2u);
}

TEST(ExecutePass, CountingKernelExact) {
  const std::vector<unsigned char> valid = [] {
    std::vector<unsigned char> v(97 * 103);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (i * 7919) % 11 != 0;
    return v;
  }();
  const CellSpace space(97, 103, valid);
  for (auto policy : kPolicies)
    for (unsigned threads : {1u, 2u, 4u, 8u})
      for (std::size_t bs : {1u, 13u, 1000u, 100000u}) {
        Executor ex(policy, threads);
        std::atomic<std::size_t> count{0};
        const auto plan = partition(space, bs);
        const auto stats = ex.execute_pass(plan, [&](std::size_t, Block b) {
          for (std::size_t k = b.start; k < b.end(); ++k) count.fetch_add(1, std::memory_order_relaxed);
        });
        ASSERT_EQ(count.load(), space.size());
        ASSERT_EQ(std::accumulate(stats.per_thread_blocks.begin(), stats.per_thread_blocks.end(), std::size_t{0}),
                  plan.blocks.size());
      }
}

TEST(ExecutePass, SingleThreadMatchesSerialOrder) {
  const auto plan = partition(50, 7);
  for (auto policy : kPolicies) {
    Executor ex(policy, 1);
    const auto stats = ex.execute_pass(plan, [](std::size_t, Block) {}, true);
    ASSERT_EQ(stats.trace.size(), 1u);
    std::vector<std::size_t> expect(plan.blocks.size());
    std::iota(expect.begin(), expect.end(), 0);
    EXPECT_EQ(stats.trace[0], expect);
  }
}

TEST(ExecutePass, StaticIsRoundRobin) {
  const auto plan = partition(100, 10);
  Executor ex(Policy::static_blocks, 3);
  const auto stats = ex.execute_pass(plan, [](std::size_t, Block) {}, true);
  EXPECT_EQ(stats.trace[0], (std::vector<std::size_t>{0, 3, 6, 9}));
  EXPECT_EQ(stats.trace[1], (std::vector<std::size_t>{1, 4, 7}));
  EXPECT_EQ(stats.trace[2], (std::vector<std::size_t>{2, 5, 8}));
}

TEST(ExecutePass, PolicyInvariantOutput) {
  const std::size_t n = 10007;
  const auto plan = partition(n, 97);
  std::vector<double> ref(n);
  for (std::size_t i = 0; i < n; ++i) ref[i] = std::sin(0.1 * static_cast<double>(i)) / (1.0 + i);
  for (auto policy : kPolicies)
    for (unsigned threads : {1u, 2u, 3u, 8u}) {
      Executor ex(policy, threads);
      std::vector<double> out(n, -1.0);
      ex.execute_pass(plan, [&](std::size_t, Block b) {
        for (std::size_t i = b.start; i < b.end(); ++i) out[i] = std::sin(0.1 * static_cast<double>(i)) / (1.0 + i);
      });
      ASSERT_EQ(std::memcmp(out.data(), ref.data(), n * sizeof(double)), 0);
    }
}

// Every fourth block is 20 times as expensive. Round-robin piles all of them
// onto worker 0; the shared queue spreads the load.
TEST(ExecutePass, DynamicBalancesSkewedLoad) {
  const unsigned p = 4;
  const auto plan = partition(64, 1);
  auto cost = [](std::size_t b) { return b % 4 == 0 ? 20 : 1; };
  auto load_ratio = [&](Policy policy) {
    Executor ex(policy, p);
    const auto stats = ex.execute_pass(
        plan, [&](std::size_t b, Block) { std::this_thread::sleep_for(std::chrono::microseconds(150 * cost(b))); },
        true);
    std::vector<double> load(p, 0.0);
    for (unsigned w = 0; w < p; ++w)
      for (auto b : stats.trace[w]) load[w] += cost(b);
    const auto [lo, hi] = std::minmax_element(load.begin(), load.end());
    return *lo > 0 ? *hi / *lo : std::numeric_limits<double>::infinity();
  };
  const double stat = load_ratio(Policy::static_blocks);
  const double dyn = load_ratio(Policy::dynamic);
  EXPECT_DOUBLE_EQ(stat, 320.0 / 16.0);
  EXPECT_LT(dyn, stat);
}

TEST(ExecutePass, KernelExceptionPropagatesAfterJoin) {
  const auto plan = partition(1000, 10);
  for (auto policy : kPolicies)
    for (unsigned threads : {1u, 4u}) {
      Executor ex(policy, threads);
      std::atomic<int> running{0};
      EXPECT_THROW(ex.execute_pass(plan,
                                   [&](std::size_t b, Block) {
                                     running.fetch_add(1);
                                     if (b == 5) {
                                       running.fetch_sub(1);
                                       throw std::runtime_error("boom");
                                     }
                                     running.fetch_sub(1);
                                   }),
                   std::runtime_error);
      EXPECT_EQ(running.load(), 0);
      // pool still usable
      std::atomic<std::size_t> n{0};
      ex.execute_pass(plan, [&](std::size_t, Block) { n.fetch_add(1); });
      EXPECT_EQ(n.load(), plan.blocks.size());
    }
}

TEST(ExecutePass, DynamicQueueStress) {
  std::mt19937 rng(2024);
  std::vector<std::unique_ptr<Executor>> pools;
  for (unsigned t = 2; t <= 8; ++t) pools.push_back(std::make_unique<Executor>(Policy::dynamic, t));
  std::vector<std::atomic<int>> hits(4096);
  for (int run = 0; run < 10000; ++run) {
    const std::size_t n = 1 + rng() % 4000, bs = 1 + rng() % 64;
    const auto plan = partition(n, bs);
    for (std::size_t b = 0; b < plan.blocks.size(); ++b) hits[b].store(0, std::memory_order_relaxed);
    auto& ex = *pools[rng() % pools.size()];
    const auto stats = ex.execute_pass(plan, [&](std::size_t b, Block) { hits[b].fetch_add(1); });
    for (std::size_t b = 0; b < plan.blocks.size(); ++b) ASSERT_EQ(hits[b].load(), 1) << "run " << run;
    ASSERT_EQ(std::accumulate(stats.per_thread_blocks.begin(), stats.per_thread_blocks.end(), std::size_t{0}),
              plan.blocks.size());
  }
}

TEST(ForkJoinPool, ManyGenerations) {
  ForkJoinPool pool(5);
  std::atomic<long> total{0};
  for (int g = 0; g < 2000; ++g) pool.run([&](unsigned w) { total.fetch_add(w + 1); });
  EXPECT_EQ(total.load(), 2000L * 15);
}
