#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <random>
#include <span>
#include <thread>
#include <vector>

namespace fdrbound {

using Engine = std::mt19937_64;

// Independent purposes get independent streams even under the same master seed.
enum class StreamTag : std::uint32_t {
  truth = 1,
  residuals = 2,
  selection = 3,
  source = 4,
  hlz = 5,
};

// Counter-based stream derivation: the engine for (master, tag, index) depends
// only on those three values, never on which thread or in which order
// replications run.
inline Engine make_stream(std::uint64_t master_seed, StreamTag tag, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed),
                    static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(tag),
                    static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return Engine(seq);
}

inline void fill_normal(Engine& engine, std::span<double> out, double sd = 1.0) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& x : out) x = sd * normal(engine);
}

// Uniform on [0, 1) from the top 53 bits; never returns 1.
inline double uniform01(Engine& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

// Runs fn(i) for i in [0, n) on up to `threads` workers. Work items must not
// share mutable state; callers fold results by index afterwards. If several
// items throw, the exception from the lowest index is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> workers;
  workers.reserve(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& worker : workers) worker.join();
  for (auto& error : errors)
    if (error) std::rethrow_exception(error);
}

}  // namespace fdrbound
