#pragma once

#include <cstdint>

namespace ctxenc::macs {

// Thread-local multiply-accumulate counter. Kernels report their MAC cost via
// add(); counting is off unless a CountScope is alive on the current thread.
// Policy: only true multiply-accumulate work is counted (matvec, matmul,
// hadamard, dot, row-broadcast products, weighted row sums, affine maps).
// Softmax normalization, plain additions, and data movement count zero.

bool enabled() noexcept;
void add(std::uint64_t n) noexcept;

/// Enables MAC counting on this thread for its lifetime and accumulates a tally.
class CountScope {
 public:
  CountScope();
  ~CountScope();

  CountScope(const CountScope&) = delete;
  CountScope& operator=(const CountScope&) = delete;

  /// MACs recorded since this scope was opened.
  std::uint64_t count() const noexcept;

 private:
  bool previous_enabled_;
  std::uint64_t count_at_open_;
};

}  // namespace ctxenc::macs
