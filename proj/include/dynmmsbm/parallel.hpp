#pragma once

#include <algorithm>
#include <exception>
#include <vector>

namespace dynmmsbm::detail {

inline constexpr int kReduceBlock = 1024;

// Exceptions may not leave an OpenMP region; the first one (by index) is
// captured and rethrown after the loop.
class ErrorSlot {
 public:
  template <typename F>
  void run(int index, F&& f) {
    try {
      f();
    } catch (...) {
#pragma omp critical(dynmmsbm_error_slot)
      {
        if (!error_ || index < index_) {
          error_ = std::current_exception();
          index_ = index;
        }
      }
    }
  }
  void rethrow() const {
    if (error_) std::rethrow_exception(error_);
  }

 private:
  std::exception_ptr error_;
  int index_ = 0;
};

/// Sums `body(begin, end, acc)` over fixed-size blocks of [0, n). Blocks may
/// run concurrently but partial results are combined in block order, so the
/// result does not depend on the number of threads.
template <typename Acc, typename Body>
Acc blocked_sum(int n, const Acc& zero, Body&& body) {
  const int blocks = (n + kReduceBlock - 1) / kReduceBlock;
  std::vector<Acc> parts(static_cast<std::size_t>(blocks), zero);
  ErrorSlot err;
#pragma omp parallel for schedule(static)
  for (int b = 0; b < blocks; ++b) {
    err.run(b, [&] { body(b * kReduceBlock, std::min(n, (b + 1) * kReduceBlock), parts[b]); });
  }
  err.rethrow();
  Acc total = zero;
  for (const auto& p : parts) total += p;
  return total;
}

/// Runs `body(i)` for every i in [0, n); iterations must be independent.
template <typename Body>
void parallel_for(int n, Body&& body) {
  ErrorSlot err;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) err.run(i, [&] { body(i); });
  err.rethrow();
}

}  // namespace dynmmsbm::detail
