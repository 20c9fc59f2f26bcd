#pragma once

#include <cstdint>

namespace axialseg {

/// Per-thread multiply-accumulate counter fed by the attention kernels.
class MacCounter {
 public:
  static void add(std::uint64_t n) { count_ += n; }
  static std::uint64_t value() { return count_; }
  static void reset() { count_ = 0; }

 private:
  static inline thread_local std::uint64_t count_ = 0;
};

}  // namespace axialseg
