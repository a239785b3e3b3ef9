#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

namespace cdma {

// Welford accumulator with the pairwise merge of Chan et al.
class RunningStats {
 public:
  void push(double x) {
    ++count_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta * (x - mean_);
  }

  void merge(const RunningStats& other) {
    if (other.count_ == 0) return;
    if (count_ == 0) {
      *this = other;
      return;
    }
    const double n_a = static_cast<double>(count_);
    const double n_b = static_cast<double>(other.count_);
    const double n = n_a + n_b;
    const double delta = other.mean_ - mean_;
    mean_ += delta * n_b / n;
    m2_ += other.m2_ + delta * delta * n_a * n_b / n;
    count_ += other.count_;
  }

  std::uint64_t count() const { return count_; }
  double mean() const { return mean_; }
  double m2() const { return m2_; }

  double variance() const {
    if (count_ < 2) return 0.0;
    return std::max(0.0, m2_ / static_cast<double>(count_ - 1));
  }

  double standard_error() const {
    if (count_ < 2) return 0.0;
    return std::sqrt(variance() / static_cast<double>(count_));
  }

 private:
  std::uint64_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

}  // namespace cdma
