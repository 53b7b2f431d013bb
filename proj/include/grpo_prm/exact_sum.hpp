#pragma once

#include <cmath>
#include <span>
#include <utility>
#include <vector>

namespace grpo_prm {

/**
 * Correctly rounded floating-point summation (Shewchuk partials).
 *
 * The running sum is held as a list of non-overlapping partials, so the
 * represented value is exact. value() rounds it once. Two consequences the
 * rest of the library relies on:
 *   - the result does not depend on the order in which terms were added;
 *   - merging two accumulators is exact, so partial aggregates combine into
 *     the same result as a single pass over the whole stream.
 *
 * Inputs must be finite.
 */
class ExactSum {
 public:
  ExactSum() = default;

  void add(double x) {
    std::size_t used = 0;
    for (double y : partials_) {
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials_[used++] = lo;
      x = hi;
    }
    partials_.resize(used);
    partials_.push_back(x);
  }

  ExactSum& operator+=(double x) {
    add(x);
    return *this;
  }

  void merge(const ExactSum& other) {
    // Copy first: other may alias *this.
    const std::vector<double> incoming = other.partials_;
    for (double p : incoming) add(p);
  }

  double value() const {
    std::size_t n = partials_.size();
    if (n == 0) return 0.0;
    double hi = partials_[--n];
    double lo = 0.0;
    while (n > 0) {
      const double x = hi;
      const double y = partials_[--n];
      hi = x + y;
      const double yr = hi - x;
      lo = y - yr;
      if (lo != 0.0) break;
    }
    // Round-half-even correction when the remaining partials push the
    // discarded tail exactly past a tie.
    if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) ||
                  (lo > 0.0 && partials_[n - 1] > 0.0))) {
      const double y = lo * 2.0;
      const double x = hi + y;
      const double yr = x - hi;
      if (y == yr) hi = x;
    }
    return hi;
  }

  std::span<const double> partials() const noexcept { return partials_; }

  static ExactSum from_partials(std::span<const double> partials) {
    ExactSum s;
    for (double p : partials) s.add(p);
    return s;
  }

 private:
  std::vector<double> partials_;
};

template <typename Range>
double exact_sum(const Range& values) {
  ExactSum s;
  for (double v : values) s.add(v);
  return s.value();
}

}  // namespace grpo_prm
