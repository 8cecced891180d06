#pragma once

#include <vector>

namespace tsr {

/// Exact running sum of doubles kept as a non-overlapping expansion
/// (Shewchuk-style compensated summation carried to exactness). The
/// accumulated value is exact, so adding the same multiset of terms in
/// any order — or merging partial sums from shards — yields the same
/// result bit for bit.
class ExactSum {
 public:
  void add(double x) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < components_.size(); ++i) {
      const double c = components_[i];
      // Knuth two-sum: s is the rounded sum, err the exact residue.
      const double s = c + x;
      const double bb = s - c;
      const double err = (c - (s - bb)) + (x - bb);
      if (err != 0.0)
        components_[out++] = err;
      x = s;
    }
    components_.resize(out);
    if (x != 0.0)
      components_.push_back(x);
  }

  /// Exact merge; associative and commutative at the bit level.
  void merge(const ExactSum& other) {
    for (double c : other.components_)
      add(c);
  }

  /// Rounded value of the exact sum.
  double value() const {
    double total = 0.0;
    for (double c : components_)
      total += c;
    return total;
  }

  bool empty() const { return components_.empty(); }

 private:
  std::vector<double> components_;  // non-overlapping, increasing magnitude
};

}  // namespace tsr
