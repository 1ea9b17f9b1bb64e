#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "pspd/errors.hpp"

namespace pspd {

// Fixed-width 1-D histogram. Out-of-range fills land in the under/overflow
// counters, not in the bins.
struct Histogram1D {
  double lo = 0.0;
  double bin_width = 1.0;
  std::vector<std::uint64_t> counts;
  std::uint64_t underflow = 0;
  std::uint64_t overflow = 0;

  Histogram1D() = default;
  Histogram1D(double lo_, double hi, double bin_width_) : lo(lo_), bin_width(bin_width_) {
    if (!(bin_width_ > 0.0) || !(hi > lo_))
      throw DomainError("histogram: need hi > lo and bin_width > 0");
    counts.assign(static_cast<std::size_t>(std::ceil((hi - lo_) / bin_width_)), 0);
  }

  int n_bins() const { return static_cast<int>(counts.size()); }
  double hi() const { return lo + bin_width * n_bins(); }
  double bin_low(int i) const { return lo + bin_width * i; }
  double bin_high(int i) const { return lo + bin_width * (i + 1); }
  double bin_center(int i) const { return lo + bin_width * (i + 0.5); }

  void fill(double x) {
    if (x < lo) {
      ++underflow;
      return;
    }
    auto i = static_cast<std::size_t>((x - lo) / bin_width);
    if (i >= counts.size()) {
      ++overflow;
      return;
    }
    ++counts[i];
  }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }

  int max_bin() const {
    int best = 0;
    for (int i = 1; i < n_bins(); ++i)
      if (counts[i] > counts[best]) best = i;
    return best;
  }

  void merge(const Histogram1D& other) {
    if (other.lo != lo || other.bin_width != bin_width || other.counts.size() != counts.size())
      throw DomainError("histogram merge: incompatible binning");
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
    underflow += other.underflow;
    overflow += other.overflow;
  }
};

} // namespace pspd
