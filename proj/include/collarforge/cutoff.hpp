#pragma once

#include <cmath>

#include "collarforge/errors.hpp"

namespace collarforge {

// Smooth transition profile built from x -> exp(-1/x): exactly 1 on [0, s0],
// exactly 0 on [s1, inf), strictly decreasing in between. Powers the Seeley
// reflection cutoff, partition-of-unity bumps, the tau height profile and the
// geodesic interpolation weight.
class CutoffProfile {
 public:
  CutoffProfile() : s0_(0.25), s1_(0.5) {}
  CutoffProfile(double s0, double s1) : s0_(s0), s1_(s1) {
    if (!(s0 > 0.0) || !(s1 > s0))
      fail(ErrorKind::Input, "cutoff profile requires 0 < s0 < s1");
  }

  double s0() const { return s0_; }
  double s1() const { return s1_; }

  // Value at |s|; callers pass nonnegative arguments.
  double operator()(double s) const {
    if (s <= s0_) return 1.0;
    if (s >= s1_) return 0.0;
    return smoothstep((s1_ - s) / (s1_ - s0_));
  }

  // C^inf step: 0 at x <= 0, 1 at x >= 1.
  static double smoothstep(double x) {
    double a = ramp(x);
    double b = ramp(1.0 - x);
    return a / (a + b);
  }

  static double ramp(double x) { return x > 0.0 ? std::exp(-1.0 / x) : 0.0; }

 private:
  double s0_;
  double s1_;
};

}  // namespace collarforge
