#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "deitfake/tensor.hpp"

namespace deitfake::testing {

// Central difference of f with respect to element i of x, evaluated in
// double from a float buffer.
inline double central_difference(Tensor& x, std::size_t i, const std::function<double()>& f, double h) {
  const float saved = x.data()[i];
  x.data()[i] = static_cast<float>(saved + h);
  const double up = f();
  x.data()[i] = static_cast<float>(saved - h);
  const double down = f();
  x.data()[i] = saved;
  return (up - down) / (2.0 * h);
}

// Ridders' extrapolation of central differences: starts at step h, shrinks
// it by 1.4 per row, and returns the estimate with the smallest error bound.
// Far less sensitive to the choice of h than a single central difference.
inline double ridders_derivative(Tensor& x, std::size_t i, const std::function<double()>& f, double h,
                                 double* error = nullptr) {
  constexpr int kTab = 8;
  constexpr double kCon = 1.4;
  constexpr double kCon2 = kCon * kCon;
  double a[kTab][kTab];
  double best = 0.0;
  double err = std::numeric_limits<double>::max();
  a[0][0] = central_difference(x, i, f, h);
  best = a[0][0];
  for (int r = 1; r < kTab; ++r) {
    h /= kCon;
    a[0][r] = central_difference(x, i, f, h);
    double fac = kCon2;
    for (int j = 1; j <= r; ++j) {
      a[j][r] = (a[j - 1][r] * fac - a[j - 1][r - 1]) / (fac - 1.0);
      fac *= kCon2;
      const double e = std::max(std::abs(a[j][r] - a[j - 1][r]), std::abs(a[j][r] - a[j - 1][r - 1]));
      if (e <= err) {
        err = e;
        best = a[j][r];
      }
    }
    // Higher order got worse by a wide margin: rounding has taken over.
    if (std::abs(a[r][r] - a[r - 1][r - 1]) >= 2.0 * err) break;
  }
  if (error != nullptr) *error = err;
  return best;
}

// Relative error with an absolute floor so near-zero gradients compare sanely.
inline double rel_error(double analytic, double numeric, double floor = 1e-3) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Runs build() under a tape and back-propagates its scalar output. Leaves
// the gradients in the inputs.
inline Tensor run_backward(const std::function<Tensor()>& build) {
  GradTape tape;
  Tensor out;
  {
    GradTape::Recording rec(tape);
    out = build();
  }
  backward(out, tape);
  return out;
}

}  // namespace deitfake::testing
