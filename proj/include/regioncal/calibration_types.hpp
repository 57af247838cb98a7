#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "regioncal/types.hpp"

namespace regioncal {

/// Calibrated score sigma(s, a, b) = 1 / (1 + exp(a*s + b)).
///
/// Evaluated branch-wise so the result stays finite for any |a*s + b| a
/// double can hold; far in the tails it saturates to exactly 0 or 1.
inline double sigmoid(double score, double a, double b) {
  const double z = a * score + b;
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(z));
}

/// Per-class sigmoid parameters, indexed by ClassId.
struct CalibrationParams {
  std::vector<double> a;
  std::vector<double> b;

  std::size_t class_count() const { return a.size(); }

  bool operator==(const CalibrationParams&) const = default;
};

enum class LossKind {
  kFullySupervised,
  kWeaklySupervised,
};

/// Line-search grid for coordinate descent. Ten values per line, endpoints
/// included, so the spacing is (hi - lo) / (points - 1). The init point is
/// deliberately not required to lie on the grid; a parameter keeps its
/// current value until some grid value strictly improves the loss.
struct GridSpec {
  double a_lo = -12.0;
  double a_hi = -2.0;
  double b_lo = -10.0;
  double b_hi = 10.0;
  int points_per_line = 10;
  double init_a = -7.0;
  double init_b = 0.0;

  void validate() const {
    if (points_per_line < 2) fail("config", "grid points_per_line must be >= 2");
    if (!(a_lo < a_hi) || !(b_lo < b_hi)) fail("config", "grid ranges must be non-empty");
    if (init_a < a_lo || init_a > a_hi) fail("config", "grid a-range must contain init_a");
    if (init_b < b_lo || init_b > b_hi) fail("config", "grid b-range must contain init_b");
  }

  std::vector<double> line(double lo, double hi) const {
    std::vector<double> values(static_cast<std::size_t>(points_per_line));
    const double step = (hi - lo) / static_cast<double>(points_per_line - 1);
    for (int k = 0; k < points_per_line; ++k) values[static_cast<std::size_t>(k)] = lo + step * k;
    values.back() = hi;
    return values;
  }

  std::vector<double> a_values() const { return line(a_lo, a_hi); }
  std::vector<double> b_values() const { return line(b_lo, b_hi); }

  CalibrationParams initial_params(std::size_t class_count) const {
    CalibrationParams p;
    p.a.assign(class_count, init_a);
    p.b.assign(class_count, init_b);
    return p;
  }
};

}  // namespace regioncal
