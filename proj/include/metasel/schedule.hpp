#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace metasel {

/// Cosine annealing from α at t = 0 down to 0 at t = t_max.
inline double lr_schedule(double t, double t_max, double alpha) {
  if (!(t_max > 0.0)) throw std::invalid_argument("lr_schedule: t_max must be > 0");
  if (!(t >= 0.0 && t <= t_max)) throw std::out_of_range("lr_schedule: t out of range");
  return 0.5 * alpha * (1.0 + std::cos(std::numbers::pi * (t / t_max)));
}

}  // namespace metasel
