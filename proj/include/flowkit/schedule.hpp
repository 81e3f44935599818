#pragma once

#include "flowkit/tensor.hpp"

#include <vector>

namespace flowkit {

/// Strictly increasing solver time knots t_0 = 0 ... t_S = 1, S >= 1.
struct TimeSchedule {
  std::vector<double> knots;

  Index steps() const { return static_cast<Index>(knots.size()) - 1; }
  void validate() const;
};

/// Knots i/steps for i = 0..steps.
TimeSchedule linear_schedule(Index steps);

/// First half copies the dense start of an emulated linear schedule, second
/// half covers the remainder with quadratically spaced knots.
///
/// With L = total_steps/2: t_i = i/emulated_n for i = 0..L (bit-identical to
/// linear_schedule(emulated_n)), then t_{L+k} = t_L + (1 - t_L)*(k/L)^2 for
/// k = 1..L, with the final knot forced to exactly 1.
TimeSchedule linear_quadratic_schedule(Index total_steps, Index emulated_n);

}  // namespace flowkit
