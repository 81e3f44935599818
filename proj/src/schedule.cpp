#include "flowkit/schedule.hpp"

#include <stdexcept>
#include <string>

namespace flowkit {

void TimeSchedule::validate() const {
  if (knots.size() < 2) throw std::invalid_argument("schedule needs at least two knots");
  if (knots.front() != 0.0) throw std::invalid_argument("schedule must start at 0");
  if (knots.back() != 1.0) throw std::invalid_argument("schedule must end at 1");
  for (size_t i = 1; i < knots.size(); ++i) {
    if (!(knots[i] > knots[i - 1])) throw std::invalid_argument("schedule knots must be strictly increasing");
  }
}

TimeSchedule linear_schedule(Index steps) {
  if (steps < 1) throw std::invalid_argument("linear_schedule: steps must be >= 1");
  TimeSchedule sched;
  sched.knots.resize(static_cast<size_t>(steps) + 1);
  for (Index i = 0; i <= steps; ++i) {
    sched.knots[static_cast<size_t>(i)] = static_cast<double>(i) / static_cast<double>(steps);
  }
  sched.knots.back() = 1.0;
  return sched;
}

TimeSchedule linear_quadratic_schedule(Index total_steps, Index emulated_n) {
  if (total_steps < 2 || total_steps % 2 != 0) {
    throw std::invalid_argument("linear_quadratic_schedule: total_steps must be even and >= 2");
  }
  const Index half = total_steps / 2;
  if (emulated_n <= half) {
    throw std::invalid_argument("linear_quadratic_schedule: emulated_n must exceed total_steps/2 (got " +
                                std::to_string(emulated_n) + ")");
  }
  TimeSchedule sched;
  sched.knots.resize(static_cast<size_t>(total_steps) + 1);
  // Same expression as linear_schedule(emulated_n) so the prefix is bit-exact.
  for (Index i = 0; i <= half; ++i) {
    sched.knots[static_cast<size_t>(i)] = static_cast<double>(i) / static_cast<double>(emulated_n);
  }
  const double t_half = sched.knots[static_cast<size_t>(half)];
  for (Index k = 1; k <= half; ++k) {
    const double frac = static_cast<double>(k) / static_cast<double>(half);
    sched.knots[static_cast<size_t>(half + k)] = t_half + (1.0 - t_half) * frac * frac;
  }
  sched.knots.back() = 1.0;
  sched.validate();
  return sched;
}

}  // namespace flowkit
