#pragma once

#include "flowkit/schedule.hpp"
#include "flowkit/tensor.hpp"

#include <functional>
#include <optional>

namespace flowkit {

/// Velocity field contract: u(x, t, cond) -> velocity of x's shape.
/// `cond` may be null (unconditional evaluation, used by guidance).
using VelocityFn = std::function<Tensor(const Tensor& x, double t, const Tensor* cond)>;

struct GuidanceConfig {
  double scale = 1.0;
};

/// u_uncond + scale * (u_cond - u_uncond). Scale 1 returns u_cond bit-exactly,
/// scale 0 returns u_uncond bit-exactly.
Tensor cfg_velocity(const Tensor& u_cond, const Tensor& u_uncond, double scale);

/// Forward Euler from t = 0 noise to t = 1: x <- x + (t_{i+1} - t_i) * u_eff(x, t_i).
/// With guidance present, u_eff extrapolates conditional past unconditional
/// predictions via cfg_velocity.
Tensor euler_solve(const VelocityFn& field, const Tensor& x0, const TimeSchedule& sched,
                   const Tensor* cond = nullptr, const std::optional<GuidanceConfig>& guidance = std::nullopt);

/// Explicit midpoint method: k = u_eff(x, t_i); x <- x + h * u_eff(x + (h/2)*k, t_i + h/2).
Tensor midpoint_solve(const VelocityFn& field, const Tensor& x0, const TimeSchedule& sched,
                      const Tensor* cond = nullptr, const std::optional<GuidanceConfig>& guidance = std::nullopt);

}  // namespace flowkit
