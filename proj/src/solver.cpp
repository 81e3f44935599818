#include "flowkit/solver.hpp"

#include <cmath>
#include <stdexcept>

namespace flowkit {

namespace {

Tensor effective_velocity(const VelocityFn& field, const Tensor& x, double t, const Tensor* cond,
                          const std::optional<GuidanceConfig>& guidance) {
  if (!guidance) {
    Tensor u = field(x, t, cond);
    require_same_shape(u, x, "velocity field output");
    return u;
  }
  Tensor u_cond = field(x, t, cond);
  Tensor u_uncond = field(x, t, nullptr);
  require_same_shape(u_cond, x, "velocity field output");
  require_same_shape(u_uncond, x, "velocity field output");
  return cfg_velocity(u_cond, u_uncond, guidance->scale);
}

}  // namespace

Tensor cfg_velocity(const Tensor& u_cond, const Tensor& u_uncond, double scale) {
  require_same_shape(u_cond, u_uncond, "cfg_velocity");
  if (!std::isfinite(scale)) throw std::invalid_argument("cfg_velocity: scale must be finite");
  if (scale == 1.0) return u_cond;
  if (scale == 0.0) return u_uncond;
  Tensor out = u_uncond;
  out.array() += scale * (u_cond.array() - u_uncond.array());
  return out;
}

Tensor euler_solve(const VelocityFn& field, const Tensor& x0, const TimeSchedule& sched, const Tensor* cond,
                   const std::optional<GuidanceConfig>& guidance) {
  sched.validate();
  Tensor x = x0;
  for (size_t i = 0; i + 1 < sched.knots.size(); ++i) {
    const double t = sched.knots[i];
    const double h = sched.knots[i + 1] - t;
    const Tensor u = effective_velocity(field, x, t, cond, guidance);
    x.array() += h * u.array();
  }
  return x;
}

Tensor midpoint_solve(const VelocityFn& field, const Tensor& x0, const TimeSchedule& sched, const Tensor* cond,
                      const std::optional<GuidanceConfig>& guidance) {
  sched.validate();
  Tensor x = x0;
  for (size_t i = 0; i + 1 < sched.knots.size(); ++i) {
    const double t = sched.knots[i];
    const double h = sched.knots[i + 1] - t;
    const Tensor k = effective_velocity(field, x, t, cond, guidance);
    Tensor x_mid = x;
    x_mid.array() += (h / 2.0) * k.array();
    const Tensor u = effective_velocity(field, x_mid, t + h / 2.0, cond, guidance);
    x.array() += h * u.array();
  }
  return x;
}

}  // namespace flowkit
