#include "flowkit/solver.hpp"

#include "flowkit/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace flowkit;

namespace {

const VelocityFn kConstantOne = [](const Tensor& x, double, const Tensor*) {
  return Tensor::constant(x.shape(), 1.0);
};

const VelocityFn kIdentityField = [](const Tensor& x, double, const Tensor*) { return x; };

Tensor scalar1(double v) {
  Tensor t(Shape{1});
  t[0] = v;
  return t;
}

}  // namespace

TEST_CASE("euler telescopes a constant field to its integral") {
  for (Index steps : {1, 7, 50}) {
    const Tensor out = euler_solve(kConstantOne, Tensor(Shape{3}), linear_schedule(steps));
    for (Index i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("euler on u(x) = x follows the closed-form recurrence") {
  for (Index n : {4, 64, 100}) {
    const Tensor out = euler_solve(kIdentityField, scalar1(1.0), linear_schedule(n));
    const double expect = std::pow(1.0 + 1.0 / static_cast<double>(n), static_cast<double>(n));
    CHECK(out[0] == doctest::Approx(expect).epsilon(1e-10));
  }
}

TEST_CASE("single-step euler adds the initial velocity") {
  const VelocityFn field = [](const Tensor& x, double, const Tensor*) {
    return Tensor::constant(x.shape(), -2.5);
  };
  TimeSchedule sched;
  sched.knots = {0.0, 1.0};
  const Tensor out = euler_solve(field, scalar1(0.75), sched);
  CHECK(out[0] == doctest::Approx(0.75 - 2.5).epsilon(1e-15));
}

TEST_CASE("midpoint on a constant field matches euler") {
  const Tensor out = midpoint_solve(kConstantOne, Tensor(Shape{2}), linear_schedule(13));
  for (Index i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("midpoint on u(x) = x follows its closed-form recurrence") {
  for (Index n : {8, 64}) {
    const Tensor out = midpoint_solve(kIdentityField, scalar1(1.0), linear_schedule(n));
    const double h = 1.0 / static_cast<double>(n);
    const double expect = std::pow(1.0 + h + h * h / 2.0, static_cast<double>(n));
    CHECK(out[0] == doctest::Approx(expect).epsilon(1e-10));
  }
}

TEST_CASE("midpoint error drops about fourfold when the step halves") {
  const double e = std::exp(1.0);
  const double err_n = std::abs(midpoint_solve(kIdentityField, scalar1(1.0), linear_schedule(64))[0] - e);
  const double err_2n = std::abs(midpoint_solve(kIdentityField, scalar1(1.0), linear_schedule(128))[0] - e);
  const double ratio = err_n / err_2n;
  CHECK(ratio > 3.5);
  CHECK(ratio < 4.5);
}

TEST_CASE("cfg velocity formula") {
  Rng rng(8);
  const Tensor u_cond = sample_standard_normal(rng, Shape{6});
  const Tensor u_uncond = sample_standard_normal(rng, Shape{6});

  SUBCASE("scale 1 is the identity on the conditional branch") {
    CHECK(exact_equal(cfg_velocity(u_cond, u_uncond, 1.0), u_cond));
  }
  SUBCASE("scale 0 returns the unconditional branch") {
    CHECK(exact_equal(cfg_velocity(u_cond, u_uncond, 0.0), u_uncond));
  }
  SUBCASE("numeric example at scale 7.5") {
    const Tensor out = cfg_velocity(Tensor::constant(Shape{1}, 2.0), Tensor::constant(Shape{1}, 1.0), 7.5);
    CHECK(out[0] == doctest::Approx(8.5).epsilon(1e-15));
  }
  SUBCASE("shape mismatch throws") {
    CHECK_THROWS(cfg_velocity(u_cond, Tensor(Shape{3}), 2.0));
  }
}

TEST_CASE("guided solve applies the extrapolation each step") {
  // Conditional field 2, unconditional 1, scale 3 -> effective 1 + 3*(2-1) = 4.
  const VelocityFn field = [](const Tensor& x, double, const Tensor* cond) {
    return Tensor::constant(x.shape(), cond != nullptr ? 2.0 : 1.0);
  };
  const Tensor cond = Tensor::constant(Shape{1}, 1.0);
  const Tensor out = euler_solve(field, Tensor(Shape{1}), linear_schedule(10), &cond, GuidanceConfig{3.0});
  CHECK(out[0] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("field output shape mismatch is rejected") {
  const VelocityFn bad = [](const Tensor&, double, const Tensor*) { return Tensor(Shape{2}); };
  CHECK_THROWS(euler_solve(bad, Tensor(Shape{3}), linear_schedule(4)));
  CHECK_THROWS(midpoint_solve(bad, Tensor(Shape{3}), linear_schedule(4)));
}
