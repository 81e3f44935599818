#include "flowkit/extension.hpp"

#include <doctest.h>

#include <cmath>

using namespace flowkit;

namespace {

const VelocityFn kDecayField = [](const Tensor& x, double, const Tensor*) {
  Tensor u = x;
  u.array() = -x.array();
  return u;
};

}  // namespace

TEST_CASE("plan_segments reproduces the worked two-segment example") {
  const SegmentPlan plan = plan_segments(30, 15, 5);
  CHECK(plan.n_win == 20);
  CHECK(plan.spans == std::vector<std::pair<Index, Index>>{{0, 15}, {10, 30}});
}

TEST_CASE("plan_segments degenerate and default layouts") {
  const SegmentPlan single = plan_segments(12, 15, 5);
  CHECK(single.spans == std::vector<std::pair<Index, Index>>{{0, 12}});

  // Default extension setup: window 40, hop 30, context 10.
  const SegmentPlan plan = plan_segments(90, 30, 10);
  CHECK(plan.n_win == 40);
  CHECK(plan.spans == std::vector<std::pair<Index, Index>>{{0, 30}, {20, 60}, {50, 90}});

  CHECK_THROWS(plan_segments(0, 10, 2));
  CHECK_THROWS(plan_segments(10, 0, 2));
  CHECK_THROWS(plan_segments(10, 5, -1));
}

TEST_CASE("bartlett window endpoints, peak, and symmetry") {
  const Eigen::ArrayXd w3 = bartlett_window(3);
  CHECK(w3[0] == 0.0);
  CHECK(w3[1] == 1.0);
  CHECK(w3[2] == 0.0);

  const Eigen::ArrayXd w2 = bartlett_window(2);
  CHECK(w2[0] == 0.0);
  CHECK(w2[1] == 0.0);

  for (Index n_win : {4, 5, 11, 40}) {
    const Eigen::ArrayXd w = bartlett_window(n_win);
    CHECK(w[0] == 0.0);
    CHECK(w[n_win - 1] == 0.0);
    CHECK((w >= 0.0).all());
    for (Index n = 0; n < n_win; ++n) CHECK(w[n] == doctest::Approx(w[n_win - 1 - n]).epsilon(1e-15));
  }

  CHECK_THROWS(bartlett_window(1));
}

TEST_CASE("normalized masks: single segment is all ones") {
  const SegmentPlan plan = plan_segments(8, 10, 3);
  for (WindowKind kind : {WindowKind::uniform, WindowKind::bartlett}) {
    const auto masks = normalized_masks(plan, kind);
    REQUIRE(masks.size() == 1);
    CHECK((masks[0].weights == 1.0).all());
  }
}

TEST_CASE("uniform masks split the overlap evenly") {
  const SegmentPlan plan = plan_segments(30, 15, 5);
  const auto masks = normalized_masks(plan, WindowKind::uniform);
  REQUIRE(masks.size() == 2);
  // Segment 1 spans [0,15): full weight until the overlap [10,15).
  for (Index f = 0; f < 10; ++f) CHECK(masks[0].weights[f] == 1.0);
  for (Index f = 10; f < 15; ++f) CHECK(masks[0].weights[f] == 0.5);
  // Segment 2 spans [10,30): half weight on the overlap, full after.
  for (Index f = 0; f < 5; ++f) CHECK(masks[1].weights[f] == 0.5);
  for (Index f = 5; f < 20; ++f) CHECK(masks[1].weights[f] == 1.0);
}

TEST_CASE("triangle masks remove the half-step jump at the overlap boundary") {
  const SegmentPlan plan = plan_segments(30, 15, 5);
  const auto uniform = normalized_masks(plan, WindowKind::uniform);
  const auto triangle = normalized_masks(plan, WindowKind::bartlett);

  auto max_step = [&](const std::vector<SoftMask>& masks) {
    double worst = 0.0;
    for (size_t j = 0; j < masks.size(); ++j) {
      for (Index f = 1; f < masks[j].weights.size(); ++f) {
        worst = std::max(worst, std::abs(masks[j].weights[f] - masks[j].weights[f - 1]));
      }
    }
    return worst;
  };
  CHECK(max_step(uniform) == 0.5);
  CHECK(max_step(triangle) < 0.5);
}

TEST_CASE("masks form a partition of unity for random plans") {
  Rng rng(404);
  for (int trial = 0; trial < 100; ++trial) {
    const Index hop = 1 + static_cast<Index>(rng.uniform_index(20));
    const Index ctx = static_cast<Index>(rng.uniform_index(20));
    const Index total = 1 + static_cast<Index>(rng.uniform_index(200));
    const SegmentPlan plan = plan_segments(total, hop, ctx);
    for (WindowKind kind : {WindowKind::uniform, WindowKind::bartlett}) {
      const auto masks = normalized_masks(plan, kind);
      Eigen::ArrayXd sums = Eigen::ArrayXd::Zero(total);
      for (size_t j = 0; j < plan.spans.size(); ++j) {
        const auto [s, e] = plan.spans[j];
        CHECK((masks[j].weights >= 0.0).all());
        for (Index f = s; f < e; ++f) sums[f] += masks[j].weights[f - s];
      }
      for (Index f = 0; f < total; ++f) CHECK(std::abs(sums[f] - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("multi-diffusion with one segment is bit-identical to euler") {
  const SegmentPlan plan = plan_segments(12, 20, 4);
  REQUIRE(plan.spans.size() == 1);
  const TimeSchedule sched = linear_schedule(16);
  Rng rng(55);
  const Tensor x0 = sample_standard_normal(rng, Shape{12, 2});
  for (WindowKind kind : {WindowKind::uniform, WindowKind::bartlett}) {
    const Tensor md = multidiffusion_solve({kDecayField}, plan, sched, kind, x0);
    const Tensor one_shot = euler_solve(kDecayField, x0, sched);
    CHECK(exact_equal(md, one_shot));
  }
}

TEST_CASE("identical frame-independent fields merge to the one-shot solution") {
  const SegmentPlan plan = plan_segments(40, 12, 6);
  const TimeSchedule sched = linear_schedule(8);
  // Frame-independent field: u depends only on t.
  const VelocityFn drift = [](const Tensor& x, double t, const Tensor*) {
    return Tensor::constant(x.shape(), 0.5 + t);
  };
  std::vector<VelocityFn> fields(plan.spans.size(), drift);
  const Tensor x0(Shape{40, 1});
  const Tensor md = multidiffusion_solve(fields, plan, sched, WindowKind::uniform, x0);
  const Tensor one_shot = euler_solve(drift, x0, sched);
  for (Index i = 0; i < md.size(); ++i) CHECK(md[i] == doctest::Approx(one_shot[i]).epsilon(1e-12));
}

TEST_CASE("two constant fields meet at the average on a uniform overlap") {
  const SegmentPlan plan = plan_segments(30, 15, 5);
  TimeSchedule one_step;
  one_step.knots = {0.0, 1.0};
  const double a = 2.0;
  const double b = -4.0;
  std::vector<VelocityFn> fields = {
      [a](const Tensor& x, double, const Tensor*) { return Tensor::constant(x.shape(), a); },
      [b](const Tensor& x, double, const Tensor*) { return Tensor::constant(x.shape(), b); },
  };
  const Tensor out = multidiffusion_solve(fields, plan, one_step, WindowKind::uniform, Tensor(Shape{30, 1}));
  for (Index f = 0; f < 10; ++f) CHECK(out[f] == doctest::Approx(a).epsilon(1e-15));
  for (Index f = 10; f < 15; ++f) CHECK(out[f] == doctest::Approx((a + b) / 2.0).epsilon(1e-15));
  for (Index f = 15; f < 30; ++f) CHECK(out[f] == doctest::Approx(b).epsilon(1e-15));
}

TEST_CASE("ar_context layouts") {
  Tensor prev(Shape{4, 1});
  for (Index i = 0; i < 4; ++i) prev[i] = static_cast<double>(i + 1);

  const Tensor ctx = ar_context(prev, 2, 2);
  CHECK(ctx[0] == 3.0);
  CHECK(ctx[1] == 4.0);
  CHECK(ctx[2] == 0.0);
  CHECK(ctx[3] == 0.0);

  const Tensor zero_ctx = ar_context(prev, 0, 4);
  CHECK((zero_ctx.array() == 0.0).all());

  const Tensor full_ctx = ar_context(prev, 4, 0);
  CHECK(exact_equal(full_ctx, prev));

  CHECK_THROWS(ar_context(prev, 3, 2));
}

TEST_CASE("trajectory blend ramps linearly") {
  Tensor x_hat(Shape{5, 1});
  Tensor prev(Shape{5, 1});
  x_hat.array() = 10.0;
  prev.array() = 0.0;
  const Tensor out = ar_trajectory_blend(x_hat, prev);
  const double expect[5] = {2.0, 4.0, 6.0, 8.0, 10.0};  // w = 0.2 .. 1.0
  for (Index i = 0; i < 5; ++i) CHECK(out[i] == doctest::Approx(expect[i]).epsilon(1e-15));
}

TEST_CASE("trajectory blend degenerate cases") {
  Tensor one(Shape{1, 1});
  one[0] = 3.0;
  Tensor other(Shape{1, 1});
  other[0] = -9.0;
  CHECK(exact_equal(ar_trajectory_blend(one, other), one));  // n_ctx = 1 -> w = 1

  Rng rng(66);
  const Tensor same = sample_standard_normal(rng, Shape{7, 2});
  CHECK(exact_equal(ar_trajectory_blend(same, same), same));  // convexity
}

TEST_CASE("ar_generate with a single segment equals the one-shot solve") {
  const SegmentPlan plan = plan_segments(10, 16, 4);
  REQUIRE(plan.spans.size() == 1);
  const TimeSchedule sched = linear_schedule(12);
  Rng rng(314);
  for (ArMode mode : {ArMode::context_cond, ArMode::trajectory_reg, ArMode::both}) {
    const Tensor out = ar_generate(kDecayField, plan, sched, mode, rng, 2);
    Rng noise_rng = rng.split(0).split(0);
    const Tensor x0 = sample_standard_normal(noise_rng, Shape{10, 2});
    const Tensor cond(Shape{10, 2});
    const Tensor one_shot = euler_solve(kDecayField, x0, sched, &cond);
    CHECK(exact_equal(out, one_shot));
  }
}

TEST_CASE("zero context makes segments independent") {
  const SegmentPlan plan = plan_segments(24, 8, 0);
  REQUIRE(plan.spans.size() == 3);
  const TimeSchedule sched = linear_schedule(6);
  Rng rng(217);
  const Tensor out = ar_generate(kDecayField, plan, sched, ArMode::both, rng, 1);
  for (size_t j = 0; j < plan.spans.size(); ++j) {
    const auto [s, e] = plan.spans[j];
    Rng noise_rng = rng.split(j).split(0);
    const Tensor x0 = sample_standard_normal(noise_rng, Shape{e - s, 1});
    const Tensor cond(Shape{e - s, 1});
    const Tensor expect = euler_solve(kDecayField, x0, sched, &cond);
    CHECK(exact_equal(out.frame_slice(s, e), expect));
  }
}

TEST_CASE("equal segment predictions make the overlap blend a no-op") {
  // One Euler step of u(x) = -x lands exactly on zero from any noise, so every
  // segment predicts the same content and blending cannot change it.
  TimeSchedule one_step;
  one_step.knots = {0.0, 1.0};
  const SegmentPlan plan = plan_segments(20, 10, 4);
  Rng rng(998);
  for (ArMode mode : {ArMode::context_cond, ArMode::trajectory_reg, ArMode::both}) {
    const Tensor out = ar_generate(kDecayField, plan, one_step, mode, rng, 1);
    CHECK((out.array() == 0.0).all());
  }
}

TEST_CASE("beam with one candidate and one beam reduces to ar_generate") {
  const SegmentPlan plan = plan_segments(34, 12, 5);
  const TimeSchedule sched = linear_schedule(9);
  Rng rng(2718);
  for (ArMode mode : {ArMode::context_cond, ArMode::trajectory_reg, ArMode::both}) {
    const Tensor ar = ar_generate(kDecayField, plan, sched, mode, rng, 2);
    const Tensor beam = beam_extend(
        kDecayField, plan, sched, [](const Tensor& x) { return x.array().sum(); }, 1, 1, rng, mode, 2);
    CHECK(exact_equal(ar, beam));
  }
}

TEST_CASE("constant scorer keeps the first stream") {
  const SegmentPlan plan = plan_segments(30, 10, 4);
  const TimeSchedule sched = linear_schedule(5);
  Rng rng(31337);
  const Tensor ar = ar_generate(kDecayField, plan, sched, ArMode::both, rng, 1);
  const Tensor beam = beam_extend(
      kDecayField, plan, sched, [](const Tensor&) { return 1.0; }, 3, 2, rng, ArMode::both, 1);
  CHECK(exact_equal(ar, beam));
}

TEST_CASE("norm scorer picks the smallest attainable norm") {
  // u(x) = -x admits a zero fixed point; the best candidate is the one whose
  // noise trajectory decays to the smallest norm.
  const SegmentPlan plan = plan_segments(16, 8, 0);
  const TimeSchedule sched = linear_schedule(4);
  Rng rng(1234);
  const SequenceScorer scorer = [](const Tensor& x) { return -x.array().square().sum(); };
  const Index candidates = 4;
  const Tensor best = beam_extend(kDecayField, plan, sched, scorer, candidates, 1, rng, ArMode::both, 1);

  // Oracle: enumerate all candidate streams per segment independently (with
  // beam 1 and no information path the segments decouple).
  double best_norm_total = 0.0;
  for (size_t j = 0; j < plan.spans.size(); ++j) {
    const auto [s, e] = plan.spans[j];
    double best_norm = std::numeric_limits<double>::infinity();
    for (Index c = 0; c < candidates; ++c) {
      Rng noise_rng = rng.split(j).split(c);
      const Tensor x0 = sample_standard_normal(noise_rng, Shape{e - s, 1});
      const Tensor cond(Shape{e - s, 1});
      const Tensor x1 = euler_solve(kDecayField, x0, sched, &cond);
      best_norm = std::min(best_norm, x1.array().square().sum());
    }
    best_norm_total += best_norm;
  }
  CHECK(best.array().square().sum() == doctest::Approx(best_norm_total).epsilon(1e-12));
}

TEST_CASE("non-finite scorer raises") {
  const SegmentPlan plan = plan_segments(8, 8, 0);
  const TimeSchedule sched = linear_schedule(2);
  Rng rng(5);
  CHECK_THROWS(beam_extend(
      kDecayField, plan, sched, [](const Tensor&) { return std::nan(""); }, 2, 1, rng));
  CHECK_THROWS(beam_extend(
      kDecayField, plan, sched, [](const Tensor&) { return 0.0; }, 1, 2, rng));
}
