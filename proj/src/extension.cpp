#include "flowkit/extension.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace flowkit {

namespace {

// Nominal (unclipped) start of 0-based segment j; negative for j = 0 when ctx > 0.
Index nominal_start(const SegmentPlan& plan, size_t j) {
  return static_cast<Index>(j) * plan.n_hop - plan.n_ctx;
}

Eigen::ArrayXd window_values(WindowKind kind, Index n_win) {
  if (kind == WindowKind::uniform) return Eigen::ArrayXd::Ones(std::max<Index>(n_win, 1));
  return bartlett_window(std::max<Index>(n_win, 2));
}

struct SegmentSolveResult {
  Tensor x1;                       // final state of the segment
  std::vector<Tensor> trajectory;  // state per knot, aligned with sched.knots
};

// Euler-solve one segment; in trajectory-regularized modes the overlap head is
// blended after every step toward the previous segment's state at the same knot.
SegmentSolveResult solve_segment(const VelocityFn& field, const TimeSchedule& sched, const Tensor& x0,
                                 const Tensor& cond, ArMode mode, Index ctx_len,
                                 const std::vector<Tensor>* prev_trajectory, Index prev_len) {
  const bool blend = (mode == ArMode::trajectory_reg || mode == ArMode::both) && prev_trajectory != nullptr &&
                     ctx_len > 0;
  SegmentSolveResult res;
  res.trajectory.reserve(sched.knots.size());
  Tensor x = x0;
  res.trajectory.push_back(x);
  for (size_t i = 0; i + 1 < sched.knots.size(); ++i) {
    const double t = sched.knots[i];
    const double h = sched.knots[i + 1] - t;
    Tensor u = field(x, t, &cond);
    require_same_shape(u, x, "segment velocity");
    x.array() += h * u.array();
    if (blend) {
      const Tensor& prev_state = (*prev_trajectory)[i + 1];
      const Tensor prev_tail = prev_state.frame_slice(prev_len - ctx_len, prev_len);
      x.set_frames(0, ar_trajectory_blend(x.frame_slice(0, ctx_len), prev_tail));
    }
    res.trajectory.push_back(x);
  }
  res.x1 = std::move(x);
  return res;
}

Rng segment_noise_rng(const Rng& rng, size_t segment, Index candidate) {
  return rng.split(static_cast<std::uint64_t>(segment)).split(static_cast<std::uint64_t>(candidate));
}

}  // namespace

SegmentPlan plan_segments(Index n_total, Index n_hop, Index n_ctx) {
  if (n_total < 1) throw std::invalid_argument("plan_segments: n_total must be >= 1");
  if (n_hop < 1) throw std::invalid_argument("plan_segments: n_hop must be >= 1");
  if (n_ctx < 0) throw std::invalid_argument("plan_segments: n_ctx must be >= 0");
  SegmentPlan plan;
  plan.n_total = n_total;
  plan.n_hop = n_hop;
  plan.n_ctx = n_ctx;
  plan.n_win = n_hop + n_ctx;
  const Index segments = (n_total + n_hop - 1) / n_hop;
  for (Index j = 1; j <= segments; ++j) {
    const Index start = std::max<Index>(0, (j - 1) * n_hop - n_ctx);
    const Index end = std::min<Index>(n_total, j * n_hop);
    plan.spans.emplace_back(start, end);
  }
  return plan;
}

Eigen::ArrayXd bartlett_window(Index n_win) {
  if (n_win < 2) throw std::invalid_argument("bartlett_window: n_win must be >= 2");
  Eigen::ArrayXd w(n_win);
  const double half = static_cast<double>(n_win - 1) / 2.0;
  for (Index n = 0; n < n_win; ++n) {
    w[n] = (half - std::abs(static_cast<double>(n) - half)) / half;
  }
  return w;
}

std::vector<SoftMask> normalized_masks(const SegmentPlan& plan, WindowKind window) {
  if (plan.spans.empty()) throw std::invalid_argument("normalized_masks: empty plan");
  const Eigen::ArrayXd win = window_values(window, plan.n_win);

  std::vector<Eigen::ArrayXd> raw(plan.spans.size());
  Eigen::ArrayXd total = Eigen::ArrayXd::Zero(plan.n_total);
  Eigen::ArrayXi cover = Eigen::ArrayXi::Zero(plan.n_total);
  for (size_t j = 0; j < plan.spans.size(); ++j) {
    const auto [s, e] = plan.spans[j];
    raw[j].resize(e - s);
    const Index ns = nominal_start(plan, j);
    for (Index f = s; f < e; ++f) {
      const Index wi = std::min<Index>(f - ns, win.size() - 1);
      raw[j][f - s] = win[wi];
      total[f] += win[wi];
      cover[f] += 1;
    }
  }

  std::vector<SoftMask> masks(plan.spans.size());
  for (size_t j = 0; j < plan.spans.size(); ++j) {
    const auto [s, e] = plan.spans[j];
    masks[j].weights.resize(e - s);
    for (Index f = s; f < e; ++f) {
      if (total[f] > 0.0) {
        masks[j].weights[f - s] = raw[j][f - s] / total[f];
      } else {
        // Triangle end frames covered only by zero-weight window samples.
        masks[j].weights[f - s] = 1.0 / static_cast<double>(cover[f]);
      }
    }
  }
  return masks;
}

Tensor multidiffusion_solve(const std::vector<VelocityFn>& fields, const SegmentPlan& plan,
                            const TimeSchedule& sched, WindowKind window, const Tensor& x_init) {
  sched.validate();
  if (fields.size() != plan.spans.size()) {
    throw std::invalid_argument("multidiffusion_solve: one field per segment required");
  }
  if (x_init.frames() != plan.n_total) {
    throw std::invalid_argument("multidiffusion_solve: x_init must have n_total frames");
  }
  const std::vector<SoftMask> masks = normalized_masks(plan, window);
  const Index stride = x_init.frame_stride();

  Tensor x = x_init;
  for (size_t i = 0; i + 1 < sched.knots.size(); ++i) {
    const double t = sched.knots[i];
    const double h = sched.knots[i + 1] - t;
    Tensor merged(x.shape());
    for (size_t j = 0; j < plan.spans.size(); ++j) {
      const auto [s, e] = plan.spans[j];
      Tensor xj = x.frame_slice(s, e);
      Tensor u = fields[j](xj, t, nullptr);
      require_same_shape(u, xj, "multidiffusion velocity");
      xj.array() += h * u.array();
      for (Index f = 0; f < e - s; ++f) {
        merged.array().segment((s + f) * stride, stride) +=
            masks[j].weights[f] * xj.array().segment(f * stride, stride);
      }
    }
    x = std::move(merged);
  }
  return x;
}

Tensor ar_context(const Tensor& prev_x1, Index n_ctx, Index n_hop) {
  if (n_ctx < 0 || n_hop < 0) throw std::invalid_argument("ar_context: negative extent");
  if (prev_x1.frames() != n_ctx + n_hop) {
    throw std::invalid_argument("ar_context: prev_x1 must have n_ctx + n_hop frames");
  }
  Tensor out(prev_x1.shape());
  if (n_ctx > 0) {
    out.set_frames(0, prev_x1.frame_slice(prev_x1.frames() - n_ctx, prev_x1.frames()));
  }
  return out;
}

Tensor ar_trajectory_blend(const Tensor& x_hat_head, const Tensor& prev_tail) {
  require_same_shape(x_hat_head, prev_tail, "ar_trajectory_blend");
  const Index n_ctx = x_hat_head.frames();
  if (n_ctx < 1) throw std::invalid_argument("ar_trajectory_blend: empty head");
  const Index stride = x_hat_head.frame_stride();
  Tensor out(x_hat_head.shape());
  for (Index n = 1; n <= n_ctx; ++n) {
    const double w = static_cast<double>(n) / static_cast<double>(n_ctx);
    auto dst = out.array().segment((n - 1) * stride, stride);
    const auto hat = x_hat_head.array().segment((n - 1) * stride, stride);
    const auto prev = prev_tail.array().segment((n - 1) * stride, stride);
    if (w == 1.0) {
      dst = hat;
    } else {
      dst = prev + w * (hat - prev);
    }
  }
  return out;
}

Tensor ar_generate(const VelocityFn& field, const SegmentPlan& plan, const TimeSchedule& sched, ArMode mode,
                   const Rng& rng, Index channels) {
  sched.validate();
  if (plan.spans.empty()) throw std::invalid_argument("ar_generate: empty plan");
  if (channels < 1) throw std::invalid_argument("ar_generate: channels must be >= 1");
  const bool use_context = mode == ArMode::context_cond || mode == ArMode::both;

  Tensor output(Shape{plan.n_total, channels});
  std::vector<Tensor> prev_trajectory;
  Index prev_start = 0;
  Index prev_end = 0;
  for (size_t j = 0; j < plan.spans.size(); ++j) {
    const auto [s, e] = plan.spans[j];
    const Index len = e - s;
    const Index ctx_len = (j == 0) ? 0 : std::max<Index>(0, prev_end - s);

    Rng noise_rng = segment_noise_rng(rng, j, 0);
    const Tensor x0 = sample_standard_normal(noise_rng, Shape{len, channels});

    Tensor cond(Shape{len, channels});
    if (use_context && ctx_len > 0) {
      cond.set_frames(0, output.frame_slice(s, s + ctx_len));
    }

    SegmentSolveResult solved = solve_segment(field, sched, x0, cond, mode, ctx_len,
                                              j == 0 ? nullptr : &prev_trajectory, prev_end - prev_start);
    output.set_frames(s, solved.x1);  // overlapping frames take the later segment
    prev_trajectory = std::move(solved.trajectory);
    prev_start = s;
    prev_end = e;
  }
  return output;
}

Tensor beam_extend(const VelocityFn& field, const SegmentPlan& plan, const TimeSchedule& sched,
                   const SequenceScorer& scorer, Index candidates, Index beam, const Rng& rng, ArMode mode,
                   Index channels) {
  sched.validate();
  if (plan.spans.empty()) throw std::invalid_argument("beam_extend: empty plan");
  if (channels < 1) throw std::invalid_argument("beam_extend: channels must be >= 1");
  if (candidates < 1 || beam < 1 || candidates < beam) {
    throw std::invalid_argument("beam_extend: need candidates >= beam >= 1");
  }
  const bool use_context = mode == ArMode::context_cond || mode == ArMode::both;

  struct Prefix {
    Tensor output;
    std::vector<Tensor> trajectory;
    Index prev_start = 0;
    Index prev_end = 0;
    double score = 0.0;
  };
  std::vector<Prefix> beams(1);
  beams[0].output = Tensor(Shape{plan.n_total, channels});

  for (size_t j = 0; j < plan.spans.size(); ++j) {
    const auto [s, e] = plan.spans[j];
    const Index len = e - s;
    std::vector<Prefix> expanded;
    expanded.reserve(beams.size() * static_cast<size_t>(candidates));
    for (size_t p = 0; p < beams.size(); ++p) {
      const Prefix& base = beams[p];
      const Index ctx_len = (j == 0) ? 0 : std::max<Index>(0, base.prev_end - s);
      for (Index c = 0; c < candidates; ++c) {
        Rng noise_rng =
            segment_noise_rng(rng, j, static_cast<Index>(p) * candidates + c);
        const Tensor x0 = sample_standard_normal(noise_rng, Shape{len, channels});

        Tensor cond(Shape{len, channels});
        if (use_context && ctx_len > 0) {
          cond.set_frames(0, base.output.frame_slice(s, s + ctx_len));
        }

        SegmentSolveResult solved =
            solve_segment(field, sched, x0, cond, mode, ctx_len, j == 0 ? nullptr : &base.trajectory,
                          base.prev_end - base.prev_start);

        Prefix next;
        next.output = base.output;
        next.output.set_frames(s, solved.x1);
        next.trajectory = std::move(solved.trajectory);
        next.prev_start = s;
        next.prev_end = e;
        next.score = scorer(next.output.frame_slice(0, e));
        if (!std::isfinite(next.score)) {
          throw std::runtime_error("beam_extend: scorer returned non-finite value");
        }
        expanded.push_back(std::move(next));
      }
    }
    std::stable_sort(expanded.begin(), expanded.end(),
                     [](const Prefix& a, const Prefix& b) { return a.score > b.score; });
    if (static_cast<Index>(expanded.size()) > beam) expanded.resize(static_cast<size_t>(beam));
    beams = std::move(expanded);
  }
  return beams.front().output;
}

}  // namespace flowkit
