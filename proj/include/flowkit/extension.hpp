#pragma once

#include "flowkit/rng.hpp"
#include "flowkit/schedule.hpp"
#include "flowkit/solver.hpp"
#include "flowkit/tensor.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace flowkit {

/// Overlapping segment layout for long-form generation. With J = ceil(N/hop)
/// segments, segment j (1-based) spans
///   [max(0, (j-1)*hop - ctx), min(N, j*hop)).
/// Unclipped segments are n_win = hop + ctx frames long and consecutive
/// segments overlap by ctx frames.
struct SegmentPlan {
  Index n_total = 0;
  Index n_win = 0;
  Index n_hop = 0;
  Index n_ctx = 0;
  std::vector<std::pair<Index, Index>> spans;
};

SegmentPlan plan_segments(Index n_total, Index n_hop, Index n_ctx);

enum class WindowKind { uniform, bartlett };

/// Triangular window m_n = (2/(n_win-1)) * ((n_win-1)/2 - |n - (n_win-1)/2|),
/// n = 0..n_win-1. Zero at both ends, peak at the center. n_win must be >= 2.
Eigen::ArrayXd bartlett_window(Index n_win);

/// Per-segment soft-mask weights over the frames the segment spans. After
/// zero-padding to the full sequence, the per-frame weights across segments
/// sum to 1. Frames whose raw window weight totals zero (triangle-window end
/// frames covered by a single segment) fall back to uniform weights over the
/// covering segments.
struct SoftMask {
  Eigen::ArrayXd weights;
};

std::vector<SoftMask> normalized_masks(const SegmentPlan& plan, WindowKind window);

/// One Euler step per segment per schedule interval, merged with the
/// normalized soft masks; repeats until t = 1. `fields` holds one velocity
/// field per segment (conditioning baked into each closure). A single-segment
/// plan reproduces euler_solve on the whole sequence bit for bit.
Tensor multidiffusion_solve(const std::vector<VelocityFn>& fields, const SegmentPlan& plan,
                            const TimeSchedule& sched, WindowKind window, const Tensor& x_init);

/// Context tensor for the next segment: first n_ctx frames are the last n_ctx
/// frames of prev_x1, the remaining n_hop frames are zero.
Tensor ar_context(const Tensor& prev_x1, Index n_ctx, Index n_hop);

/// Linear-ramp blend over an overlap head: out_n = w_n*x_hat_n + (1-w_n)*prev_n
/// with w_n = n/n_ctx for n = 1..n_ctx, so the first frame stays mostly on the
/// previous segment and the last is fully the new one.
Tensor ar_trajectory_blend(const Tensor& x_hat_head, const Tensor& prev_tail);

enum class ArMode { context_cond, trajectory_reg, both };

/// Segment-level autoregressive generation: segments are solved one at a time
/// with fresh noise; information passes forward through the context tensor
/// (context_cond) and/or a per-step trajectory blend against the previous
/// segment's state at the same flow time (trajectory_reg). Overlapping frames
/// are finalized with the later segment's consolidated prediction.
Tensor ar_generate(const VelocityFn& field, const SegmentPlan& plan, const TimeSchedule& sched, ArMode mode,
                   const Rng& rng, Index channels = 1);

using SequenceScorer = std::function<double(const Tensor& partial)>;

/// Segment-level beam search over ar_generate continuations: each surviving
/// prefix spawns `candidates` continuations on distinct rng streams, the
/// partial generations are ranked by `scorer` (ties keep generation order) and
/// pruned to `beam`. candidates = beam = 1 reduces exactly to ar_generate.
Tensor beam_extend(const VelocityFn& field, const SegmentPlan& plan, const TimeSchedule& sched,
                   const SequenceScorer& scorer, Index candidates, Index beam, const Rng& rng,
                   ArMode mode = ArMode::both, Index channels = 1);

}  // namespace flowkit
