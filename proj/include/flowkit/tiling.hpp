#pragma once

#include "flowkit/tensor.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace flowkit {

/// Temporal codec contract. encode maps [T, ...] to [ceil(T/temporal_factor), ...];
/// decode maps [L, ...] back to [L*temporal_factor, ...]. The neural autoencoder
/// is out of scope here; identity/linear/test codecs plug in instead.
struct CodecSpec {
  Index temporal_factor = 8;
  Index spatial_factor = 8;
  Index channels = 16;
  std::function<Tensor(const Tensor&)> encode;
  std::function<Tensor(const Tensor&)> decode;
};

CodecSpec identity_codec();
/// Per-element scale on encode and inverse scale on decode (factor 1).
CodecSpec linear_codec(double scale);
/// Factor-f block codec: encode averages each f-frame block (tail block may be
/// short), decode repeats each latent frame f times. Linear and frame-local.
CodecSpec block_mean_codec(Index factor);

/// Frame spans tiling [0, t_frames): consecutive spans overlap by exactly
/// `overlap`, the last span is clipped at t_frames.
struct TilePlan {
  Index tile_len = 0;
  Index overlap = 0;
  std::vector<std::pair<Index, Index>> spans;
};

/// Latent frames for t_raw input frames: ceil(t_raw / factor).
Index latent_frame_count(Index t_raw, Index factor);

/// Outlier penalty with hinge radius r: mean over spatial positions of
/// max(||x_ij - mean|| - r*||std||, 0), with per-channel mean/std over (H, W)
/// and Euclidean norms over channels. Input is [C,H,W] or [T,C,H,W]; the frame
/// axis folds into a batch whose per-frame losses are averaged.
double opl_loss(const Tensor& x, double r);

TilePlan plan_tiles(Index t_frames, Index tile_len, Index overlap);

/// Stitch tiles left to right, crossfading each overlap: for an overlap of
/// length N, frame j in 1..N takes weight w_j = 1 - (j-1)/(N-1) on the earlier
/// tile, descending 1 -> 0 (N = 1 uses w = 0.5). Weights at every frame sum
/// to 1, and identical overlap content passes through bit-exactly.
Tensor blend_stitch(const std::vector<Tensor>& tiles, const TilePlan& plan);

/// Tile-encode x per encode_plan, stitch the latent, tile-decode per
/// decode_plan (spans in raw-frame units over the padded length
/// factor*ceil(T/factor)), stitch with crossfade, and drop the spurious
/// trailing frames so the result has exactly T frames.
Tensor tiled_apply(const CodecSpec& codec, const Tensor& x, const TilePlan& encode_plan,
                   const TilePlan& decode_plan);

/// decode(encode(x)) truncated to x's frame count; the untiled reference.
Tensor codec_roundtrip(const CodecSpec& codec, const Tensor& x);

struct DurationBucket {
  double duration_lo = 0.0;
  double duration_hi = 0.0;
  double fps_lo = 0.0;
  double fps_hi = 0.0;
  Index video_frames = 0;
  Index latent_frames = 0;
};

/// Bucket whose duration/FPS ranges contain the input; rows are checked in
/// table order and point rows use a +-0.005 s duration tolerance. Throws
/// ("no bucket") when nothing matches.
DurationBucket assign_duration_bucket(double duration_s, double fps);

const std::vector<DurationBucket>& duration_bucket_table();

}  // namespace flowkit
