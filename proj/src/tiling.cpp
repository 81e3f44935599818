#include "flowkit/tiling.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace flowkit {

namespace {

Index ceil_div(Index a, Index b) { return (a + b - 1) / b; }

void check_plan_covers(const TilePlan& plan, Index t_frames) {
  if (plan.spans.empty() || plan.spans.front().first != 0 || plan.spans.back().second != t_frames) {
    throw std::invalid_argument("tile plan does not cover [0, " + std::to_string(t_frames) + ")");
  }
}

// Crossfaded frame: later + w*(earlier - later). Exact at w == 1 and on
// identical inputs.
void blend_frame(Eigen::Ref<Eigen::ArrayXd> out, const Eigen::Ref<const Eigen::ArrayXd>& earlier,
                 const Eigen::Ref<const Eigen::ArrayXd>& later, double w) {
  if (w == 1.0) {
    out = earlier;
  } else {
    out = later + w * (earlier - later);
  }
}

}  // namespace

CodecSpec identity_codec() {
  CodecSpec c;
  c.temporal_factor = 1;
  c.spatial_factor = 1;
  c.encode = [](const Tensor& x) { return x; };
  c.decode = [](const Tensor& x) { return x; };
  return c;
}

CodecSpec linear_codec(double scale) {
  if (scale == 0.0) throw std::invalid_argument("linear_codec: scale must be nonzero");
  CodecSpec c;
  c.temporal_factor = 1;
  c.spatial_factor = 1;
  c.encode = [scale](const Tensor& x) {
    Tensor out = x;
    out.array() *= scale;
    return out;
  };
  c.decode = [scale](const Tensor& x) {
    Tensor out = x;
    out.array() *= 1.0 / scale;
    return out;
  };
  return c;
}

CodecSpec block_mean_codec(Index factor) {
  if (factor < 1) throw std::invalid_argument("block_mean_codec: factor must be >= 1");
  CodecSpec c;
  c.temporal_factor = factor;
  c.spatial_factor = 1;
  c.encode = [factor](const Tensor& x) {
    const Index t = x.frames();
    const Index lat = ceil_div(t, factor);
    Shape shape = x.shape();
    shape[0] = lat;
    Tensor out(shape);
    const Index stride = x.frame_stride();
    for (Index l = 0; l < lat; ++l) {
      const Index lo = l * factor;
      const Index hi = std::min(t, lo + factor);
      Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(stride);
      for (Index f = lo; f < hi; ++f) acc += x.array().segment(f * stride, stride);
      out.array().segment(l * stride, stride) = acc / static_cast<double>(hi - lo);
    }
    return out;
  };
  c.decode = [factor](const Tensor& z) {
    const Index lat = z.frames();
    Shape shape = z.shape();
    shape[0] = lat * factor;
    Tensor out(shape);
    const Index stride = z.frame_stride();
    for (Index l = 0; l < lat; ++l) {
      for (Index k = 0; k < factor; ++k) {
        out.array().segment((l * factor + k) * stride, stride) = z.array().segment(l * stride, stride);
      }
    }
    return out;
  };
  return c;
}

Index latent_frame_count(Index t_raw, Index factor) {
  if (t_raw < 1) throw std::invalid_argument("latent_frame_count: t_raw must be >= 1");
  if (factor < 1) throw std::invalid_argument("latent_frame_count: factor must be >= 1");
  return ceil_div(t_raw, factor);
}

double opl_loss(const Tensor& x, double r) {
  if (r < 0.0) throw std::invalid_argument("opl_loss: r must be >= 0");
  if (x.rank() == 4) {
    // Frame axis folds into a batch of independent [C,H,W] slices.
    const Index t = x.shape()[0];
    if (t == 0) throw std::invalid_argument("opl_loss: empty frame axis");
    const Shape frame_shape(x.shape().begin() + 1, x.shape().end());
    double acc = 0.0;
    for (Index f = 0; f < t; ++f) {
      acc += opl_loss(Tensor(frame_shape, x.frame_slice(f, f + 1).array()), r);
    }
    return acc / static_cast<double>(t);
  }
  if (x.rank() != 3) throw std::invalid_argument("opl_loss: expected [C,H,W] or [T,C,H,W]");
  const Index c = x.shape()[0];
  const Index h = x.shape()[1];
  const Index w = x.shape()[2];
  if (h < 1 || w < 1) throw std::invalid_argument("opl_loss: empty spatial extent");
  if (c < 1) throw std::invalid_argument("opl_loss: empty channel extent");

  const auto [mean, stddev] = reduce_stats(x, {1, 2});  // per-channel over (H, W)
  const double threshold = r * std::sqrt(stddev.array().square().sum());

  double acc = 0.0;
  for (Index i = 0; i < h; ++i) {
    for (Index j = 0; j < w; ++j) {
      double sq = 0.0;
      for (Index ch = 0; ch < c; ++ch) {
        const double d = x.at({ch, i, j}) - mean[ch];
        sq += d * d;
      }
      acc += std::max(std::sqrt(sq) - threshold, 0.0);
    }
  }
  return acc / static_cast<double>(h * w);
}

TilePlan plan_tiles(Index t_frames, Index tile_len, Index overlap) {
  if (t_frames < 1) throw std::invalid_argument("plan_tiles: t_frames must be >= 1");
  if (tile_len < 1) throw std::invalid_argument("plan_tiles: tile_len must be >= 1");
  if (overlap < 0 || overlap >= tile_len) {
    throw std::invalid_argument("plan_tiles: overlap must satisfy 0 <= overlap < tile_len");
  }
  TilePlan plan;
  plan.tile_len = tile_len;
  plan.overlap = overlap;
  const Index hop = tile_len - overlap;
  Index start = 0;
  while (true) {
    const Index end = std::min(t_frames, start + tile_len);
    plan.spans.emplace_back(start, end);
    if (end == t_frames) break;
    start += hop;
  }
  return plan;
}

Tensor blend_stitch(const std::vector<Tensor>& tiles, const TilePlan& plan) {
  if (tiles.size() != plan.spans.size()) {
    throw std::invalid_argument("blend_stitch: tile count does not match plan");
  }
  if (tiles.empty()) throw std::invalid_argument("blend_stitch: no tiles");
  const Index total = plan.spans.back().second;
  for (size_t k = 0; k < tiles.size(); ++k) {
    const auto [s, e] = plan.spans[k];
    if (tiles[k].frames() != e - s) {
      throw std::invalid_argument("blend_stitch: tile " + std::to_string(k) + " length does not match span");
    }
  }

  Shape out_shape = tiles[0].shape();
  out_shape[0] = total;
  Tensor out(out_shape);
  const Index stride = out.frame_stride();

  out.set_frames(plan.spans[0].first, tiles[0]);
  Index done = plan.spans[0].second;  // frames finalized so far
  for (size_t k = 1; k < tiles.size(); ++k) {
    const auto [s, e] = plan.spans[k];
    if (tiles[k].frame_stride() != stride) throw std::invalid_argument("blend_stitch: tile shape mismatch");
    const Index olap = done - s;
    if (olap < 0) throw std::invalid_argument("blend_stitch: gap between spans");
    for (Index j = 1; j <= olap; ++j) {
      const Index frame = s + j - 1;
      const double w = (olap == 1) ? 0.5 : 1.0 - static_cast<double>(j - 1) / static_cast<double>(olap - 1);
      Eigen::ArrayXd earlier = out.array().segment(frame * stride, stride);
      blend_frame(out.array().segment(frame * stride, stride), earlier,
                  tiles[k].array().segment((j - 1) * stride, stride), w);
    }
    if (e > done) {
      out.array().segment(done * stride, (e - done) * stride) =
          tiles[k].array().segment(olap * stride, (e - done) * stride);
      done = e;
    }
  }
  return out;
}

Tensor tiled_apply(const CodecSpec& codec, const Tensor& x, const TilePlan& encode_plan,
                   const TilePlan& decode_plan) {
  if (!codec.encode || !codec.decode) throw std::invalid_argument("tiled_apply: codec callbacks missing");
  const Index f = codec.temporal_factor;
  const Index t_raw = x.frames();
  check_plan_covers(encode_plan, t_raw);
  const Index t_latent = latent_frame_count(t_raw, f);
  const Index t_padded = t_latent * f;
  check_plan_covers(decode_plan, t_padded);

  // Encode each tile; spans map to latent coordinates by division.
  std::vector<Tensor> latent_tiles;
  TilePlan latent_encode_plan;
  latent_encode_plan.tile_len = std::max<Index>(1, ceil_div(encode_plan.tile_len, f));
  latent_encode_plan.overlap = encode_plan.overlap / std::max<Index>(f, 1);
  for (const auto& [s, e] : encode_plan.spans) {
    if (f > 1 && s % f != 0) {
      throw std::invalid_argument("tiled_apply: encode span start must align to the temporal factor");
    }
    Tensor z = codec.encode(x.frame_slice(s, e));
    const Index expect = ceil_div(e - s, f);
    if (z.frames() != expect) throw std::invalid_argument("tiled_apply: codec encode output has wrong frame count");
    latent_encode_plan.spans.emplace_back(s / f, s / f + expect);
    latent_tiles.push_back(std::move(z));
  }
  const Tensor latent = blend_stitch(latent_tiles, latent_encode_plan);
  if (latent.frames() != t_latent) throw std::invalid_argument("tiled_apply: stitched latent has wrong length");

  // Decode each tile over the padded raw span, stitch, truncate.
  std::vector<Tensor> raw_tiles;
  TilePlan raw_decode_plan;
  raw_decode_plan.tile_len = decode_plan.tile_len;
  raw_decode_plan.overlap = decode_plan.overlap;
  for (const auto& [s, e] : decode_plan.spans) {
    if (f > 1 && (s % f != 0 || e % f != 0)) {
      throw std::invalid_argument("tiled_apply: decode spans must align to the temporal factor");
    }
    Tensor y = codec.decode(latent.frame_slice(s / f, e / f));
    if (y.frames() != e - s) throw std::invalid_argument("tiled_apply: codec decode output has wrong frame count");
    raw_decode_plan.spans.emplace_back(s, e);
    raw_tiles.push_back(std::move(y));
  }
  Tensor stitched = blend_stitch(raw_tiles, raw_decode_plan);
  return stitched.frame_slice(0, t_raw);
}

Tensor codec_roundtrip(const CodecSpec& codec, const Tensor& x) {
  Tensor decoded = codec.decode(codec.encode(x));
  return decoded.frame_slice(0, x.frames());
}

const std::vector<DurationBucket>& duration_bucket_table() {
  static const std::vector<DurationBucket> table = {
      {10.67, 10.67, 24.0, 24.0, 256, 32},
      {16.0, 16.0, 16.0, 16.0, 256, 32},
      {12.0, 16.0, 16.0, 21.0, 256, 32},
      {8.0, 12.0, 16.0, 24.0, 192, 24},
      {4.0, 8.0, 16.0, 32.0, 128, 16},
  };
  return table;
}

DurationBucket assign_duration_bucket(double duration_s, double fps) {
  if (!(duration_s > 0.0)) throw std::invalid_argument("assign_duration_bucket: duration must be positive");
  if (!(fps > 0.0)) throw std::invalid_argument("assign_duration_bucket: fps must be positive");
  constexpr double kDurationTol = 5e-3;
  constexpr double kFpsTol = 1e-9;
  for (const auto& row : duration_bucket_table()) {
    if (duration_s >= row.duration_lo - kDurationTol && duration_s <= row.duration_hi + kDurationTol &&
        fps >= row.fps_lo - kFpsTol && fps <= row.fps_hi + kFpsTol) {
      return row;
    }
  }
  throw std::invalid_argument("no bucket for duration " + std::to_string(duration_s) + "s at " +
                              std::to_string(fps) + " fps");
}

}  // namespace flowkit
