#pragma once

#include "flowkit/tensor.hpp"

#include <Eigen/Core>

namespace flowkit {

/// Patch kernel (stride equals kernel); each extent must divide the
/// corresponding latent extent.
struct PatchSpec {
  Index k_t = 1;
  Index k_h = 2;
  Index k_w = 2;
};

/// Tokens entering the backbone: T*H*W / (k_t*k_h*k_w). Throws when any
/// kernel extent does not divide its latent extent.
Index token_count(Index t, Index h, Index w, const PatchSpec& spec);

/// Lossless rearrangement of [T,C,H,W] into [tokens, C*k_t*k_h*k_w]. Tokens
/// are ordered by (t-block, h-block, w-block); inside a token the layout is
/// (c, dt, dh, dw), row-major.
Tensor patchify(const Tensor& x, const PatchSpec& spec);

/// Inverse of patchify; needs the original extents back.
Tensor unpatchify(const Tensor& tokens, Index t, Index c, Index h, Index w, const PatchSpec& spec);

/// Factorized positional-embedding tables, one per axis, sharing dimension D.
struct PosEmbedSpec {
  Index t_max = 0;
  Index h_max = 0;
  Index w_max = 0;
  Index dim = 0;
  Eigen::MatrixXd phi_t;  // [t_max x dim]
  Eigen::MatrixXd phi_h;  // [h_max x dim]
  Eigen::MatrixXd phi_w;  // [w_max x dim]

  void validate() const;
};

/// phi_t[t] + phi_h[h] + phi_w[w]; indices must lie inside the maxima.
Eigen::VectorXd pos_embed(Index t_idx, Index h_idx, Index w_idx, const PosEmbedSpec& spec);

}  // namespace flowkit
