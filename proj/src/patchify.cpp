#include "flowkit/patchify.hpp"

#include <stdexcept>
#include <string>

namespace flowkit {

namespace {

void check_divisible(Index extent, Index k, const char* axis) {
  if (k < 1) throw std::invalid_argument(std::string("patch kernel on ") + axis + " must be >= 1");
  if (extent % k != 0) {
    throw std::invalid_argument(std::string("extent ") + std::to_string(extent) + " on " + axis +
                                " not divisible by kernel " + std::to_string(k));
  }
}

}  // namespace

Index token_count(Index t, Index h, Index w, const PatchSpec& spec) {
  check_divisible(t, spec.k_t, "T");
  check_divisible(h, spec.k_h, "H");
  check_divisible(w, spec.k_w, "W");
  return (t / spec.k_t) * (h / spec.k_h) * (w / spec.k_w);
}

Tensor patchify(const Tensor& x, const PatchSpec& spec) {
  if (x.rank() != 4) throw std::invalid_argument("patchify: expected [T,C,H,W]");
  const Index t = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  const Index tokens = token_count(t, h, w, spec);
  const Index token_dim = c * spec.k_t * spec.k_h * spec.k_w;
  const Index tb = t / spec.k_t, hb = h / spec.k_h, wb = w / spec.k_w;

  Tensor out(Shape{tokens, token_dim});
  Index tok = 0;
  for (Index it = 0; it < tb; ++it) {
    for (Index ih = 0; ih < hb; ++ih) {
      for (Index iw = 0; iw < wb; ++iw, ++tok) {
        Index d = 0;
        for (Index ic = 0; ic < c; ++ic) {
          for (Index dt = 0; dt < spec.k_t; ++dt) {
            for (Index dh = 0; dh < spec.k_h; ++dh) {
              for (Index dw = 0; dw < spec.k_w; ++dw, ++d) {
                out.at({tok, d}) =
                    x.at({it * spec.k_t + dt, ic, ih * spec.k_h + dh, iw * spec.k_w + dw});
              }
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor unpatchify(const Tensor& tokens, Index t, Index c, Index h, Index w, const PatchSpec& spec) {
  const Index expect_tokens = token_count(t, h, w, spec);
  const Index token_dim = c * spec.k_t * spec.k_h * spec.k_w;
  if (tokens.rank() != 2 || tokens.shape()[0] != expect_tokens || tokens.shape()[1] != token_dim) {
    throw std::invalid_argument("unpatchify: token tensor has wrong shape");
  }
  const Index tb = t / spec.k_t, hb = h / spec.k_h, wb = w / spec.k_w;

  Tensor out(Shape{t, c, h, w});
  Index tok = 0;
  for (Index it = 0; it < tb; ++it) {
    for (Index ih = 0; ih < hb; ++ih) {
      for (Index iw = 0; iw < wb; ++iw, ++tok) {
        Index d = 0;
        for (Index ic = 0; ic < c; ++ic) {
          for (Index dt = 0; dt < spec.k_t; ++dt) {
            for (Index dh = 0; dh < spec.k_h; ++dh) {
              for (Index dw = 0; dw < spec.k_w; ++dw, ++d) {
                out.at({it * spec.k_t + dt, ic, ih * spec.k_h + dh, iw * spec.k_w + dw}) =
                    tokens.at({tok, d});
              }
            }
          }
        }
      }
    }
  }
  return out;
}

void PosEmbedSpec::validate() const {
  if (dim < 1) throw std::invalid_argument("pos_embed: dim must be >= 1");
  if (phi_t.rows() != t_max || phi_h.rows() != h_max || phi_w.rows() != w_max) {
    throw std::invalid_argument("pos_embed: table rows do not match maxima");
  }
  if (phi_t.cols() != dim || phi_h.cols() != dim || phi_w.cols() != dim) {
    throw std::invalid_argument("pos_embed: all tables must share dimension D");
  }
}

Eigen::VectorXd pos_embed(Index t_idx, Index h_idx, Index w_idx, const PosEmbedSpec& spec) {
  spec.validate();
  if (t_idx < 0 || t_idx >= spec.t_max || h_idx < 0 || h_idx >= spec.h_max || w_idx < 0 || w_idx >= spec.w_max) {
    throw std::out_of_range("pos_embed: index outside table maxima");
  }
  return (spec.phi_t.row(t_idx) + spec.phi_h.row(h_idx) + spec.phi_w.row(w_idx)).transpose();
}

}  // namespace flowkit
