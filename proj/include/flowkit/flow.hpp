#pragma once

#include "flowkit/rng.hpp"
#include "flowkit/tensor.hpp"

#include <vector>

namespace flowkit {

constexpr double kDefaultSigmaMin = 1e-5;

/// One training example on the optimal-transport path between noise x0 and
/// data x1: xt = t*x1 + (1 - (1 - sigma_min)*t)*x0 and vt = x1 - (1 - sigma_min)*x0.
struct FlowSample {
  Tensor x0;
  Tensor x1;
  double t = 0.0;
  Tensor xt;
  Tensor vt;
  double sigma_min = kDefaultSigmaMin;
};

/// Point on the optimal-transport path. t = 0 returns x0 bit-exactly.
Tensor ot_interpolate(const Tensor& x0, const Tensor& x1, double t, double sigma_min = kDefaultSigmaMin);

/// Regression target x1 - (1 - sigma_min)*x0; constant in t.
Tensor velocity_target(const Tensor& x0, const Tensor& x1, double sigma_min = kDefaultSigmaMin);

/// Mean squared error over all elements. Empty tensors throw ("empty loss").
double fm_loss(const Tensor& pred, const Tensor& target);

/// Batch of samples: x0 ~ N(0,1), x1 drawn uniformly from `dataset`,
/// t ~ logit-normal, xt/vt filled from the path equations.
std::vector<FlowSample> make_training_batch(const std::vector<Tensor>& dataset, Index batch, Rng& rng,
                                            double sigma_min = kDefaultSigmaMin);

}  // namespace flowkit
