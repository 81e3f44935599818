#include "flowkit/flow.hpp"

#include <stdexcept>

namespace flowkit {

Tensor ot_interpolate(const Tensor& x0, const Tensor& x1, double t, double sigma_min) {
  require_same_shape(x0, x1, "ot_interpolate");
  if (t < 0.0 || t > 1.0) throw std::invalid_argument("ot_interpolate: t outside [0,1]");
  if (sigma_min < 0.0) throw std::invalid_argument("ot_interpolate: sigma_min must be >= 0");
  if (t == 0.0) return x0;  // zero-SNR endpoint, exact
  Tensor out = x0;
  out.array() = t * x1.array() + (1.0 - (1.0 - sigma_min) * t) * x0.array();
  return out;
}

Tensor velocity_target(const Tensor& x0, const Tensor& x1, double sigma_min) {
  require_same_shape(x0, x1, "velocity_target");
  Tensor out = x0;
  out.array() = x1.array() - (1.0 - sigma_min) * x0.array();
  return out;
}

double fm_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "fm_loss");
  if (pred.size() == 0) throw std::invalid_argument("empty loss");
  return (pred.array() - target.array()).square().sum() / static_cast<double>(pred.size());
}

std::vector<FlowSample> make_training_batch(const std::vector<Tensor>& dataset, Index batch, Rng& rng,
                                            double sigma_min) {
  if (dataset.empty()) throw std::invalid_argument("make_training_batch: empty dataset");
  if (batch < 1) throw std::invalid_argument("make_training_batch: batch must be >= 1");
  std::vector<FlowSample> out;
  out.reserve(static_cast<size_t>(batch));
  for (Index b = 0; b < batch; ++b) {
    FlowSample s;
    s.sigma_min = sigma_min;
    s.x1 = dataset[rng.uniform_index(dataset.size())];
    s.x0 = sample_standard_normal(rng, s.x1.shape());
    s.t = sample_logit_normal(rng, 1)[0];
    s.xt = ot_interpolate(s.x0, s.x1, s.t, sigma_min);
    s.vt = velocity_target(s.x0, s.x1, sigma_min);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace flowkit
