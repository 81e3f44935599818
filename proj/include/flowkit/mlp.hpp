#pragma once

#include "flowkit/flow.hpp"
#include "flowkit/rng.hpp"
#include "flowkit/schedule.hpp"
#include "flowkit/solver.hpp"
#include "flowkit/tensor.hpp"

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

namespace flowkit {

/// Small tanh MLP realizing the velocity-field contract for flat samples.
/// Input is [x ; sinusoidal time features ; cond] and the output matches the
/// sample dimension. All parameters are doubles so gradient checks are exact
/// to rounding.
class MlpVelocityField {
 public:
  MlpVelocityField() = default;
  MlpVelocityField(Index data_dim, std::vector<Index> hidden, Index time_embed_dim, Index cond_dim, Rng& rng);

  Index data_dim() const { return data_dim_; }
  Index cond_dim() const { return cond_dim_; }
  Index time_embed_dim() const { return time_embed_dim_; }
  const std::vector<Index>& hidden() const { return hidden_; }

  Index layer_count() const { return static_cast<Index>(weights_.size()); }
  std::vector<Eigen::MatrixXd>& weights() { return weights_; }
  std::vector<Eigen::VectorXd>& biases() { return biases_; }
  const std::vector<Eigen::MatrixXd>& weights() const { return weights_; }
  const std::vector<Eigen::VectorXd>& biases() const { return biases_; }

  /// Velocity for a batch of rows [B x data_dim] at per-row times t [B].
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, const Eigen::VectorXd& t,
                          const Eigen::MatrixXd* cond = nullptr) const;

  /// Sinusoidal features of t, dimension time_embed_dim.
  Eigen::VectorXd time_features(double t) const;

  /// VelocityFn adapter for the ODE solvers. Models built with cond_dim = 0
  /// ignore the conditioning input; otherwise a flat cond of cond_dim values
  /// is required.
  VelocityFn as_velocity_fn() const;

  std::string to_json() const;
  static MlpVelocityField from_json(const std::string& text);

 private:
  Index data_dim_ = 0;
  Index cond_dim_ = 0;
  Index time_embed_dim_ = 0;
  std::vector<Index> hidden_;
  std::vector<Eigen::MatrixXd> weights_;  // [out x in] per layer
  std::vector<Eigen::VectorXd> biases_;
};

struct MlpGradients {
  std::vector<Eigen::MatrixXd> d_weights;
  std::vector<Eigen::VectorXd> d_biases;
  double loss = 0.0;
};

struct MlpBatch {
  Eigen::MatrixXd xt;      // [B x data_dim]
  Eigen::VectorXd t;       // [B]
  Eigen::MatrixXd target;  // [B x data_dim]
  Eigen::MatrixXd cond;    // [B x cond_dim], may be 0 columns
};

/// Exact analytic gradients of fm_loss(forward(batch), target) with respect
/// to every weight and bias.
MlpGradients mlp_backward(const MlpVelocityField& model, const MlpBatch& batch);

/// Adam with decoupled weight decay; moment shapes mirror the parameters.
struct AdamState {
  Index step = 0;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double epsilon = 1e-8;
  double learning_rate = 1e-3;
  double weight_decay = 0.1;
  std::vector<Eigen::MatrixXd> m_weights, v_weights;
  std::vector<Eigen::VectorXd> m_biases, v_biases;

  static AdamState init(const MlpVelocityField& model, double learning_rate, double weight_decay);
  void update(MlpVelocityField& model, const MlpGradients& grads);
};

struct TrainConfig {
  Index steps = 4000;
  Index batch = 128;
  double learning_rate = 1e-3;
  double weight_decay = 0.1;
  double sigma_min = kDefaultSigmaMin;
  std::uint64_t seed = 42;
  Index log_every = 50;
  std::vector<Index> hidden = {64, 64};
  Index time_embed_dim = 8;
};

struct TrainResult {
  MlpVelocityField model;
  std::vector<std::pair<Index, double>> loss_trace;  // (step, loss)
};

/// Thrown when the training loss turns non-finite.
struct TrainingDiverged : std::runtime_error {
  Index step;
  explicit TrainingDiverged(Index at)
      : std::runtime_error("training diverged (non-finite loss) at step " + std::to_string(at)), step(at) {}
};

/// Flow-matching training on a dataset of flat points; deterministic given
/// the config seed.
TrainResult train_flow(const std::vector<Tensor>& dataset, const TrainConfig& config);

/// n independent integrations from fresh noise; one rng stream per sample.
/// Returns [n x data_dim].
Eigen::MatrixXd sample_model(const MlpVelocityField& model, Index n, const TimeSchedule& sched,
                             const std::optional<GuidanceConfig>& guidance, const Rng& rng,
                             bool use_midpoint = false);

/// Deterministic draw from the two-mode benchmark distribution: equal-weight
/// Gaussians at (-2, 0) and (+2, 0) with sigma 0.25.
std::vector<Tensor> two_gaussian_dataset(Index count, std::uint64_t seed);

void save_checkpoint(const MlpVelocityField& model, const std::string& path);
MlpVelocityField load_checkpoint(const std::string& path);

}  // namespace flowkit
