#include "flowkit/mlp.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

using namespace flowkit;

namespace {

// Central finite differences on fm_loss; relative error per parameter tensor
// (worst entry deviation over the tensor's gradient scale).
double max_gradient_error(MlpVelocityField model, const MlpBatch& batch) {
  const MlpGradients analytic = mlp_backward(model, batch);
  const double h = 1e-6;
  double worst = 0.0;
  auto loss_at = [&]() { return mlp_backward(model, batch).loss; };
  for (size_t l = 0; l < model.weights().size(); ++l) {
    double tensor_diff = 0.0;
    double tensor_scale = 1e-8;
    auto probe = [&](double& param, double analytic_grad) {
      const double keep = param;
      param = keep + h;
      const double up = loss_at();
      param = keep - h;
      const double down = loss_at();
      param = keep;
      const double numeric = (up - down) / (2.0 * h);
      tensor_diff = std::max(tensor_diff, std::abs(numeric - analytic_grad));
      tensor_scale = std::max({tensor_scale, std::abs(numeric), std::abs(analytic_grad)});
    };
    for (Index r = 0; r < model.weights()[l].rows(); ++r) {
      for (Index c = 0; c < model.weights()[l].cols(); ++c) {
        probe(model.weights()[l](r, c), analytic.d_weights[l](r, c));
      }
    }
    worst = std::max(worst, tensor_diff / tensor_scale);
    tensor_diff = 0.0;
    tensor_scale = 1e-8;
    for (Index r = 0; r < model.weights()[l].rows(); ++r) {
      probe(model.biases()[l][r], analytic.d_biases[l][r]);
    }
    worst = std::max(worst, tensor_diff / tensor_scale);
  }
  return worst;
}

}  // namespace

TEST_CASE("zero parameters produce zero velocity") {
  Rng rng(1);
  MlpVelocityField model(2, {8}, 4, 0, rng);
  for (auto& w : model.weights()) w.setZero();
  for (auto& b : model.biases()) b.setZero();
  Eigen::MatrixXd x(3, 2);
  x.setRandom();
  Eigen::VectorXd t(3);
  t << 0.1, 0.5, 0.9;
  CHECK(model.forward(x, t).isZero());
}

TEST_CASE("single linear layer gradient equals the least-squares gradient") {
  // No hidden layers, no time features: pred = W x + b, loss = mean (pred-y)^2.
  Rng rng(2);
  MlpVelocityField model(2, {}, 0, 0, rng);
  REQUIRE(model.layer_count() == 1);

  MlpBatch batch;
  batch.xt.resize(2, 2);
  batch.xt << 1.0, 2.0, -0.5, 0.25;
  batch.target.resize(2, 2);
  batch.target << 0.5, -1.0, 2.0, 0.0;
  batch.t.resize(2);
  batch.t << 0.3, 0.7;

  const MlpGradients grads = mlp_backward(model, batch);
  const Eigen::MatrixXd pred = batch.xt * model.weights()[0].transpose();
  const Eigen::MatrixXd diff = pred - batch.target;  // biases are zero
  // d/dW mean((xW^T - y)^2) = (2/(B*d)) diff^T x.
  const Eigen::MatrixXd expect = (2.0 / 4.0) * diff.transpose() * batch.xt;
  CHECK((grads.d_weights[0] - expect).lpNorm<Eigen::Infinity>() < 1e-14);
  const Eigen::VectorXd expect_b = (2.0 / 4.0) * diff.colwise().sum().transpose();
  CHECK((grads.d_biases[0] - expect_b).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("analytic gradients match central differences on small nets") {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    Rng init = rng.split(static_cast<std::uint64_t>(trial));
    MlpVelocityField model(2, {6, 5}, 4, 0, init);
    MlpBatch batch;
    const Index b = 4;
    batch.xt.resize(b, 2);
    batch.target.resize(b, 2);
    batch.t.resize(b);
    Rng data = rng.split(100 + static_cast<std::uint64_t>(trial));
    for (Index r = 0; r < b; ++r) {
      for (Index c = 0; c < 2; ++c) {
        batch.xt(r, c) = data.normal();
        batch.target(r, c) = data.normal();
      }
      batch.t[r] = data.uniform();
    }
    CHECK(max_gradient_error(model, batch) <= 1e-6);
  }
}

TEST_CASE("training on a single point drives samples to it") {
  std::vector<Tensor> dataset;
  Tensor p(Shape{2});
  p[0] = 1.5;
  p[1] = -0.5;
  dataset.push_back(p);

  TrainConfig config;
  config.steps = 1500;
  config.batch = 64;
  config.seed = 7;
  config.hidden = {32, 32};
  const TrainResult result = train_flow(dataset, config);

  Rng sample_rng(99, 1);
  const Eigen::MatrixXd samples = sample_model(result.model, 64, linear_schedule(50), std::nullopt, sample_rng);
  const Eigen::RowVector2d mean = samples.colwise().mean();
  CHECK(std::abs(mean[0] - 1.5) < 0.05);
  CHECK(std::abs(mean[1] + 0.5) < 0.05);
}

TEST_CASE("loss decreases over training") {
  const std::vector<Tensor> dataset = two_gaussian_dataset(512, 11);
  TrainConfig config;
  config.steps = 800;
  config.batch = 64;
  config.seed = 5;
  config.hidden = {32};
  config.log_every = 10;
  const TrainResult result = train_flow(dataset, config);
  REQUIRE(result.loss_trace.size() > 10);
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 5; ++i) {
    head += result.loss_trace[static_cast<size_t>(i)].second;
    tail += result.loss_trace[result.loss_trace.size() - 1 - static_cast<size_t>(i)].second;
  }
  CHECK(tail < head);
}

TEST_CASE("training is deterministic per seed") {
  const std::vector<Tensor> dataset = two_gaussian_dataset(128, 3);
  TrainConfig config;
  config.steps = 120;
  config.batch = 32;
  config.seed = 17;
  config.hidden = {16};
  const TrainResult a = train_flow(dataset, config);
  const TrainResult b = train_flow(dataset, config);
  REQUIRE(a.loss_trace.size() == b.loss_trace.size());
  for (size_t i = 0; i < a.loss_trace.size(); ++i) {
    CHECK(a.loss_trace[i].second == b.loss_trace[i].second);
  }
  for (size_t l = 0; l < a.model.weights().size(); ++l) {
    CHECK((a.model.weights()[l] - b.model.weights()[l]).lpNorm<Eigen::Infinity>() == 0.0);
  }
}

TEST_CASE("untrained zero model returns the initial noise") {
  Rng rng(21);
  MlpVelocityField model(2, {4}, 4, 0, rng);
  for (auto& w : model.weights()) w.setZero();
  for (auto& b : model.biases()) b.setZero();
  Rng sample_rng(5, 2);
  const Eigen::MatrixXd samples = sample_model(model, 3, linear_schedule(10), std::nullopt, sample_rng);
  for (Index i = 0; i < 3; ++i) {
    Rng stream = sample_rng.split(static_cast<std::uint64_t>(i));
    const Tensor x0 = sample_standard_normal(stream, Shape{2});
    CHECK(samples(i, 0) == x0[0]);
    CHECK(samples(i, 1) == x0[1]);
  }
}

TEST_CASE("checkpoints round trip bit-exactly") {
  Rng rng(31);
  MlpVelocityField model(2, {5, 3}, 4, 0, rng);
  const std::string path = "checkpoint_test.json";
  save_checkpoint(model, path);
  const MlpVelocityField loaded = load_checkpoint(path);
  REQUIRE(loaded.layer_count() == model.layer_count());
  for (Index l = 0; l < model.layer_count(); ++l) {
    CHECK((loaded.weights()[static_cast<size_t>(l)] - model.weights()[static_cast<size_t>(l)])
              .lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((loaded.biases()[static_cast<size_t>(l)] - model.biases()[static_cast<size_t>(l)])
              .lpNorm<Eigen::Infinity>() == 0.0);
  }
  std::remove(path.c_str());
}

TEST_CASE("unsupported checkpoint versions are rejected") {
  CHECK_THROWS(MlpVelocityField::from_json(R"({"format_version": 99, "data_dim": 2})"));
  CHECK_THROWS(MlpVelocityField::from_json(R"({"data_dim": 2})"));
}
