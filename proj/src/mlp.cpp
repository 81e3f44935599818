#include "flowkit/mlp.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace flowkit {

namespace {

constexpr int kCheckpointVersion = 1;

const char kBase64Chars[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  size_t i = 0;
  while (i + 3 <= bytes.size()) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out.push_back(kBase64Chars[(v >> 18) & 63]);
    out.push_back(kBase64Chars[(v >> 12) & 63]);
    out.push_back(kBase64Chars[(v >> 6) & 63]);
    out.push_back(kBase64Chars[v & 63]);
    i += 3;
  }
  const size_t rem = bytes.size() - i;
  if (rem == 1) {
    const std::uint32_t v = bytes[i] << 16;
    out.push_back(kBase64Chars[(v >> 18) & 63]);
    out.push_back(kBase64Chars[(v >> 12) & 63]);
    out.push_back('=');
    out.push_back('=');
  } else if (rem == 2) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out.push_back(kBase64Chars[(v >> 18) & 63]);
    out.push_back(kBase64Chars[(v >> 12) & 63]);
    out.push_back(kBase64Chars[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

int base64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  std::vector<std::uint8_t> out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=') break;
    const int v = base64_value(c);
    if (v < 0) throw std::invalid_argument("invalid base64 payload");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xFF));
    }
  }
  return out;
}

// Little-endian serialization keeps checkpoints byte-stable across platforms.
std::string encode_doubles(const double* data, size_t count) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(count * 8);
  for (size_t i = 0; i < count; ++i) {
    std::uint64_t u = std::bit_cast<std::uint64_t>(data[i]);
    for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<std::uint8_t>((u >> (8 * b)) & 0xFF));
  }
  return base64_encode(bytes);
}

std::vector<double> decode_doubles(const std::string& text, size_t expect) {
  const std::vector<std::uint8_t> bytes = base64_decode(text);
  if (bytes.size() != expect * 8) throw std::invalid_argument("checkpoint payload has wrong length");
  std::vector<double> out(expect);
  for (size_t i = 0; i < expect; ++i) {
    std::uint64_t u = 0;
    for (int b = 0; b < 8; ++b) u |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
    out[i] = std::bit_cast<double>(u);
  }
  return out;
}

}  // namespace

MlpVelocityField::MlpVelocityField(Index data_dim, std::vector<Index> hidden, Index time_embed_dim,
                                   Index cond_dim, Rng& rng)
    : data_dim_(data_dim), cond_dim_(cond_dim), time_embed_dim_(time_embed_dim), hidden_(std::move(hidden)) {
  if (data_dim_ < 1) throw std::invalid_argument("MlpVelocityField: data_dim must be >= 1");
  if (time_embed_dim_ < 0 || time_embed_dim_ % 2 != 0) {
    throw std::invalid_argument("MlpVelocityField: time_embed_dim must be even and >= 0");
  }
  if (cond_dim_ < 0) throw std::invalid_argument("MlpVelocityField: cond_dim must be >= 0");
  std::vector<Index> dims;
  dims.push_back(data_dim_ + time_embed_dim_ + cond_dim_);
  for (Index h : hidden_) {
    if (h < 1) throw std::invalid_argument("MlpVelocityField: hidden width must be >= 1");
    dims.push_back(h);
  }
  dims.push_back(data_dim_);
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    const Index in = dims[l];
    const Index out = dims[l + 1];
    Eigen::MatrixXd w(out, in);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (Index r = 0; r < out; ++r) {
      for (Index c = 0; c < in; ++c) w(r, c) = scale * rng.normal();
    }
    weights_.push_back(std::move(w));
    biases_.emplace_back(Eigen::VectorXd::Zero(out));
  }
}

Eigen::VectorXd MlpVelocityField::time_features(double t) const {
  Eigen::VectorXd f(time_embed_dim_);
  // Geometric frequency ladder pi * 2^k over the unit interval.
  for (Index k = 0; k < time_embed_dim_ / 2; ++k) {
    const double omega = M_PI * std::ldexp(1.0, static_cast<int>(k));
    f[2 * k] = std::sin(omega * t);
    f[2 * k + 1] = std::cos(omega * t);
  }
  return f;
}

Eigen::MatrixXd MlpVelocityField::forward(const Eigen::MatrixXd& x, const Eigen::VectorXd& t,
                                          const Eigen::MatrixXd* cond) const {
  const Index batch = x.rows();
  if (x.cols() != data_dim_) throw std::invalid_argument("mlp forward: wrong sample dimension");
  if (t.size() != batch) throw std::invalid_argument("mlp forward: t size mismatch");
  if (cond_dim_ > 0 && (cond == nullptr || cond->cols() != cond_dim_ || cond->rows() != batch)) {
    throw std::invalid_argument("mlp forward: conditioning of cond_dim values required");
  }

  Eigen::MatrixXd h(batch, data_dim_ + time_embed_dim_ + cond_dim_);
  h.leftCols(data_dim_) = x;
  for (Index b = 0; b < batch; ++b) h.block(b, data_dim_, 1, time_embed_dim_) = time_features(t[b]).transpose();
  if (cond_dim_ > 0) h.rightCols(cond_dim_) = *cond;

  const size_t layers = weights_.size();
  for (size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd z = h * weights_[l].transpose();
    z.rowwise() += biases_[l].transpose();
    if (l + 1 < layers) {
      h = z.array().tanh().matrix();
    } else {
      h = std::move(z);
    }
  }
  return h;
}

VelocityFn MlpVelocityField::as_velocity_fn() const {
  const MlpVelocityField model = *this;  // solvers own an immutable copy
  return [model](const Tensor& x, double t, const Tensor* cond) {
    if (x.size() != model.data_dim()) {
      throw std::invalid_argument("mlp velocity: sample size does not match data_dim");
    }
    Eigen::MatrixXd row(1, model.data_dim());
    for (Index i = 0; i < x.size(); ++i) row(0, i) = x[i];
    Eigen::VectorXd tv(1);
    tv[0] = t;
    Eigen::MatrixXd cond_row;
    const Eigen::MatrixXd* cond_ptr = nullptr;
    if (model.cond_dim() > 0) {
      if (cond == nullptr || cond->size() != model.cond_dim()) {
        throw std::invalid_argument("mlp velocity: conditioning of cond_dim values required");
      }
      cond_row.resize(1, model.cond_dim());
      for (Index i = 0; i < cond->size(); ++i) cond_row(0, i) = (*cond)[i];
      cond_ptr = &cond_row;
    }
    const Eigen::MatrixXd v = model.forward(row, tv, cond_ptr);
    Tensor out(x.shape());
    for (Index i = 0; i < out.size(); ++i) out[i] = v(0, i);
    return out;
  };
}

MlpGradients mlp_backward(const MlpVelocityField& model, const MlpBatch& batch) {
  const Index b = batch.xt.rows();
  const Index d = model.data_dim();
  if (b < 1) throw std::invalid_argument("mlp_backward: empty batch");
  if (batch.target.rows() != b || batch.target.cols() != d) {
    throw std::invalid_argument("mlp_backward: target shape mismatch");
  }

  // Forward pass keeping activations.
  Eigen::MatrixXd input(b, d + model.time_embed_dim() + model.cond_dim());
  input.leftCols(d) = batch.xt;
  for (Index r = 0; r < b; ++r) {
    input.block(r, d, 1, model.time_embed_dim()) = model.time_features(batch.t[r]).transpose();
  }
  if (model.cond_dim() > 0) {
    if (batch.cond.rows() != b || batch.cond.cols() != model.cond_dim()) {
      throw std::invalid_argument("mlp_backward: cond shape mismatch");
    }
    input.rightCols(model.cond_dim()) = batch.cond;
  }

  const auto& ws = model.weights();
  const auto& bs = model.biases();
  const size_t layers = ws.size();
  std::vector<Eigen::MatrixXd> acts;  // activations entering each layer
  acts.reserve(layers + 1);
  acts.push_back(input);
  for (size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd z = acts.back() * ws[l].transpose();
    z.rowwise() += bs[l].transpose();
    if (l + 1 < layers) z = z.array().tanh().matrix();
    acts.push_back(std::move(z));
  }

  const Eigen::MatrixXd& pred = acts.back();
  const Eigen::MatrixXd diff = pred - batch.target;
  const double denom = static_cast<double>(b) * static_cast<double>(d);

  MlpGradients grads;
  grads.loss = diff.array().square().sum() / denom;
  grads.d_weights.resize(layers);
  grads.d_biases.resize(layers);

  Eigen::MatrixXd delta = (2.0 / denom) * diff;  // dL/dz for the output layer
  for (size_t l = layers; l-- > 0;) {
    grads.d_weights[l] = delta.transpose() * acts[l];
    grads.d_biases[l] = delta.colwise().sum().transpose();
    if (l > 0) {
      // acts[l] is tanh(z_l) for hidden layers, so dtanh = 1 - acts^2.
      delta = (delta * ws[l]).array() * (1.0 - acts[l].array().square());
    }
  }
  return grads;
}

AdamState AdamState::init(const MlpVelocityField& model, double learning_rate, double weight_decay) {
  AdamState s;
  s.learning_rate = learning_rate;
  s.weight_decay = weight_decay;
  for (const auto& w : model.weights()) {
    s.m_weights.emplace_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    s.v_weights.emplace_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
  }
  for (const auto& bvec : model.biases()) {
    s.m_biases.emplace_back(Eigen::VectorXd::Zero(bvec.size()));
    s.v_biases.emplace_back(Eigen::VectorXd::Zero(bvec.size()));
  }
  return s;
}

void AdamState::update(MlpVelocityField& model, const MlpGradients& grads) {
  step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (size_t l = 0; l < model.weights().size(); ++l) {
    auto& w = model.weights()[l];
    m_weights[l] = beta1 * m_weights[l] + (1.0 - beta1) * grads.d_weights[l];
    v_weights[l] = beta2 * v_weights[l] + (1.0 - beta2) * grads.d_weights[l].array().square().matrix();
    const Eigen::ArrayXXd m_hat = m_weights[l].array() / bc1;
    const Eigen::ArrayXXd v_hat = v_weights[l].array() / bc2;
    w.array() -= learning_rate * (m_hat / (v_hat.sqrt() + epsilon) + weight_decay * w.array());

    auto& bvec = model.biases()[l];
    m_biases[l] = beta1 * m_biases[l] + (1.0 - beta1) * grads.d_biases[l];
    v_biases[l] = beta2 * v_biases[l] + (1.0 - beta2) * grads.d_biases[l].array().square().matrix();
    const Eigen::ArrayXd mb_hat = m_biases[l].array() / bc1;
    const Eigen::ArrayXd vb_hat = v_biases[l].array() / bc2;
    // Decoupled decay applies to weights only.
    bvec.array() -= learning_rate * (mb_hat / (vb_hat.sqrt() + epsilon));
  }
}

TrainResult train_flow(const std::vector<Tensor>& dataset, const TrainConfig& config) {
  if (dataset.empty()) throw std::invalid_argument("train_flow: empty dataset");
  if (config.steps < 1) throw std::invalid_argument("train_flow: steps must be >= 1");
  if (config.batch < 1) throw std::invalid_argument("train_flow: batch must be >= 1");
  const Index d = dataset.front().size();

  Rng init_rng = Rng(config.seed).split(0);
  Rng batch_rng = Rng(config.seed).split(1);

  TrainResult result;
  result.model = MlpVelocityField(d, config.hidden, config.time_embed_dim, 0, init_rng);
  AdamState adam = AdamState::init(result.model, config.learning_rate, config.weight_decay);

  for (Index step = 0; step < config.steps; ++step) {
    const std::vector<FlowSample> samples = make_training_batch(dataset, config.batch, batch_rng, config.sigma_min);
    MlpBatch batch;
    batch.xt.resize(config.batch, d);
    batch.target.resize(config.batch, d);
    batch.t.resize(config.batch);
    for (Index r = 0; r < config.batch; ++r) {
      for (Index c = 0; c < d; ++c) {
        batch.xt(r, c) = samples[static_cast<size_t>(r)].xt[c];
        batch.target(r, c) = samples[static_cast<size_t>(r)].vt[c];
      }
      batch.t[r] = samples[static_cast<size_t>(r)].t;
    }
    const MlpGradients grads = mlp_backward(result.model, batch);
    if (!std::isfinite(grads.loss)) throw TrainingDiverged(step);
    adam.update(result.model, grads);
    if (step % config.log_every == 0 || step + 1 == config.steps) {
      result.loss_trace.emplace_back(step, grads.loss);
    }
  }
  return result;
}

Eigen::MatrixXd sample_model(const MlpVelocityField& model, Index n, const TimeSchedule& sched,
                             const std::optional<GuidanceConfig>& guidance, const Rng& rng, bool use_midpoint) {
  if (n < 0) throw std::invalid_argument("sample_model: n must be >= 0");
  sched.validate();
  const VelocityFn field = model.as_velocity_fn();
  Eigen::MatrixXd out(n, model.data_dim());
  for (Index i = 0; i < n; ++i) {
    Rng stream = rng.split(static_cast<std::uint64_t>(i));
    const Tensor x0 = sample_standard_normal(stream, Shape{model.data_dim()});
    const Tensor x1 = use_midpoint ? midpoint_solve(field, x0, sched, nullptr, guidance)
                                   : euler_solve(field, x0, sched, nullptr, guidance);
    for (Index c = 0; c < model.data_dim(); ++c) out(i, c) = x1[c];
  }
  return out;
}

std::vector<Tensor> two_gaussian_dataset(Index count, std::uint64_t seed) {
  Rng rng(seed, 7);
  std::vector<Tensor> data;
  data.reserve(static_cast<size_t>(count));
  for (Index i = 0; i < count; ++i) {
    const double cx = rng.uniform() < 0.5 ? -2.0 : 2.0;
    Tensor p(Shape{2});
    p[0] = cx + 0.25 * rng.normal();
    p[1] = 0.25 * rng.normal();
    data.push_back(std::move(p));
  }
  return data;
}

std::string MlpVelocityField::to_json() const {
  nlohmann::json j;
  j["format_version"] = kCheckpointVersion;
  j["data_dim"] = data_dim_;
  j["cond_dim"] = cond_dim_;
  j["time_embed_dim"] = time_embed_dim_;
  j["hidden"] = hidden_;
  nlohmann::json layers = nlohmann::json::array();
  for (size_t l = 0; l < weights_.size(); ++l) {
    nlohmann::json layer;
    layer["rows"] = weights_[l].rows();
    layer["cols"] = weights_[l].cols();
    // Row-major little-endian doubles, base64.
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = weights_[l];
    layer["weight"] = encode_doubles(rm.data(), static_cast<size_t>(rm.size()));
    layer["bias"] = encode_doubles(biases_[l].data(), static_cast<size_t>(biases_[l].size()));
    layers.push_back(std::move(layer));
  }
  j["layers"] = std::move(layers);
  return j.dump(2);
}

MlpVelocityField MlpVelocityField::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (!j.contains("format_version") || j["format_version"].get<int>() != kCheckpointVersion) {
    throw std::invalid_argument("unsupported checkpoint format version");
  }
  MlpVelocityField model;
  model.data_dim_ = j.at("data_dim").get<Index>();
  model.cond_dim_ = j.at("cond_dim").get<Index>();
  model.time_embed_dim_ = j.at("time_embed_dim").get<Index>();
  model.hidden_ = j.at("hidden").get<std::vector<Index>>();
  for (const auto& layer : j.at("layers")) {
    const Index rows = layer.at("rows").get<Index>();
    const Index cols = layer.at("cols").get<Index>();
    const std::vector<double> w = decode_doubles(layer.at("weight").get<std::string>(),
                                                 static_cast<size_t>(rows) * static_cast<size_t>(cols));
    const std::vector<double> bvals = decode_doubles(layer.at("bias").get<std::string>(), static_cast<size_t>(rows));
    Eigen::MatrixXd wm(rows, cols);
    for (Index r = 0; r < rows; ++r) {
      for (Index c = 0; c < cols; ++c) wm(r, c) = w[static_cast<size_t>(r * cols + c)];
    }
    Eigen::VectorXd bv(rows);
    for (Index r = 0; r < rows; ++r) bv[r] = bvals[static_cast<size_t>(r)];
    model.weights_.push_back(std::move(wm));
    model.biases_.push_back(std::move(bv));
  }
  if (model.weights_.empty()) throw std::invalid_argument("checkpoint has no layers");
  return model;
}

void save_checkpoint(const MlpVelocityField& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out << model.to_json() << "\n";
}

MlpVelocityField load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return MlpVelocityField::from_json(ss.str());
}

}  // namespace flowkit
