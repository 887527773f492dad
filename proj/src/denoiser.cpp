#include "latent_atlas/denoiser.hpp"

#include <cmath>

#include "eigen_view.hpp"
#include "latent_atlas/error.hpp"

namespace latent_atlas {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double activate(Activation a, double z) {
  if (a == Activation::identity) return z;
  return z / (1.0 + std::exp(-z));
}

double activation_grad(Activation a, double z) {
  if (a == Activation::identity) return 1.0;
  const double s = 1.0 / (1.0 + std::exp(-z));
  return s * (1.0 + z * (1.0 - s));
}

MatrixXd apply_activation(Activation a, const MatrixXd& z) {
  return z.unaryExpr([a](double v) { return activate(a, v); });
}

MatrixXd activation_grads(Activation a, const MatrixXd& z) {
  return z.unaryExpr([a](double v) { return activation_grad(a, v); });
}

ConstMatrixMap weight_of(const DenseLayer& layer) { return as_matrix(layer.weight); }
ConstVectorMap bias_of(const DenseLayer& layer) { return as_vector(layer.bias); }

void check_timestep(const DenoiserModel& model, std::size_t t) {
  if (t > model.config.timesteps) {
    fail(ErrorCode::BadTimestep, "timestep " + std::to_string(t) + " exceeds T = " +
                                     std::to_string(model.config.timesteps));
  }
}

// Points as rows of a [N x d] tensor (a rank-1 tensor is one point).
std::size_t check_points(const DenoiserModel& model, const Tensor& x) {
  if (x.rank() == 0 || x.rank() > 2 || x.cols() != model.input_dim()) {
    fail(ErrorCode::DimMismatch, "input dimension does not match the model (expected " +
                                     std::to_string(model.input_dim()) + ")");
  }
  return x.rows();
}

// Column-stacked network inputs [x; embedding(t)] for every point.
MatrixXd network_inputs(const DenoiserModel& model, const Tensor& x, std::span<const std::size_t> timesteps) {
  const std::size_t n = x.rows();
  const std::size_t d = model.input_dim();
  const std::size_t e = model.config.time_embed_dim;
  MatrixXd input(static_cast<Eigen::Index>(d + e), static_cast<Eigen::Index>(n));
  input.topRows(static_cast<Eigen::Index>(d)) = as_matrix(x.rank() == 1 ? x.reshaped({1, d}) : x).transpose();
  std::size_t cached_t = static_cast<std::size_t>(-1);
  Tensor emb;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t t = timesteps.size() == 1 ? timesteps[0] : timesteps[i];
    if (t != cached_t) {
      emb = time_embedding(t, e, model.config.timesteps);
      cached_t = t;
    }
    for (std::size_t k = 0; k < e; ++k) input(static_cast<Eigen::Index>(d + k), static_cast<Eigen::Index>(i)) = emb[k];
  }
  return input;
}

struct ForwardTrace {
  std::vector<MatrixXd> pre;   // pre-activations of hidden layers
  std::vector<MatrixXd> post;  // activations of hidden layers
};

// Runs hidden layers 0..last_hidden (inclusive). Keeps the trace if asked.
MatrixXd run_hidden(const DenoiserModel& model, const MatrixXd& input, std::size_t last_hidden,
                    ForwardTrace* trace) {
  MatrixXd a = input;
  for (std::size_t l = 0; l <= last_hidden; ++l) {
    MatrixXd z = weight_of(model.layers[l]) * a;
    z.colwise() += bias_of(model.layers[l]);
    a = apply_activation(model.config.activation, z);
    if (trace) {
      trace->pre.push_back(std::move(z));
      trace->post.push_back(a);
    }
  }
  return a;
}

MatrixXd run_output(const DenoiserModel& model, const MatrixXd& last_hidden) {
  const DenseLayer& out_layer = model.layers.back();
  MatrixXd y = weight_of(out_layer) * last_hidden;
  y.colwise() += bias_of(out_layer);
  return y;
}

Tensor columns_to_tensor(const MatrixXd& m, bool single) {
  if (single) {
    Tensor out({static_cast<std::size_t>(m.rows())});
    as_vector(out) = m.col(0);
    return out;
  }
  Tensor out({static_cast<std::size_t>(m.cols()), static_cast<std::size_t>(m.rows())});
  as_matrix(out) = m.transpose();
  return out;
}

MatrixXd forward_columns(const DenoiserModel& model, const MatrixXd& input) {
  const std::size_t hidden = model.config.hidden.size();
  return run_output(model, run_hidden(model, input, hidden - 1, nullptr));
}

void validate_config(const DenoiserConfig& c) {
  if (c.input_dim == 0) fail(ErrorCode::BadOptions, "input_dim must be positive");
  if (c.hidden.empty()) fail(ErrorCode::BadOptions, "at least one hidden layer is required");
  for (std::size_t w : c.hidden)
    if (w == 0) fail(ErrorCode::BadOptions, "hidden widths must be positive");
  if (c.bottleneck_index >= c.hidden.size()) fail(ErrorCode::BadOptions, "bottleneck_index out of range");
  if (c.time_embed_dim % 2 != 0) fail(ErrorCode::BadOptions, "time_embed_dim must be even");
  if (c.timesteps == 0) fail(ErrorCode::BadOptions, "timesteps must be positive");
}

}  // namespace

std::string_view activation_name(Activation activation) {
  return activation == Activation::silu ? "silu" : "identity";
}

Activation parse_activation(std::string_view name) {
  if (name == "silu") return Activation::silu;
  if (name == "identity") return Activation::identity;
  fail(ErrorCode::BadOptions, "unknown activation '" + std::string(name) + "'");
}

DenoiserModel make_denoiser(const DenoiserConfig& config, std::uint64_t seed) {
  validate_config(config);
  DenoiserModel model{config, seed, {}};
  SeededRng rng(seed);
  std::size_t fan_in = config.input_dim + config.time_embed_dim;
  std::vector<std::size_t> widths = config.hidden;
  widths.push_back(config.input_dim);
  for (std::size_t out : widths) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    DenseLayer layer{Tensor({out, fan_in}), Tensor({out})};
    for (double& w : layer.weight.values()) w = rng.uniform(-bound, bound);
    for (double& b : layer.bias.values()) b = rng.uniform(-bound, bound);
    model.layers.push_back(std::move(layer));
    fan_in = out;
  }
  return model;
}

Tensor time_embedding(std::size_t t, std::size_t dim, std::size_t total_timesteps) {
  if (t > total_timesteps) fail(ErrorCode::BadTimestep, "timestep exceeds T");
  if (dim % 2 != 0) fail(ErrorCode::BadOptions, "embedding dimension must be even");
  Tensor out({dim});
  const double td = static_cast<double>(t);
  for (std::size_t k = 0; k < dim / 2; ++k) {
    const double omega = std::pow(1.0 / 10000.0, 2.0 * static_cast<double>(k) / static_cast<double>(dim));
    out[2 * k] = std::sin(td * omega);
    out[2 * k + 1] = std::cos(td * omega);
  }
  return out;
}

Tensor forward(const DenoiserModel& model, const Tensor& x, std::size_t t) {
  check_points(model, x);
  check_timestep(model, t);
  const std::size_t ts[] = {t};
  return columns_to_tensor(forward_columns(model, network_inputs(model, x, ts)), x.rank() == 1);
}

Tensor encode(const DenoiserModel& model, const Tensor& x, std::size_t t) {
  check_points(model, x);
  check_timestep(model, t);
  const std::size_t ts[] = {t};
  const MatrixXd h = run_hidden(model, network_inputs(model, x, ts), model.config.bottleneck_index, nullptr);
  return columns_to_tensor(h, x.rank() == 1);
}

JvpResult jvp_encode(const DenoiserModel& model, const Tensor& x, std::size_t t, const Tensor& v) {
  if (x.rank() != 1) fail(ErrorCode::DimMismatch, "jvp_encode expects a single point");
  check_points(model, x);
  check_timestep(model, t);
  const std::size_t d = model.input_dim();
  if (v.cols() != d || v.rank() > 2) fail(ErrorCode::DimMismatch, "direction dimension does not match the model");
  const bool single = v.rank() == 1;
  const Tensor directions = single ? v.reshaped({1, d}) : v;

  const std::size_t ts[] = {t};
  ForwardTrace trace;
  run_hidden(model, network_inputs(model, x, ts), model.config.bottleneck_index, &trace);

  // Tangents ride along with the primal values; time embedding has none.
  MatrixXd tangent = weight_of(model.layers[0]).leftCols(static_cast<Eigen::Index>(d)) *
                     as_matrix(directions).transpose();
  for (std::size_t l = 0; l <= model.config.bottleneck_index; ++l) {
    if (l > 0) tangent = weight_of(model.layers[l]) * tangent;
    const VectorXd grad = activation_grads(model.config.activation, trace.pre[l]).col(0);
    tangent = (tangent.array().colwise() * grad.array()).matrix();
  }

  JvpResult result;
  result.h = columns_to_tensor(trace.post.back(), true);
  result.u = columns_to_tensor(tangent, single);
  return result;
}

Tensor vjp_encode(const DenoiserModel& model, const Tensor& x, std::size_t t, const Tensor& u) {
  if (x.rank() != 1) fail(ErrorCode::DimMismatch, "vjp_encode expects a single point");
  check_points(model, x);
  check_timestep(model, t);
  const std::size_t d = model.input_dim();
  const std::size_t dh = model.bottleneck_dim();
  if (u.cols() != dh || u.rank() > 2) fail(ErrorCode::DimMismatch, "cotangent dimension does not match the bottleneck");
  const bool single = u.rank() == 1;
  const Tensor cotangents = single ? u.reshaped({1, dh}) : u;

  const std::size_t ts[] = {t};
  ForwardTrace trace;
  run_hidden(model, network_inputs(model, x, ts), model.config.bottleneck_index, &trace);

  MatrixXd grad = as_matrix(cotangents).transpose();
  for (std::size_t l = model.config.bottleneck_index + 1; l-- > 0;) {
    const VectorXd local = activation_grads(model.config.activation, trace.pre[l]).col(0);
    grad = (grad.array().colwise() * local.array()).matrix();
    grad = weight_of(model.layers[l]).transpose() * grad;
  }
  return columns_to_tensor(grad.topRows(static_cast<Eigen::Index>(d)), single);
}

TrainResult train(DenoiserModel model, const Tensor& dataset, const NoiseSchedule& schedule,
                  const TrainConfig& config, const TrainProgress& progress) {
  if (dataset.rows() == 0 || dataset.size() == 0) fail(ErrorCode::BadOptions, "training dataset is empty");
  if (dataset.cols() != model.input_dim()) fail(ErrorCode::DimMismatch, "dataset dimension does not match the model");
  if (config.batch_size == 0) fail(ErrorCode::BadOptions, "batch_size must be >= 1");
  if (schedule.T > model.config.timesteps) fail(ErrorCode::BadOptions, "schedule is longer than the model's T");

  TrainResult result{std::move(model), {}};
  if (config.steps == 0) return result;
  DenoiserModel& m = result.model;

  const std::size_t n_layers = m.layers.size();
  const std::size_t hidden = n_layers - 1;
  const std::size_t d = m.input_dim();
  const std::size_t e = m.config.time_embed_dim;
  const std::size_t batch = config.batch_size;
  const auto B = static_cast<Eigen::Index>(batch);
  const Activation act = m.config.activation;

  std::vector<RowMatrix> weights, m_w, v_w;
  std::vector<VectorXd> biases, m_b, v_b;
  for (const DenseLayer& layer : m.layers) {
    weights.emplace_back(as_matrix(layer.weight));
    biases.emplace_back(as_vector(layer.bias));
    m_w.push_back(RowMatrix::Zero(weights.back().rows(), weights.back().cols()));
    v_w.push_back(m_w.back());
    m_b.push_back(VectorXd::Zero(biases.back().size()));
    v_b.push_back(m_b.back());
  }

  // Embedding table for t = 0..T.
  MatrixXd embed_table(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(schedule.T + 1));
  for (std::size_t t = 0; t <= schedule.T; ++t) {
    const Tensor emb = time_embedding(t, e, m.config.timesteps);
    embed_table.col(static_cast<Eigen::Index>(t)) = as_vector(emb);
  }

  SeededRng rng(config.seed);
  MatrixXd input(static_cast<Eigen::Index>(d + e), B);
  MatrixXd noise(static_cast<Eigen::Index>(d), B);
  std::vector<MatrixXd> pre(hidden), post(hidden);
  result.loss_trace.reserve(config.steps);

  for (std::size_t step = 0; step < config.steps; ++step) {
    for (Eigen::Index b = 0; b < B; ++b) {
      const std::size_t idx = rng.index(dataset.rows());
      const std::size_t t = 1 + rng.index(schedule.T);
      const double ab = schedule.alpha_bar(t);
      const double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
      for (std::size_t k = 0; k < d; ++k) {
        const double eps = rng.normal();
        noise(static_cast<Eigen::Index>(k), b) = eps;
        input(static_cast<Eigen::Index>(k), b) = sa * dataset(idx, k) + sn * eps;
      }
      input.col(b).tail(static_cast<Eigen::Index>(e)) = embed_table.col(static_cast<Eigen::Index>(t));
    }

    const MatrixXd* a = &input;
    for (std::size_t l = 0; l < hidden; ++l) {
      pre[l].noalias() = weights[l] * (*a);
      pre[l].colwise() += biases[l];
      post[l] = apply_activation(act, pre[l]);
      a = &post[l];
    }
    MatrixXd out = weights[hidden] * (*a);
    out.colwise() += biases[hidden];
    const MatrixXd diff = out - noise;
    const double loss = diff.squaredNorm() / static_cast<double>(batch);
    if (!std::isfinite(loss)) fail(ErrorCode::Diverged, "training loss became non-finite at step " + std::to_string(step));
    result.loss_trace.push_back(loss);

    std::vector<RowMatrix> grad_w(n_layers);
    std::vector<VectorXd> grad_b(n_layers);
    MatrixXd g = (2.0 / static_cast<double>(batch)) * diff;
    for (std::size_t l = n_layers; l-- > 0;) {
      const MatrixXd& below = l == 0 ? input : post[l - 1];
      grad_w[l].noalias() = g * below.transpose();
      grad_b[l] = g.rowwise().sum();
      if (l > 0) {
        MatrixXd back = weights[l].transpose() * g;
        g = back.cwiseProduct(activation_grads(act, pre[l - 1]));
      }
    }

    const double t1 = static_cast<double>(step + 1);
    const double corr1 = 1.0 - std::pow(config.beta1, t1);
    const double corr2 = 1.0 - std::pow(config.beta2, t1);
    for (std::size_t l = 0; l < n_layers; ++l) {
      m_w[l] = config.beta1 * m_w[l] + (1.0 - config.beta1) * grad_w[l];
      v_w[l] = config.beta2 * v_w[l] + (1.0 - config.beta2) * grad_w[l].cwiseAbs2();
      weights[l].array() -= config.learn_rate * (m_w[l].array() / corr1) /
                            ((v_w[l].array() / corr2).sqrt() + config.eps_adam);
      m_b[l] = config.beta1 * m_b[l] + (1.0 - config.beta1) * grad_b[l];
      v_b[l] = config.beta2 * v_b[l] + (1.0 - config.beta2) * grad_b[l].cwiseAbs2();
      biases[l].array() -= config.learn_rate * (m_b[l].array() / corr1) /
                           ((v_b[l].array() / corr2).sqrt() + config.eps_adam);
    }
    if (progress) progress(step, loss);
  }

  for (std::size_t l = 0; l < n_layers; ++l) {
    as_matrix(m.layers[l].weight) = weights[l];
    as_vector(m.layers[l].bias) = biases[l];
    if (!m.layers[l].weight.all_finite() || !m.layers[l].bias.all_finite()) {
      fail(ErrorCode::Diverged, "training produced non-finite weights");
    }
  }
  return result;
}

double denoising_loss(const DenoiserModel& model, const Tensor& dataset, const NoiseSchedule& schedule,
                      std::size_t draws, std::uint64_t seed) {
  if (dataset.rows() == 0 || draws == 0) fail(ErrorCode::BadOptions, "denoising_loss needs data and draws");
  const std::size_t d = model.input_dim();
  SeededRng rng(seed);
  double total = 0.0;
  constexpr std::size_t kChunk = 1024;
  for (std::size_t start = 0; start < draws; start += kChunk) {
    const std::size_t n = std::min(kChunk, draws - start);
    Tensor xt({n, d});
    Tensor eps({n, d});
    std::vector<std::size_t> ts(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t idx = rng.index(dataset.rows());
      ts[i] = 1 + rng.index(schedule.T);
      const double ab = schedule.alpha_bar(ts[i]);
      for (std::size_t k = 0; k < d; ++k) {
        eps(i, k) = rng.normal();
        xt(i, k) = std::sqrt(ab) * dataset(idx, k) + std::sqrt(1.0 - ab) * eps(i, k);
      }
    }
    const MatrixXd pred = forward_columns(model, network_inputs(model, xt, ts));
    total += (pred - as_matrix(eps).transpose()).squaredNorm();
  }
  return total / static_cast<double>(draws);
}

Artifact model_to_artifact(const DenoiserModel& model) {
  Artifact artifact;
  artifact.kind = "model";
  Manifest& mf = artifact.manifest;
  mf.set("model.input_dim", model.config.input_dim);
  mf.set_sizes("model.hidden", model.config.hidden);
  mf.set("model.bottleneck_index", model.config.bottleneck_index);
  mf.set("model.time_embed_dim", model.config.time_embed_dim);
  mf.set("model.timesteps", model.config.timesteps);
  mf.set("model.activation", std::string(activation_name(model.config.activation)));
  mf.set("model.seed", model.seed);
  mf.set("model.layers", model.layers.size());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const DenseLayer& layer = model.layers[l];
    const std::size_t out = layer.weight.rows();
    const std::size_t in = layer.weight.cols();
    // One blob per layer: each row holds the weights followed by the bias.
    Tensor packed({out, in + 1});
    for (std::size_t r = 0; r < out; ++r) {
      std::copy(layer.weight.row(r).begin(), layer.weight.row(r).end(), packed.row(r).begin());
      packed(r, in) = layer.bias[r];
    }
    artifact.add_blob("layer." + std::to_string(l), std::move(packed));
  }
  return artifact;
}

DenoiserModel model_from_artifact(const Artifact& artifact) {
  if (artifact.kind != "model") fail(ErrorCode::FormatError, "artifact is a '" + artifact.kind + "', not a model");
  const Manifest& mf = artifact.manifest;
  DenoiserConfig config;
  config.input_dim = mf.get_uint("model.input_dim");
  config.hidden = mf.get_sizes("model.hidden");
  config.bottleneck_index = mf.get_uint("model.bottleneck_index");
  config.time_embed_dim = mf.get_uint("model.time_embed_dim");
  config.timesteps = mf.get_uint("model.timesteps");
  config.activation = parse_activation(mf.get("model.activation"));
  validate_config(config);

  DenoiserModel model{config, mf.get_uint("model.seed"), {}};
  const std::size_t n_layers = mf.get_uint("model.layers");
  if (n_layers != config.hidden.size() + 1) fail(ErrorCode::FormatError, "layer count does not match hidden widths");
  std::size_t fan_in = config.input_dim + config.time_embed_dim;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const Tensor& packed = artifact.blob("layer." + std::to_string(l));
    const std::size_t out = l < config.hidden.size() ? config.hidden[l] : config.input_dim;
    if (packed.rank() != 2 || packed.rows() != out || packed.cols() != fan_in + 1) {
      fail(ErrorCode::FormatError, "layer " + std::to_string(l) + " has the wrong shape");
    }
    DenseLayer layer{Tensor({out, fan_in}), Tensor({out})};
    for (std::size_t r = 0; r < out; ++r) {
      std::copy_n(packed.row(r).begin(), fan_in, layer.weight.row(r).begin());
      layer.bias[r] = packed(r, fan_in);
    }
    model.layers.push_back(std::move(layer));
    fan_in = out;
  }
  return model;
}

void save_model(const std::filesystem::path& path, const DenoiserModel& model) {
  write_artifact(path, model_to_artifact(model));
}

DenoiserModel load_model(const std::filesystem::path& path) { return model_from_artifact(read_artifact(path)); }

}  // namespace latent_atlas
