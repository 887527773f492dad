#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string_view>
#include <vector>

#include "latent_atlas/container.hpp"
#include "latent_atlas/schedule.hpp"
#include "latent_atlas/tensor.hpp"

namespace latent_atlas {

enum class Activation { silu, identity };

std::string_view activation_name(Activation activation);
Activation parse_activation(std::string_view name);

struct DenoiserConfig {
  std::size_t input_dim = 2;
  std::vector<std::size_t> hidden{256, 256, 256};
  /// Which hidden activation is the bottleneck h.
  std::size_t bottleneck_index = 1;
  std::size_t time_embed_dim = 32;
  /// Largest accepted timestep T.
  std::size_t timesteps = 1000;
  Activation activation = Activation::silu;

  bool operator==(const DenoiserConfig&) const = default;
};

struct DenseLayer {
  Tensor weight;  // out x in
  Tensor bias;    // out

  bool operator==(const DenseLayer&) const = default;
};

/// Time-conditioned MLP noise predictor eps(x, t). Input is x concatenated
/// with the sinusoidal time embedding; hidden layers apply the activation;
/// the output layer is linear with width input_dim.
struct DenoiserModel {
  DenoiserConfig config;
  std::uint64_t seed = 0;
  std::vector<DenseLayer> layers;  // hidden.size() + 1

  std::size_t input_dim() const { return config.input_dim; }
  std::size_t bottleneck_dim() const { return config.hidden.at(config.bottleneck_index); }

  bool operator==(const DenoiserModel&) const = default;
};

/// Layers initialized uniformly in +-1/sqrt(fan_in) from the seed.
/// Throws BadOptions for an inconsistent config.
DenoiserModel make_denoiser(const DenoiserConfig& config, std::uint64_t seed);

/// Interleaved (sin(t w_k), cos(t w_k)) with w_k = (1/10000)^(2k/dim).
Tensor time_embedding(std::size_t t, std::size_t dim, std::size_t total_timesteps);

/// eps prediction. x is a single point [d] or a batch [N x d]; the result
/// has the same shape.
Tensor forward(const DenoiserModel& model, const Tensor& x, std::size_t t);

/// Bottleneck activation h = f(x, t), [D_h] or [N x D_h].
Tensor encode(const DenoiserModel& model, const Tensor& x, std::size_t t);

struct JvpResult {
  Tensor h;  // [D_h]
  Tensor u;  // [D_h] for a single direction, [k x D_h] for stacked directions
};

/// Exact forward-mode J_x v for one direction [d] or stacked rows [k x d].
JvpResult jvp_encode(const DenoiserModel& model, const Tensor& x, std::size_t t, const Tensor& v);

/// Exact reverse-mode J_x^T u for one cotangent [D_h] or stacked rows [k x D_h].
Tensor vjp_encode(const DenoiserModel& model, const Tensor& x, std::size_t t, const Tensor& u);

struct TrainConfig {
  std::size_t steps = 20000;
  std::size_t batch_size = 128;
  double learn_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  std::uint64_t seed = 0;
};

struct TrainResult {
  DenoiserModel model;
  std::vector<double> loss_trace;  // one batch loss per step
};

using TrainProgress = std::function<void(std::size_t step, double loss)>;

/// Minimizes E ||eps - eps_theta(sqrt(ab_t) x0 + sqrt(1 - ab_t) eps, t)||^2 with
/// t uniform in 1..T using Adam. Fully determined by (model, dataset, config).
/// Throws Diverged on a non-finite loss, BadOptions on an empty dataset.
TrainResult train(DenoiserModel model, const Tensor& dataset, const NoiseSchedule& schedule,
                  const TrainConfig& config, const TrainProgress& progress = {});

/// Monte-Carlo estimate of the training objective over `draws` fresh
/// (x0, t, eps) triples.
double denoising_loss(const DenoiserModel& model, const Tensor& dataset, const NoiseSchedule& schedule,
                      std::size_t draws, std::uint64_t seed);

Artifact model_to_artifact(const DenoiserModel& model);
DenoiserModel model_from_artifact(const Artifact& artifact);
void save_model(const std::filesystem::path& path, const DenoiserModel& model);
DenoiserModel load_model(const std::filesystem::path& path);

}  // namespace latent_atlas
