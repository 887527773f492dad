#pragma once

#include <cstdint>
#include <vector>

#include "latent_atlas/container.hpp"
#include "latent_atlas/denoiser.hpp"
#include "latent_atlas/schedule.hpp"
#include "latent_atlas/tensor.hpp"

namespace latent_atlas {

/// x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps. Works on [d] or [N x d].
Tensor q_sample(const Tensor& x0, std::size_t t, const Tensor& eps, const NoiseSchedule& schedule);

/// Ascending DDIM grid tau_i = round(i T / S) for i = 0..S, so both 0 and T
/// are included and the S steps are as even as integer timesteps allow.
std::vector<std::size_t> timestep_grid(std::size_t T, std::size_t num_steps);

/// Grid point nearest to t (the larger one on ties).
std::size_t snap_to_grid(const std::vector<std::size_t>& grid, std::size_t t);

struct TrajectoryConfig {
  std::size_t num_steps = 100;
  double eta = 0.0;
  /// Steps starting below this timestep use eta = 1. Zero disables boosting.
  std::size_t t_boost = 200;
  std::uint64_t seed = 0;
};

/// Throws BadOptions unless 1 <= num_steps <= T, eta in [0, 1], t_boost <= T.
void validate_trajectory_config(const TrajectoryConfig& config, const NoiseSchedule& schedule);

/// States visited by a sampler or inversion, in visiting order.
struct Trajectory {
  std::vector<std::size_t> timesteps;
  std::vector<Tensor> states;

  const Tensor& at(std::size_t t) const;
};

Artifact trajectory_to_artifact(const Trajectory& trajectory);
Trajectory trajectory_from_artifact(const Artifact& artifact);

/// One DDIM update from t to t_prev < t. z is drawn from rng only when the
/// step's sigma is nonzero. Throws BadTimestep on an invalid pair.
Tensor ddim_step(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& x_t, std::size_t t,
                 std::size_t t_prev, double eta, SeededRng& rng);

/// Runs the sampler over the config grid from t_from down to t_to (both grid
/// points), applying the boosting rule per step.
Tensor ddim_sample_segment(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& x,
                           std::size_t t_from, std::size_t t_to, const TrajectoryConfig& config, SeededRng& rng,
                           Trajectory* trajectory = nullptr);

/// Full generation from x_T at t = T to x_0 with rng seeded by config.seed.
Tensor ddim_generate(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& x_T,
                     const TrajectoryConfig& config, Trajectory* trajectory = nullptr);

/// Deterministic inversion over the num_steps grid from t_from up to t_to.
Tensor ddim_invert_segment(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& x,
                           std::size_t t_from, std::size_t t_to, std::size_t num_steps,
                           Trajectory* trajectory = nullptr);

/// Inversion of x_0 all the way to x_T.
Tensor ddim_invert(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& x0,
                   std::size_t num_steps, Trajectory* trajectory = nullptr);

}  // namespace latent_atlas
