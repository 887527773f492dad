#include "latent_atlas/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "latent_atlas/error.hpp"

namespace latent_atlas {

double NoiseSchedule::alpha_bar(std::size_t t) const {
  if (t == 0) return 1.0;
  if (t > T) fail(ErrorCode::BadTimestep, "timestep " + std::to_string(t) + " exceeds T = " + std::to_string(T));
  return alpha_bars[t - 1];
}

double NoiseSchedule::beta(std::size_t t) const {
  if (t == 0 || t > T) fail(ErrorCode::BadTimestep, "beta is defined for t = 1..T");
  return betas[t - 1];
}

NoiseSchedule make_linear_schedule(std::size_t T, double beta_start, double beta_end) {
  if (T == 0) fail(ErrorCode::BadRange, "T must be >= 1");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
    fail(ErrorCode::BadRange, "need 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.T = T;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  s.betas = Tensor({T});
  s.alpha_bars = Tensor({T});
  double prod = 1.0;
  for (std::size_t i = 0; i < T; ++i) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(T - 1);
    s.betas[i] = beta_start + (beta_end - beta_start) * frac;
    prod *= 1.0 - s.betas[i];
    s.alpha_bars[i] = prod;
  }
  return s;
}

Tensor q_sample(const Tensor& x0, std::size_t t, const Tensor& eps, const NoiseSchedule& schedule) {
  if (x0.shape() != eps.shape()) fail(ErrorCode::DimMismatch, "eps must have the shape of x0");
  const double ab = schedule.alpha_bar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

std::vector<std::size_t> timestep_grid(std::size_t T, std::size_t num_steps) {
  if (num_steps == 0 || num_steps > T) fail(ErrorCode::BadOptions, "num_steps must be in 1..T");
  std::vector<std::size_t> grid(num_steps + 1);
  for (std::size_t i = 0; i <= num_steps; ++i) grid[i] = (2 * i * T + num_steps) / (2 * num_steps);
  return grid;
}

std::size_t snap_to_grid(const std::vector<std::size_t>& grid, std::size_t t) {
  if (grid.empty()) fail(ErrorCode::BadOptions, "empty timestep grid");
  std::size_t best = grid.front();
  for (std::size_t g : grid) {
    const std::size_t dist = g > t ? g - t : t - g;
    const std::size_t best_dist = best > t ? best - t : t - best;
    if (dist < best_dist || (dist == best_dist && g > best)) best = g;
  }
  return best;
}

void validate_trajectory_config(const TrajectoryConfig& config, const NoiseSchedule& schedule) {
  if (config.num_steps == 0 || config.num_steps > schedule.T) fail(ErrorCode::BadOptions, "num_steps must be in 1..T");
  if (!(config.eta >= 0.0 && config.eta <= 1.0)) fail(ErrorCode::BadOptions, "eta must be in [0, 1]");
  if (config.t_boost > schedule.T) fail(ErrorCode::BadOptions, "t_boost must be <= T");
}

const Tensor& Trajectory::at(std::size_t t) const {
  for (std::size_t i = 0; i < timesteps.size(); ++i)
    if (timesteps[i] == t) return states[i];
  fail(ErrorCode::NotFound, "trajectory has no state at t = " + std::to_string(t));
}

Artifact trajectory_to_artifact(const Trajectory& trajectory) {
  if (trajectory.states.empty()) fail(ErrorCode::BadOptions, "empty trajectory");
  Artifact artifact;
  artifact.kind = "trajectory";
  artifact.manifest.set_sizes("trajectory.timesteps", trajectory.timesteps);
  artifact.manifest.set_sizes("trajectory.state_shape", trajectory.states.front().shape());
  std::vector<Tensor> flat;
  for (const Tensor& s : trajectory.states) flat.push_back(s.reshaped({s.size()}));
  artifact.add_blob("states", stack_rows(flat));
  return artifact;
}

Trajectory trajectory_from_artifact(const Artifact& artifact) {
  if (artifact.kind != "trajectory") fail(ErrorCode::FormatError, "artifact is not a trajectory");
  Trajectory out;
  out.timesteps = artifact.manifest.get_sizes("trajectory.timesteps");
  const std::vector<std::size_t> shape = artifact.manifest.get_sizes("trajectory.state_shape");
  const Tensor& states = artifact.blob("states");
  if (states.rows() != out.timesteps.size()) fail(ErrorCode::FormatError, "trajectory state count mismatch");
  for (std::size_t i = 0; i < states.rows(); ++i) out.states.push_back(states.row_tensor(i).reshaped(shape));
  return out;
}

Tensor ddim_step(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& x_t, std::size_t t,
                 std::size_t t_prev, double eta, SeededRng& rng) {
  if (!(t > t_prev) || t > schedule.T) {
    fail(ErrorCode::BadTimestep, "ddim_step needs T >= t > t_prev >= 0, got t = " + std::to_string(t) +
                                     ", t_prev = " + std::to_string(t_prev));
  }
  const double ab_t = schedule.alpha_bar(t);
  const double ab_prev = schedule.alpha_bar(t_prev);
  const Tensor eps = forward(model, x_t, t);
  const double sigma =
      eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * std::sqrt(std::max(0.0, 1.0 - ab_t / ab_prev));
  const double dir_coef = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));
  const double sqrt_one_minus_ab = std::sqrt(1.0 - ab_t);
  const double inv_sqrt_ab = 1.0 / std::sqrt(ab_t);
  const double sqrt_ab_prev = std::sqrt(ab_prev);

  Tensor out(x_t.shape());
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double x0_hat = (x_t[k] - sqrt_one_minus_ab * eps[k]) * inv_sqrt_ab;
    out[k] = sqrt_ab_prev * x0_hat + dir_coef * eps[k];
  }
  if (sigma > 0.0) {
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += sigma * rng.normal();
  }
  return out;
}

namespace {

std::size_t grid_position(const std::vector<std::size_t>& grid, std::size_t t) {
  const auto it = std::find(grid.begin(), grid.end(), t);
  if (it == grid.end()) fail(ErrorCode::BadTimestep, "timestep " + std::to_string(t) + " is not on the DDIM grid");
  return static_cast<std::size_t>(it - grid.begin());
}

void record(Trajectory* trajectory, std::size_t t, const Tensor& x) {
  if (!trajectory) return;
  trajectory->timesteps.push_back(t);
  trajectory->states.push_back(x);
}

}  // namespace

Tensor ddim_sample_segment(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& x,
                           std::size_t t_from, std::size_t t_to, const TrajectoryConfig& config, SeededRng& rng,
                           Trajectory* trajectory) {
  validate_trajectory_config(config, schedule);
  const std::vector<std::size_t> grid = timestep_grid(schedule.T, config.num_steps);
  const std::size_t from = grid_position(grid, t_from);
  const std::size_t to = grid_position(grid, t_to);
  if (to > from) fail(ErrorCode::BadTimestep, "sampling runs from larger to smaller timesteps");
  Tensor state = x;
  record(trajectory, grid[from], state);
  for (std::size_t i = from; i > to; --i) {
    const std::size_t t = grid[i];
    const double eta = t < config.t_boost ? 1.0 : config.eta;
    state = ddim_step(model, schedule, state, t, grid[i - 1], eta, rng);
    record(trajectory, grid[i - 1], state);
  }
  return state;
}

Tensor ddim_generate(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& x_T,
                     const TrajectoryConfig& config, Trajectory* trajectory) {
  SeededRng rng(config.seed);
  return ddim_sample_segment(model, schedule, x_T, schedule.T, 0, config, rng, trajectory);
}

Tensor ddim_invert_segment(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& x,
                           std::size_t t_from, std::size_t t_to, std::size_t num_steps, Trajectory* trajectory) {
  const std::vector<std::size_t> grid = timestep_grid(schedule.T, num_steps);
  const std::size_t from = grid_position(grid, t_from);
  const std::size_t to = grid_position(grid, t_to);
  if (to < from) fail(ErrorCode::BadTimestep, "inversion runs from smaller to larger timesteps");
  Tensor state = x;
  record(trajectory, grid[from], state);
  for (std::size_t i = from; i < to; ++i) {
    const std::size_t t_prev = grid[i];
    const std::size_t t = grid[i + 1];
    const double ab_prev = schedule.alpha_bar(t_prev);
    const double ab_t = schedule.alpha_bar(t);
    const Tensor eps = forward(model, state, t_prev);
    const double sqrt_one_minus_prev = std::sqrt(1.0 - ab_prev);
    const double inv_sqrt_prev = 1.0 / std::sqrt(ab_prev);
    const double sqrt_ab_t = std::sqrt(ab_t);
    const double sqrt_one_minus_t = std::sqrt(1.0 - ab_t);
    for (std::size_t k = 0; k < state.size(); ++k) {
      const double x0_hat = (state[k] - sqrt_one_minus_prev * eps[k]) * inv_sqrt_prev;
      state[k] = sqrt_ab_t * x0_hat + sqrt_one_minus_t * eps[k];
    }
    record(trajectory, t, state);
  }
  return state;
}

Tensor ddim_invert(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& x0, std::size_t num_steps,
                   Trajectory* trajectory) {
  return ddim_invert_segment(model, schedule, x0, 0, schedule.T, num_steps, trajectory);
}

}  // namespace latent_atlas
