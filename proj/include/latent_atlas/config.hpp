#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "latent_atlas/container.hpp"
#include "latent_atlas/dataset.hpp"
#include "latent_atlas/denoiser.hpp"
#include "latent_atlas/editing.hpp"
#include "latent_atlas/geometry.hpp"

namespace latent_atlas {

struct ScheduleParams {
  std::size_t T = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
};

struct SamplingParams {
  std::size_t num_steps = 100;
  double eta = 0.0;
  double t_boost_frac = 0.2;
};

struct EditDefaults {
  double t_edit_frac = 1.0;
  /// Absent means default_gamma(t_edit_frac).
  std::optional<double> gamma;
  std::size_t direction = 0;
  EditMethod method = EditMethod::x_space_guidance;
  std::size_t repeat = 1;
  std::uint64_t seed = 0;
};

struct RunConfig {
  DatasetSpec dataset;
  ScheduleParams schedule;
  DenoiserConfig model;  // input_dim and timesteps follow dataset and schedule
  TrainConfig train;
  IterationOptions basis;
  SamplingParams sampling;
  EditDefaults edit;
  std::string workspace;

  std::size_t t_boost() const;
  std::size_t t_edit() const;
  double gamma() const;
  NoiseSchedule make_schedule() const;
  TrajectoryConfig trajectory(std::uint64_t seed) const;
};

/// Parses `key = value` lines; '#' starts a comment. Keys not mentioned keep
/// their defaults. Throws ParseError naming the line and key for unknown
/// keys or malformed values.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Throws ValidationError whose detail names the violated constraint, for
/// example "t_edit>=t_boost" or "n<=min(d,D_h)".
void validate_config(const RunConfig& config);

/// Canonical text form; parse_config(config_to_text(c)) reproduces c.
std::string config_to_text(const RunConfig& config);

/// Every recognised key with a one-line description, for documentation.
std::string config_reference();

}  // namespace latent_atlas
