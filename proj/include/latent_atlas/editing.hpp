#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>

#include "latent_atlas/container.hpp"
#include "latent_atlas/denoiser.hpp"
#include "latent_atlas/diffusion.hpp"
#include "latent_atlas/geometry.hpp"

namespace latent_atlas {

enum class EditMethod { x_space_guidance, direct_addition };

std::string_view edit_method_name(EditMethod method);
/// Accepts "x_space_guidance"/"x_space" and "direct_addition"/"direct".
EditMethod parse_edit_method(std::string_view name);

/// Guidance scale for an edit timestep given as a fraction of T: 0.5 at T,
/// 1 at 0.8T, 4 at 0.6T, linearly interpolated in between and clamped
/// outside.
double default_gamma(double t_edit_fraction);

struct EditRequest {
  Tensor x0;
  std::optional<std::size_t> sample_index;  // provenance only
  std::size_t t_edit = 1000;  // snapped to the nearest DDIM grid point
  std::size_t direction = 0;
  double gamma = 0.5;
  EditMethod method = EditMethod::x_space_guidance;
  std::size_t repeat_count = 1;
  IterationOptions basis;
  TrajectoryConfig trajectory;  // num_steps, eta, t_boost, seed
};

struct EditResult {
  Tensor original;
  Tensor reconstructed;
  Tensor edited;
  std::size_t t_edit = 0;  // grid timestep actually used
  Tensor x_t_edit;         // latent at t_edit before the edit
  Tensor x_t_edited;       // latent at t_edit after the edit
  Tensor direction;        // unit v applied
  LocalBasis basis;
  Trajectory inversion;
  std::optional<double> distortion_angle;  // set by edit_via_transport
  std::size_t direction_index = 0;
  double gamma = 0.0;
  EditMethod method = EditMethod::x_space_guidance;
  std::size_t repeat_count = 1;
};

/// x + gamma (eps(x + v, t) - eps(x, t)); v must be unit norm (BadOptions).
/// gamma = 0 returns x unchanged bit for bit.
Tensor x_space_guidance(const DenoiserModel& model, const Tensor& x, std::size_t t, const Tensor& v, double gamma);

/// x + gamma v; gamma = 0 returns x unchanged bit for bit.
Tensor direct_addition(const Tensor& x, const Tensor& v, double gamma);

/// Throws ValidationError naming the violated constraint (for example
/// "t_edit>=t_boost").
void validate_edit_request(const EditRequest& request, const DenoiserModel& model, const NoiseSchedule& schedule);

/// Picks the edit direction once the local basis at t_edit is known.
using DirectionProvider = std::function<Tensor(const LocalBasis& basis)>;

/// Invert, denoise to t_edit, find the basis, edit, denoise to 0, plus the
/// unedited reconstruction sharing the same boosting noise.
EditResult edit_pipeline(const DenoiserModel& model, const NoiseSchedule& schedule, const EditRequest& request,
                         const BasisProgress& progress = {});

EditResult edit_with_direction(const DenoiserModel& model, const NoiseSchedule& schedule, const EditRequest& request,
                               const DirectionProvider& provider, const BasisProgress& progress = {});

/// Applies direction `source.direction_index` of the source basis to a new
/// sample by transporting it into the target's local basis.
EditResult edit_via_transport(const DenoiserModel& model, const NoiseSchedule& schedule, const EditResult& source,
                              const EditRequest& target_request, const TransportOptions& options = {});

struct BaselinePair {
  EditResult raw;        // a unit random direction
  EditResult projected;  // the same direction projected onto span(V)
  Tensor random_direction;
};

/// The random direction is drawn from mix_seed(request.trajectory.seed, salt).
BaselinePair random_direction_baseline(const DenoiserModel& model, const NoiseSchedule& schedule,
                                       const EditRequest& request, std::uint64_t salt = 0);

Artifact edit_to_artifact(const EditResult& result);

}  // namespace latent_atlas
