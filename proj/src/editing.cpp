#include "latent_atlas/editing.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "latent_atlas/error.hpp"

namespace latent_atlas {

namespace {

[[noreturn]] void invalid(const std::string& constraint, const std::string& message) {
  fail(ErrorCode::ValidationError, message, constraint);
}

Tensor apply_edit(const DenoiserModel& model, const Tensor& x, std::size_t t, const Tensor& v, double gamma,
                  EditMethod method, std::size_t repeat) {
  Tensor out = x;
  for (std::size_t r = 0; r < repeat; ++r) {
    out = method == EditMethod::x_space_guidance ? x_space_guidance(model, out, t, v, gamma)
                                                 : direct_addition(out, v, gamma);
  }
  return out;
}

}  // namespace

std::string_view edit_method_name(EditMethod method) {
  return method == EditMethod::x_space_guidance ? "x_space_guidance" : "direct_addition";
}

EditMethod parse_edit_method(std::string_view name) {
  if (name == "x_space_guidance" || name == "x_space") return EditMethod::x_space_guidance;
  if (name == "direct_addition" || name == "direct") return EditMethod::direct_addition;
  fail(ErrorCode::BadOptions, "unknown edit method '" + std::string(name) + "'", "method");
}

double default_gamma(double f) {
  if (!std::isfinite(f)) fail(ErrorCode::BadOptions, "t_edit fraction must be finite");
  // Table rows (fraction, gamma); linear in between, flat outside.
  constexpr std::array<std::pair<double, double>, 3> rows{{{0.6, 4.0}, {0.8, 1.0}, {1.0, 0.5}}};
  if (f <= rows.front().first) return rows.front().second;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto [f0, g0] = rows[i - 1];
    const auto [f1, g1] = rows[i];
    if (f == f1) return g1;
    if (f < f1) return g0 + (f - f0) / (f1 - f0) * (g1 - g0);
  }
  return rows.back().second;
}

Tensor x_space_guidance(const DenoiserModel& model, const Tensor& x, std::size_t t, const Tensor& v, double gamma) {
  if (x.rank() != 1 || v.shape() != x.shape() || x.size() != model.input_dim()) {
    fail(ErrorCode::DimMismatch, "x and v must both be single points of the model's dimension");
  }
  if (std::abs(norm(v.data()) - 1.0) > 1e-8) fail(ErrorCode::BadOptions, "x-space guidance needs a unit direction");
  if (!std::isfinite(gamma)) fail(ErrorCode::BadOptions, "gamma must be finite");
  if (gamma == 0.0) return x;
  const Tensor shifted = forward(model, x + v, t);
  const Tensor base = forward(model, x, t);
  Tensor out = x;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += gamma * (shifted[k] - base[k]);
  return out;
}

Tensor direct_addition(const Tensor& x, const Tensor& v, double gamma) {
  if (x.shape() != v.shape()) fail(ErrorCode::DimMismatch, "x and v must have the same shape");
  if (gamma == 0.0) return x;
  Tensor out = x;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += gamma * v[k];
  return out;
}

void validate_edit_request(const EditRequest& r, const DenoiserModel& model, const NoiseSchedule& schedule) {
  const std::size_t d = model.input_dim();
  const std::size_t dh = model.bottleneck_dim();
  if (r.x0.rank() != 1 || r.x0.size() != d) invalid("x0.dim==d", "sample dimension does not match the model");
  if (!r.x0.all_finite()) invalid("x0 finite", "sample has non-finite values");
  const TrajectoryConfig& tc = r.trajectory;
  if (tc.num_steps == 0 || tc.num_steps > schedule.T) invalid("num_steps<=T", "num_steps must be in 1..T");
  if (!(tc.eta >= 0.0 && tc.eta <= 1.0)) invalid("0<=eta<=1", "eta must be in [0, 1]");
  if (tc.t_boost > schedule.T) invalid("t_boost<=T", "t_boost must not exceed T");
  if (r.t_edit == 0 || r.t_edit > schedule.T) invalid("t_edit<=T", "t_edit must be in 1..T");
  if (r.t_edit < tc.t_boost) invalid("t_edit>=t_boost", "t_edit must not be below t_boost");
  const std::size_t snapped = snap_to_grid(timestep_grid(schedule.T, tc.num_steps), r.t_edit);
  if (snapped < tc.t_boost || snapped == 0) invalid("t_edit>=t_boost", "t_edit snaps below t_boost on the DDIM grid");
  if (r.basis.n == 0 || r.basis.n > std::min(d, dh)) invalid("n<=min(d,D_h)", "basis size exceeds min(d, D_h)");
  if (r.basis.min_iter == 0 || r.basis.max_iter < r.basis.min_iter) {
    invalid("max_iter>=min_iter>=1", "need max_iter >= min_iter >= 1");
  }
  if (r.basis.chunk_size == 0) invalid("chunk_size>=1", "chunk_size must be >= 1");
  if (!(r.basis.convergence_threshold > 0.0)) invalid("threshold>0", "convergence threshold must be positive");
  if (r.direction >= r.basis.n) invalid("direction<n", "direction index must be below n");
  if (!std::isfinite(r.gamma)) invalid("gamma finite", "gamma must be finite");
  if (r.repeat_count == 0) invalid("repeat_count>=1", "repeat_count must be >= 1");
}

EditResult edit_with_direction(const DenoiserModel& model, const NoiseSchedule& schedule, const EditRequest& request,
                               const DirectionProvider& provider, const BasisProgress& progress) {
  validate_edit_request(request, model, schedule);
  const TrajectoryConfig& tc = request.trajectory;
  const std::size_t t_edit = snap_to_grid(timestep_grid(schedule.T, tc.num_steps), request.t_edit);

  EditResult result;
  result.original = request.x0;
  result.t_edit = t_edit;
  result.direction_index = request.direction;
  result.gamma = request.gamma;
  result.method = request.method;
  result.repeat_count = request.repeat_count;

  // Steps 1-2: invert to x_T, then denoise back down to t_edit.
  const Tensor x_T = ddim_invert(model, schedule, request.x0, tc.num_steps, &result.inversion);
  SeededRng rng(tc.seed);
  result.x_t_edit = ddim_sample_segment(model, schedule, x_T, schedule.T, t_edit, tc, rng);

  // Step 3: local basis at the edit point.
  result.basis = local_basis(model, result.x_t_edit, t_edit, request.basis, progress);

  // Step 4: move along the chosen direction.
  result.direction = provider(result.basis);
  result.x_t_edited = apply_edit(model, result.x_t_edit, t_edit, result.direction, request.gamma, request.method,
                                 request.repeat_count);

  // Step 5: finish both runs with identical boosting noise.
  SeededRng rng_edit = rng;
  result.reconstructed = ddim_sample_segment(model, schedule, result.x_t_edit, t_edit, 0, tc, rng);
  result.edited = ddim_sample_segment(model, schedule, result.x_t_edited, t_edit, 0, tc, rng_edit);
  return result;
}

EditResult edit_pipeline(const DenoiserModel& model, const NoiseSchedule& schedule, const EditRequest& request,
                         const BasisProgress& progress) {
  const std::size_t i = request.direction;
  return edit_with_direction(
      model, schedule, request, [i](const LocalBasis& basis) { return basis.V.row_tensor(i); }, progress);
}

EditResult edit_via_transport(const DenoiserModel& model, const NoiseSchedule& schedule, const EditResult& source,
                              const EditRequest& target_request, const TransportOptions& options) {
  double angle = 0.0;
  const std::size_t i = source.direction_index;
  EditRequest request = target_request;
  request.direction = std::min(i, request.basis.n - 1);
  EditResult result = edit_with_direction(model, schedule, request, [&](const LocalBasis& target) {
    TransportResult moved = transport(source.basis, target, i, options);
    angle = moved.distortion_angle;
    if (std::abs(norm(moved.v.data()) - 1.0) > 1e-8) {
      // Scale-preserving transport still needs a unit vector for guidance.
      moved.v = (1.0 / norm(moved.v.data())) * moved.v;
    }
    return moved.v;
  });
  result.direction_index = i;
  result.distortion_angle = angle;
  return result;
}

BaselinePair random_direction_baseline(const DenoiserModel& model, const NoiseSchedule& schedule,
                                       const EditRequest& request, std::uint64_t salt) {
  SeededRng rng(mix_seed(request.trajectory.seed, salt));
  Tensor v = rng.normal({model.input_dim()});
  v = (1.0 / norm(v.data())) * v;
  BaselinePair pair;
  pair.random_direction = v;
  pair.raw = edit_with_direction(model, schedule, request, [&v](const LocalBasis&) { return v; });
  pair.projected =
      edit_with_direction(model, schedule, request, [&v](const LocalBasis& basis) { return project_onto_latent(v, basis); });
  return pair;
}

Artifact edit_to_artifact(const EditResult& r) {
  Artifact artifact;
  artifact.kind = "edit";
  Manifest& mf = artifact.manifest;
  mf.set("edit.t_edit", r.t_edit);
  mf.set("edit.direction", r.direction_index);
  mf.set("edit.gamma", r.gamma);
  mf.set("edit.method", std::string(edit_method_name(r.method)));
  mf.set("edit.repeat", r.repeat_count);
  mf.set("edit.basis_converged", r.basis.converged);
  mf.set("edit.basis_iterations", r.basis.iterations_used);
  mf.set("edit.basis_residual", r.basis.final_residual);
  if (r.distortion_angle) mf.set("edit.distortion_angle", *r.distortion_angle);
  mf.set("edit.original_hash", sha256_hex(tensor_bytes(r.original)));
  mf.set("edit.reconstructed_hash", sha256_hex(tensor_bytes(r.reconstructed)));
  mf.set("edit.edited_hash", sha256_hex(tensor_bytes(r.edited)));
  artifact.add_blob("original", r.original);
  artifact.add_blob("reconstructed", r.reconstructed);
  artifact.add_blob("edited", r.edited);
  artifact.add_blob("x_t_edit", r.x_t_edit);
  artifact.add_blob("x_t_edited", r.x_t_edited);
  artifact.add_blob("direction", r.direction);
  artifact.add_blob("sigma", r.basis.sigma);
  return artifact;
}

}  // namespace latent_atlas
