#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "latent_atlas/container.hpp"
#include "latent_atlas/denoiser.hpp"
#include "latent_atlas/tensor.hpp"

namespace latent_atlas {

struct IterationOptions {
  std::size_t n = 50;
  std::size_t chunk_size = 25;
  std::size_t min_iter = 10;
  std::size_t max_iter = 100;
  double convergence_threshold = 1e-4;
  std::uint64_t seed = 0;
};

/// Local geometry of the bottleneck map at (x, t): V rows are the latent
/// basis v_i, U rows the tangent basis u_i, sigma the singular values.
struct LocalBasis {
  Tensor x;
  std::size_t t = 0;
  std::size_t n = 0;
  Tensor V;      // n x d
  Tensor U;      // n x D_h
  Tensor sigma;  // n, square roots of the last inner SVD's singular values
  Tensor sigma_verified;  // n, ||J v_i|| from a final jvp pass
  std::vector<bool> degenerate;  // relative gap to a neighbour below 1e-6
  std::size_t iterations_used = 0;
  bool converged = false;
  /// max_i ||J v_i - sigma_i u_i|| / sigma_i over sigma_i > 1e-8 sigma_1.
  double final_residual = 0.0;
  /// ||P_new - P_prev||_F of the last iteration, P = V^T V.
  double subspace_change = 0.0;
};

using BasisProgress = std::function<void(std::size_t iteration, std::size_t max_iter, double subspace_change)>;

/// ||J_x v||^2 from one jvp.
double pullback_norm_sq(const DenoiserModel& model, const Tensor& x, std::size_t t, const Tensor& v);

/// Explicit D_h x d Jacobian of the bottleneck map, one jvp per input axis.
Tensor dense_jacobian(const DenoiserModel& model, const Tensor& x, std::size_t t);

/// Top-n singular triplets of J_x by block power iteration using only jvp and
/// vjp. Convergence is declared when the change of the projector V^T V falls
/// below the threshold after more than min_iter iterations; otherwise the
/// result carries converged = false after max_iter iterations.
/// Throws BadOptions for n outside 1..min(d, D_h) or inconsistent limits.
LocalBasis local_basis(const DenoiserModel& model, const Tensor& x, std::size_t t, const IterationOptions& options,
                       const BasisProgress& progress = {});

/// Grassmannian distance sqrt(sum theta_k^2) between two row spaces.
double geodesic_distance(const Tensor& u1, const Tensor& u2);

struct Projection {
  Tensor projected;  // sum_i c_i u_i
  Tensor coeffs;     // c_i = <u, u_i>
};

Projection project_onto_tangent(const Tensor& u, const LocalBasis& basis);

/// normalize(sum_i <v, v_i> v_i). Throws ZeroProjection below 1e-12.
Tensor project_onto_latent(const Tensor& v, const LocalBasis& basis);

struct TransportOptions {
  /// Weight dst.v_j by 1/sigma_j so that J v' reproduces u'.
  bool inverse_sigma_weighting = false;
  bool renormalize = true;
};

struct TransportResult {
  Tensor v;            // transported latent direction v'
  Tensor u_projected;  // u'_i in the destination tangent space
  Tensor coeffs;
  /// Angle between u_i and its projection u'_i.
  double distortion_angle = 0.0;
  /// Angle between the source v_i and v'.
  double latent_angle = 0.0;
};

/// Moves src direction i into dst by projecting u_i onto dst's tangent space
/// and rebuilding v' from dst's latent basis with the same coefficients.
/// Throws ZeroProjection when u'_i vanishes, DimMismatch on differing
/// ambient dimensions, BadOptions for i >= src.n.
TransportResult transport(const LocalBasis& src, const LocalBasis& dst, std::size_t i,
                          const TransportOptions& options = {});

/// Unsigned angle between two nonzero vectors, accurate near 0 and pi.
double vector_angle(std::span<const double> a, std::span<const double> b);

Artifact basis_to_artifact(const LocalBasis& basis);
LocalBasis basis_from_artifact(const Artifact& artifact);

}  // namespace latent_atlas
