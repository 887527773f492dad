#include "latent_atlas/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "latent_atlas/error.hpp"
#include "latent_atlas/linalg.hpp"

namespace latent_atlas {

namespace {

void validate_options(const IterationOptions& o, std::size_t d, std::size_t dh) {
  if (o.n == 0 || o.n > std::min(d, dh)) {
    fail(ErrorCode::BadOptions, "n must be in 1..min(d, D_h) = " + std::to_string(std::min(d, dh)),
         "n<=min(d,D_h)");
  }
  if (o.chunk_size == 0) fail(ErrorCode::BadOptions, "chunk_size must be >= 1");
  if (o.min_iter == 0 || o.max_iter < o.min_iter) fail(ErrorCode::BadOptions, "need max_iter >= min_iter >= 1");
  if (!(o.convergence_threshold > 0.0)) fail(ErrorCode::BadOptions, "convergence_threshold must be positive");
}

// Rows of J V^T, computed chunk by chunk.
Tensor jvp_rows(const DenoiserModel& model, const Tensor& x, std::size_t t, const Tensor& v, std::size_t chunk) {
  const std::size_t n = v.rows();
  Tensor out({n, model.bottleneck_dim()});
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t count = std::min(chunk, n - start);
    Tensor block({count, v.cols()});
    for (std::size_t r = 0; r < count; ++r) block.set_row(r, v.row(start + r));
    const Tensor u = jvp_encode(model, x, t, block).u;
    for (std::size_t r = 0; r < count; ++r) out.set_row(start + r, u.row(r));
  }
  return out;
}

// Rows of U J, i.e. J^T u_i for every row u_i.
Tensor vjp_rows(const DenoiserModel& model, const Tensor& x, std::size_t t, const Tensor& u, std::size_t chunk) {
  const std::size_t n = u.rows();
  Tensor out({n, model.input_dim()});
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t count = std::min(chunk, n - start);
    Tensor block({count, u.cols()});
    for (std::size_t r = 0; r < count; ++r) block.set_row(r, u.row(start + r));
    const Tensor w = vjp_encode(model, x, t, block);
    for (std::size_t r = 0; r < count; ++r) out.set_row(start + r, w.row(r));
  }
  return out;
}

Tensor projector(const Tensor& v) { return matmul(v.transposed(), v); }

void subtract_projections(std::span<double> row, const Tensor& basis, std::size_t count) {
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t j = 0; j < count; ++j) {
      const double c = dot(row, basis.row(j));
      for (std::size_t k = 0; k < row.size(); ++k) row[k] -= c * basis(j, k);
    }
  }
}

// Orthonormalizes rows in order, keeping each row's orientation. Rows marked
// unusable (zero singular value) are replaced by a completion vector.
Tensor orthonormal_rows_with_completion(Tensor rows, const std::vector<bool>& usable) {
  const std::size_t dim = rows.cols();
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    std::span<double> row = rows.row(i);
    if (usable[i]) {
      subtract_projections(row, rows, i);
      const double len = norm(row);
      if (len > 1e-8) {
        for (double& value : row) value /= len;
        continue;
      }
    }
    bool placed = false;
    for (std::size_t axis = 0; axis < dim && !placed; ++axis) {
      std::fill(row.begin(), row.end(), 0.0);
      row[axis] = 1.0;
      subtract_projections(row, rows, i);
      const double len = norm(row);
      if (len > 0.5) {
        for (double& value : row) value /= len;
        placed = true;
      }
    }
    if (!placed) fail(ErrorCode::RankDeficient, "cannot complete the tangent basis");
  }
  return rows;
}

}  // namespace

double pullback_norm_sq(const DenoiserModel& model, const Tensor& x, std::size_t t, const Tensor& v) {
  if (v.rank() != 1) fail(ErrorCode::DimMismatch, "pullback_norm_sq expects a single direction");
  return squared_norm(jvp_encode(model, x, t, v).u.data());
}

Tensor dense_jacobian(const DenoiserModel& model, const Tensor& x, std::size_t t) {
  const std::size_t d = model.input_dim();
  return jvp_encode(model, x, t, Tensor::identity(d)).u.transposed();
}

LocalBasis local_basis(const DenoiserModel& model, const Tensor& x, std::size_t t, const IterationOptions& options,
                       const BasisProgress& progress) {
  const std::size_t d = model.input_dim();
  const std::size_t dh = model.bottleneck_dim();
  if (x.rank() != 1 || x.size() != d) fail(ErrorCode::DimMismatch, "base point dimension does not match the model");
  validate_options(options, d, dh);
  const std::size_t n = options.n;

  SeededRng rng(options.seed);
  Tensor v = qr_orthonormalize(rng.normal({n, d}));
  Tensor s({n});
  Tensor proj = projector(v);

  LocalBasis basis;
  basis.x = x;
  basis.t = t;
  basis.n = n;
  for (std::size_t iter = 0; iter < options.max_iter; ++iter) {
    const Tensor u = jvp_rows(model, x, t, v, options.chunk_size);
    const Tensor m = vjp_rows(model, x, t, u, options.chunk_size);
    SvdResult svd = dense_svd(m);
    v = std::move(svd.Vt);
    s = std::move(svd.S);

    Tensor next_proj = projector(v);
    basis.subspace_change = frobenius_norm(next_proj - proj);
    proj = std::move(next_proj);
    basis.iterations_used = iter + 1;
    if (progress) progress(iter + 1, options.max_iter, basis.subspace_change);
    if (basis.subspace_change < options.convergence_threshold && iter > options.min_iter) {
      basis.converged = true;
      break;
    }
  }

  basis.sigma = Tensor({n});
  for (std::size_t i = 0; i < n; ++i) basis.sigma[i] = std::sqrt(std::max(0.0, s[i]));

  // Verification pass: u_i = J v_i / ||J v_i||.
  const Tensor jv = jvp_rows(model, x, t, v, options.chunk_size);
  basis.sigma_verified = Tensor({n});
  std::vector<bool> usable(n);
  const double scale = norm(jv.row(0));
  Tensor u_rows = jv;
  for (std::size_t i = 0; i < n; ++i) {
    basis.sigma_verified[i] = norm(jv.row(i));
    usable[i] = basis.sigma_verified[i] > 1e-12 * std::max(scale, 1e-300);
  }
  basis.U = orthonormal_rows_with_completion(std::move(u_rows), usable);
  basis.V = std::move(v);

  basis.degenerate.assign(n, false);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double hi = basis.sigma[i];
    if (hi > 0.0 && (hi - basis.sigma[i + 1]) / hi < 1e-6) basis.degenerate[i] = basis.degenerate[i + 1] = true;
  }

  basis.final_residual = 0.0;
  const double sigma1 = basis.sigma[0];
  for (std::size_t i = 0; i < n; ++i) {
    const double si = basis.sigma[i];
    if (!(si > 1e-8 * sigma1)) continue;
    double sq = 0.0;
    for (std::size_t k = 0; k < dh; ++k) {
      const double r = jv(i, k) - si * basis.U(i, k);
      sq += r * r;
    }
    basis.final_residual = std::max(basis.final_residual, std::sqrt(sq) / si);
  }
  return basis;
}

double geodesic_distance(const Tensor& u1, const Tensor& u2) {
  const Tensor theta = principal_angles(u1, u2);
  return norm(theta.data());
}

Projection project_onto_tangent(const Tensor& u, const LocalBasis& basis) {
  if (u.rank() != 1 || u.size() != basis.U.cols()) fail(ErrorCode::DimMismatch, "vector does not live in the tangent space's ambient space");
  Projection p{Tensor({u.size()}), Tensor({basis.U.rows()})};
  for (std::size_t i = 0; i < basis.U.rows(); ++i) {
    p.coeffs[i] = dot(u.data(), basis.U.row(i));
    for (std::size_t k = 0; k < u.size(); ++k) p.projected[k] += p.coeffs[i] * basis.U(i, k);
  }
  return p;
}

Tensor project_onto_latent(const Tensor& v, const LocalBasis& basis) {
  if (v.rank() != 1 || v.size() != basis.V.cols()) fail(ErrorCode::DimMismatch, "direction does not match the latent dimension");
  Tensor out({v.size()});
  for (std::size_t i = 0; i < basis.V.rows(); ++i) {
    const double c = dot(v.data(), basis.V.row(i));
    for (std::size_t k = 0; k < v.size(); ++k) out[k] += c * basis.V(i, k);
  }
  const double len = norm(out.data());
  if (!(len >= 1e-12)) fail(ErrorCode::ZeroProjection, "direction is orthogonal to the latent basis");
  return (1.0 / len) * out;
}

double vector_angle(std::span<const double> a, std::span<const double> b) {
  const double la = norm(a), lb = norm(b);
  if (!(la > 0.0) || !(lb > 0.0)) fail(ErrorCode::ZeroProjection, "angle with a zero vector");
  double diff = 0.0, sum = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double x = a[k] / la, y = b[k] / lb;
    diff += (x - y) * (x - y);
    sum += (x + y) * (x + y);
  }
  return 2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum));
}

TransportResult transport(const LocalBasis& src, const LocalBasis& dst, std::size_t i, const TransportOptions& options) {
  if (i >= src.n || i >= src.U.rows()) fail(ErrorCode::BadOptions, "direction index out of range");
  if (src.U.cols() != dst.U.cols() || src.V.cols() != dst.V.cols()) {
    fail(ErrorCode::DimMismatch, "source and destination bases have different ambient dimensions");
  }
  const Tensor u = src.U.row_tensor(i);
  Projection p = project_onto_tangent(u, dst);
  const double proj_len = norm(p.projected.data());
  if (!(proj_len >= 1e-12)) fail(ErrorCode::ZeroProjection, "tangent spaces are orthogonal for this direction");

  TransportResult result;
  result.v = Tensor({dst.V.cols()});
  for (std::size_t j = 0; j < dst.V.rows(); ++j) {
    double c = p.coeffs[j];
    if (options.inverse_sigma_weighting) {
      const double sj = dst.sigma[j];
      if (!(sj > 0.0)) fail(ErrorCode::ZeroProjection, "zero singular value in inverse weighting");
      c /= sj;
    }
    for (std::size_t k = 0; k < result.v.size(); ++k) result.v[k] += c * dst.V(j, k);
  }
  const double v_len = norm(result.v.data());
  if (!(v_len >= 1e-12)) fail(ErrorCode::ZeroProjection, "transported direction vanished");
  if (options.renormalize) result.v = (1.0 / v_len) * result.v;

  Tensor residual = u - p.projected;
  result.distortion_angle = std::atan2(norm(residual.data()), proj_len);
  result.latent_angle = vector_angle(src.V.row(i), result.v.data());
  result.u_projected = std::move(p.projected);
  result.coeffs = std::move(p.coeffs);
  return result;
}

Artifact basis_to_artifact(const LocalBasis& basis) {
  Artifact artifact;
  artifact.kind = "basis";
  Manifest& mf = artifact.manifest;
  mf.set("basis.t", basis.t);
  mf.set("basis.n", basis.n);
  mf.set("basis.x_hash", sha256_hex(tensor_bytes(basis.x)));
  mf.set_doubles("basis.sigma", basis.sigma.values());
  mf.set("basis.iterations_used", basis.iterations_used);
  mf.set("basis.converged", basis.converged);
  mf.set("basis.final_residual", basis.final_residual);
  mf.set("basis.subspace_change", basis.subspace_change);
  std::vector<std::size_t> flags;
  for (bool f : basis.degenerate) flags.push_back(f ? 1 : 0);
  mf.set_sizes("basis.degenerate", flags);
  artifact.add_blob("x", basis.x);
  artifact.add_blob("V", basis.V);
  artifact.add_blob("U", basis.U);
  artifact.add_blob("sigma", basis.sigma);
  artifact.add_blob("sigma_verified", basis.sigma_verified);
  return artifact;
}

LocalBasis basis_from_artifact(const Artifact& artifact) {
  if (artifact.kind != "basis") fail(ErrorCode::FormatError, "artifact is a '" + artifact.kind + "', not a basis");
  const Manifest& mf = artifact.manifest;
  LocalBasis b;
  b.t = mf.get_uint("basis.t");
  b.n = mf.get_uint("basis.n");
  b.iterations_used = mf.get_uint("basis.iterations_used");
  b.converged = mf.get_bool("basis.converged");
  b.final_residual = mf.get_double("basis.final_residual");
  b.subspace_change = mf.get_double("basis.subspace_change");
  for (std::size_t f : mf.get_sizes("basis.degenerate")) b.degenerate.push_back(f != 0);
  b.x = artifact.blob("x");
  b.V = artifact.blob("V");
  b.U = artifact.blob("U");
  b.sigma = artifact.blob("sigma");
  b.sigma_verified = artifact.blob("sigma_verified");
  if (b.V.rows() != b.n || b.U.rows() != b.n || b.sigma.size() != b.n || b.degenerate.size() != b.n) {
    fail(ErrorCode::FormatError, "basis blobs disagree with n");
  }
  return b;
}

}  // namespace latent_atlas
