#pragma once

#include "latent_atlas/tensor.hpp"

namespace latent_atlas {

/// Orthonormalize the rows of a k x d matrix (k <= d) by Gram-Schmidt with
/// re-orthogonalization. Each output row is sign-normalized so that its
/// largest-magnitude entry is non-negative.
/// Throws RankDeficient when the smallest R diagonal falls below
/// 1e-10 times the largest.
Tensor qr_orthonormalize(const Tensor& m);

/// Same factorization without the sign normalization: row i keeps the sign
/// of its projection onto the i-th input row (positive R diagonal).
Tensor orthonormalize_rows_keep_sign(const Tensor& m);

/// Flip each row so its largest-magnitude entry (first on ties) is >= 0.
/// Returns the applied signs.
std::vector<double> normalize_row_signs(Tensor& m);

struct SvdResult {
  Tensor U;   // p x r, orthonormal columns
  Tensor S;   // r, non-increasing
  Tensor Vt;  // r x q, orthonormal rows
};

/// Thin SVD by one-sided Jacobi rotations, r = min(p, q). Vt rows follow the
/// qr_orthonormalize sign convention; U columns are flipped to match.
SvdResult dense_svd(const Tensor& m);

/// Max-norm deviation of the row Gram matrix from the identity.
double row_orthonormality_error(const Tensor& rows);

/// Principal angles between the row spaces of two orthonormal-row matrices,
/// in non-decreasing order, min(k1, k2) of them. Small angles come from the
/// sines of the projection residual, large ones from the overlap cosines.
Tensor principal_angles(const Tensor& u1, const Tensor& u2);

}  // namespace latent_atlas
