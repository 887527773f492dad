#include "latent_atlas/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "latent_atlas/error.hpp"

namespace latent_atlas {

namespace {

constexpr double kRankTolerance = 1e-10;
constexpr double kJacobiTolerance = 1e-15;
constexpr int kMaxJacobiSweeps = 80;
constexpr double kOrthonormalTolerance = 1e-6;

// Rows of m orthonormalized by two-pass modified Gram-Schmidt. Returns the
// R diagonal through `diag`.
Tensor gram_schmidt_rows(const Tensor& m, std::vector<double>& diag) {
  const std::size_t k = m.rows();
  const std::size_t d = m.cols();
  if (k > d) fail(ErrorCode::RankDeficient, "more rows than the ambient dimension");
  Tensor q = m.rank() == 1 ? m.reshaped({1, d}) : m;
  diag.assign(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    auto qi = q.row(i);
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t j = 0; j < i; ++j) {
        auto qj = q.row(j);
        const double c = dot(qi, qj);
        for (std::size_t c_idx = 0; c_idx < d; ++c_idx) qi[c_idx] -= c * qj[c_idx];
      }
    }
    const double r = norm(qi);
    diag[i] = r;
    if (r > 0.0)
      for (double& v : qi) v /= r;
  }
  return q;
}

void check_rank(const std::vector<double>& diag) {
  if (diag.empty()) return;
  const double largest = *std::max_element(diag.begin(), diag.end());
  const double smallest = *std::min_element(diag.begin(), diag.end());
  if (!(largest > 0.0) || smallest < kRankTolerance * largest) {
    fail(ErrorCode::RankDeficient, "rows are numerically linearly dependent");
  }
}

// One-sided Jacobi on the columns of a tall p x q matrix (p >= q).
SvdResult jacobi_svd_tall(const Tensor& a) {
  const std::size_t p = a.rows();
  const std::size_t q = a.cols();
  // Column-major working copies: g[j] is column j of A, v[j] column j of V.
  std::vector<std::vector<double>> g(q, std::vector<double>(p));
  std::vector<std::vector<double>> v(q, std::vector<double>(q, 0.0));
  for (std::size_t j = 0; j < q; ++j) {
    for (std::size_t i = 0; i < p; ++i) g[j][i] = a(i, j);
    v[j][j] = 1.0;
  }

  auto rotate = [](std::vector<double>& x, std::vector<double>& y, double c, double s) {
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double xk = x[k];
      const double yk = y[k];
      x[k] = c * xk - s * yk;
      y[k] = s * xk + c * yk;
    }
  };

  bool rotated = true;
  for (int sweep = 0; sweep < kMaxJacobiSweeps && rotated; ++sweep) {
    rotated = false;
    for (std::size_t i = 0; i + 1 < q; ++i) {
      for (std::size_t j = i + 1; j < q; ++j) {
        const double alpha = dot(g[i], g[i]);
        const double beta = dot(g[j], g[j]);
        const double gamma = dot(g[i], g[j]);
        if (gamma == 0.0 || std::abs(gamma) <= kJacobiTolerance * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double sign = zeta >= 0.0 ? 1.0 : -1.0;
        const double t = std::abs(zeta) > 1e150
                             ? 1.0 / (2.0 * zeta)
                             : sign / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        rotate(g[i], g[j], c, s);
        rotate(v[i], v[j], c, s);
      }
    }
  }
  if (rotated) fail(ErrorCode::ConvergenceFailure, "Jacobi SVD exceeded its sweep limit");

  std::vector<double> sigma(q);
  for (std::size_t j = 0; j < q; ++j) sigma[j] = norm(g[j]);
  std::vector<std::size_t> order(q);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  SvdResult out{Tensor({p, q}), Tensor({q}), Tensor({q, q})};
  std::vector<bool> filled(q, false);
  for (std::size_t r = 0; r < q; ++r) {
    const std::size_t j = order[r];
    out.S[r] = sigma[j];
    for (std::size_t k = 0; k < q; ++k) out.Vt(r, k) = v[j][k];
    if (sigma[j] > 0.0 && std::isnormal(sigma[j])) {
      for (std::size_t i = 0; i < p; ++i) out.U(i, r) = g[j][i] / sigma[j];
      filled[r] = true;
    }
  }

  // Zero singular values: complete U with an orthonormal complement.
  for (std::size_t r = 0; r < q; ++r) {
    if (filled[r]) continue;
    out.S[r] = 0.0;
    for (std::size_t e = 0; e < p; ++e) {
      std::vector<double> cand(p, 0.0);
      cand[e] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t c = 0; c < q; ++c) {
          if (!filled[c]) continue;
          double proj = 0.0;
          for (std::size_t i = 0; i < p; ++i) proj += cand[i] * out.U(i, c);
          for (std::size_t i = 0; i < p; ++i) cand[i] -= proj * out.U(i, c);
        }
      }
      const double nrm = norm(cand);
      if (nrm > 0.5) {
        for (std::size_t i = 0; i < p; ++i) out.U(i, r) = cand[i] / nrm;
        filled[r] = true;
        break;
      }
    }
  }
  return out;
}

}  // namespace

Tensor qr_orthonormalize(const Tensor& m) {
  std::vector<double> diag;
  Tensor q = gram_schmidt_rows(m, diag);
  check_rank(diag);
  normalize_row_signs(q);
  return q;
}

Tensor orthonormalize_rows_keep_sign(const Tensor& m) {
  std::vector<double> diag;
  Tensor q = gram_schmidt_rows(m, diag);
  check_rank(diag);
  return q;
}

std::vector<double> normalize_row_signs(Tensor& m) {
  std::vector<double> signs(m.rows(), 1.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (std::abs(row[c]) > std::abs(row[best])) best = c;
    if (!row.empty() && row[best] < 0.0) {
      for (double& v : row) v = -v;
      signs[r] = -1.0;
    }
  }
  return signs;
}

SvdResult dense_svd(const Tensor& m) {
  if (m.empty()) fail(ErrorCode::DimMismatch, "dense_svd: empty matrix");
  if (!m.all_finite()) fail(ErrorCode::BadRange, "dense_svd: non-finite entries");
  const Tensor a = m.rank() == 1 ? m.reshaped({1, m.size()}) : m;
  SvdResult out;
  if (a.rows() >= a.cols()) {
    out = jacobi_svd_tall(a);
  } else {
    SvdResult t = jacobi_svd_tall(a.transposed());
    out.U = t.Vt.transposed();
    out.S = std::move(t.S);
    out.Vt = t.U.transposed();
  }
  const auto signs = normalize_row_signs(out.Vt);
  for (std::size_t r = 0; r < signs.size(); ++r) {
    if (signs[r] > 0.0) continue;
    for (std::size_t i = 0; i < out.U.rows(); ++i) out.U(i, r) = -out.U(i, r);
  }
  return out;
}

double row_orthonormality_error(const Tensor& rows) {
  const Tensor gram = matmul_transposed(rows, rows);
  double worst = 0.0;
  for (std::size_t i = 0; i < gram.rows(); ++i)
    for (std::size_t j = 0; j < gram.cols(); ++j)
      worst = std::max(worst, std::abs(gram(i, j) - (i == j ? 1.0 : 0.0)));
  return worst;
}

Tensor principal_angles(const Tensor& u1_in, const Tensor& u2_in) {
  const Tensor u1 = u1_in.rank() == 1 ? u1_in.reshaped({1, u1_in.size()}) : u1_in;
  const Tensor u2 = u2_in.rank() == 1 ? u2_in.reshaped({1, u2_in.size()}) : u2_in;
  if (u1.cols() != u2.cols()) fail(ErrorCode::DimMismatch, "principal_angles: ambient dimension mismatch");
  if (row_orthonormality_error(u1) > kOrthonormalTolerance ||
      row_orthonormality_error(u2) > kOrthonormalTolerance) {
    fail(ErrorCode::NotOrthonormal, "principal_angles: inputs must have orthonormal rows");
  }
  const Tensor& small = u1.rows() <= u2.rows() ? u1 : u2;
  const Tensor& large = u1.rows() <= u2.rows() ? u2 : u1;
  const std::size_t k = small.rows();

  const Tensor overlap = matmul_transposed(small, large);
  const Tensor cosines = dense_svd(overlap).S;
  const Tensor residual = small - matmul(overlap, large);
  const Tensor sines = dense_svd(residual).S;  // descending

  Tensor angles({k});
  for (std::size_t i = 0; i < k; ++i) {
    const double c = std::clamp(cosines[i], 0.0, 1.0);
    const double s = std::clamp(sines[k - 1 - i], 0.0, 1.0);
    angles[i] = c * c >= 0.5 ? std::asin(s) : std::acos(c);
  }
  // Mixed branches can leave rounding-level inversions.
  for (std::size_t i = 1; i < k; ++i) angles[i] = std::max(angles[i], angles[i - 1]);
  return angles;
}

}  // namespace latent_atlas
