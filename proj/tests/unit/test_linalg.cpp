#include <doctest.h>

#include <cmath>
#include <numbers>

#include "latent_atlas/error.hpp"
#include "latent_atlas/linalg.hpp"
#include "support.hpp"

using namespace latent_atlas;
using namespace latent_atlas::testing;

namespace {

constexpr double kPi = std::numbers::pi;

void check_sign_convention(const Tensor& rows) {
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    auto row = rows.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (std::abs(row[c]) > std::abs(row[best])) best = c;
    CHECK(row[best] >= 0.0);
  }
}

}  // namespace

TEST_CASE("tensor shape bookkeeping") {
  const Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(m.size() == 6);
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  CHECK(m(1, 2) == 6.0);
  const Tensor t = m.transposed();
  CHECK(t(2, 1) == 6.0);
  CHECK(t(0, 1) == 4.0);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), Error);
  CHECK_THROWS_AS(m.reshaped({4, 2}), Error);
}

TEST_CASE("seeded rng streams repeat") {
  SeededRng a(42), b(42), c(43);
  const Tensor xa = a.normal({100});
  const Tensor xb = b.normal({100});
  const Tensor xc = c.normal({100});
  CHECK(xa == xb);
  CHECK_FALSE(xa == xc);
  SeededRng big(7);
  double mean = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = big.normal();
    mean += z;
    sq += z * z;
  }
  mean /= n;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("qr_orthonormalize examples") {
  CHECK(qr_orthonormalize(Tensor::identity(3)) == Tensor::identity(3));
  const Tensor q = qr_orthonormalize(Tensor::matrix(2, 2, {2, 0, 0, 3}));
  CHECK(max_abs_diff(q, Tensor::identity(2)) == 0.0);

  SeededRng rng(1);
  const Tensor m = rng.normal({5, 20});
  const Tensor out = qr_orthonormalize(m);
  CHECK(row_orthonormality_error(out) < 1e-12);
  // Same row space: every input row is reproduced by its projection.
  const Tensor coeff = matmul_transposed(m, out);
  CHECK(max_abs_diff(matmul(coeff, out), m) < 1e-10);
  check_sign_convention(out);
  // Row-space angles from an orthonormal basis of m computed independently.
  Eigen::HouseholderQR<Mat> qr(to_eigen(m).transpose());
  const Mat basis = Mat(qr.householderQ()).leftCols(5).transpose();
  const Tensor angles = principal_angles(out, from_eigen(basis));
  for (double a : angles.data()) CHECK(a < 1e-10);
}

TEST_CASE("qr_orthonormalize is idempotent") {
  SeededRng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 2 + rng.index(30);
    const std::size_t k = 1 + rng.index(d);
    const Tensor once = qr_orthonormalize(rng.normal({k, d}));
    const Tensor twice = qr_orthonormalize(once);
    CHECK(max_abs_diff(once, twice) < 1e-12);
  }
}

TEST_CASE("qr_orthonormalize rejects dependent rows") {
  CHECK_THROWS_AS(qr_orthonormalize(Tensor::matrix(2, 3, {1, 2, 3, 2, 4, 6})), Error);
  try {
    qr_orthonormalize(Tensor::matrix(3, 2, {1, 0, 0, 1, 1, 1}));
    FAIL("expected RankDeficient");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RankDeficient);
  }
}

TEST_CASE("dense_svd examples") {
  Tensor diag = Tensor::zeros(3, 3);
  diag(0, 0) = 3;
  diag(1, 1) = 2;
  diag(2, 2) = 1;
  const SvdResult svd = dense_svd(diag);
  CHECK(svd.S == Tensor::vector({3, 2, 1}));
  CHECK(max_abs_diff(svd.Vt, Tensor::identity(3)) == 0.0);

  const SvdResult zero = dense_svd(Tensor::zeros(4, 3));
  for (double s : zero.S.data()) CHECK(s == 0.0);
}

TEST_CASE("dense_svd matches the Gram eigenvalue oracle") {
  SeededRng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t p = 1 + rng.index(12);
    const std::size_t q = 1 + rng.index(12);
    const Tensor m = rng.normal({p, q});
    const SvdResult svd = dense_svd(m);
    const std::size_t r = std::min(p, q);
    REQUIRE(svd.S.size() == r);

    Tensor us = svd.U;
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < r; ++j) us(i, j) *= svd.S[j];
    CHECK(frobenius_norm(matmul(us, svd.Vt) - m) / frobenius_norm(m) < 1e-9);
    CHECK(row_orthonormality_error(svd.Vt) < 1e-12);
    CHECK(row_orthonormality_error(svd.U.transposed()) < 1e-12);
    check_sign_convention(svd.Vt);
    for (std::size_t i = 0; i + 1 < r; ++i) CHECK(svd.S[i] >= svd.S[i + 1]);

    // Independent oracle: eigenvalues of the smaller Gram matrix.
    const Mat a = to_eigen(m);
    const Mat gram = p >= q ? Mat(a.transpose() * a) : Mat(a * a.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> eig(gram);
    const auto values = eig.eigenvalues();  // ascending
    for (std::size_t i = 0; i < r; ++i) {
      const double want = std::max(0.0, values(static_cast<Eigen::Index>(r - 1 - i)));
      CHECK(std::abs(svd.S[i] * svd.S[i] - want) < 1e-10 * std::max(1.0, values.maxCoeff()));
    }
  }
}

TEST_CASE("dense_svd singular values are orthogonally invariant") {
  SeededRng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t p = 2 + rng.index(10);
    const std::size_t q = 2 + rng.index(10);
    const Tensor m = rng.normal({p, q});
    const Mat left = random_orthogonal(rng, p);
    const Mat right = random_orthogonal(rng, q);
    const Tensor rotated = from_eigen(left * to_eigen(m) * right);
    const Tensor s1 = dense_svd(m).S;
    const Tensor s2 = dense_svd(rotated).S;
    CHECK(max_abs_diff(s1, s2) < 1e-9);
  }
}

TEST_CASE("principal_angles examples") {
  const Tensor e1 = Tensor::matrix(1, 3, {1, 0, 0});
  const Tensor e2 = Tensor::matrix(1, 3, {0, 1, 0});
  CHECK(principal_angles(e1, e2)[0] == doctest::Approx(kPi / 2).epsilon(1e-15));
  CHECK(principal_angles(e1, e1)[0] == 0.0);

  SeededRng rng(5);
  const Tensor a = random_subspace(rng, 3, 10);
  const Tensor b = random_subspace(rng, 3, 10);
  const Tensor angles = principal_angles(a, b);
  Eigen::JacobiSVD<Mat> svd(to_eigen(a) * to_eigen(b).transpose());
  const auto s = svd.singularValues();  // descending, so angles ascend
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(std::abs(angles[k] - std::acos(std::clamp(s(static_cast<Eigen::Index>(k)), 0.0, 1.0))) < 1e-10);
  }
}

TEST_CASE("principal_angles symmetric and orthogonally invariant") {
  SeededRng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 3 + rng.index(20);
    const std::size_t k1 = 1 + rng.index(d - 1);
    const std::size_t k2 = 1 + rng.index(d - 1);
    const Tensor a = random_subspace(rng, k1, d);
    const Tensor b = random_subspace(rng, k2, d);
    const Tensor ab = principal_angles(a, b);
    const Tensor ba = principal_angles(b, a);
    CHECK(max_abs_diff(ab, ba) < 1e-9);
    const Mat q = random_orthogonal(rng, d);
    const Tensor qa = from_eigen(to_eigen(a) * q.transpose());
    const Tensor qb = from_eigen(to_eigen(b) * q.transpose());
    CHECK(max_abs_diff(principal_angles(qa, qb), ab) < 1e-9);
    for (std::size_t i = 0; i < ab.size(); ++i) {
      CHECK(ab[i] >= 0.0);
      CHECK(ab[i] <= kPi / 2 + 1e-15);
      if (i > 0) CHECK(ab[i] >= ab[i - 1]);
    }
  }
}

TEST_CASE("principal_angles resolves nearly identical subspaces") {
  // arccos loses half the digits near 1; tiny rotations must still register.
  SeededRng rng(7);
  const Tensor a = random_subspace(rng, 2, 6);
  const double theta = 1e-9;
  Tensor b = a;
  const Tensor w = random_subspace(rng, 6, 6);
  // Rotate the first row towards a direction orthogonal to span(a).
  Tensor dir = w.row_tensor(0);
  for (std::size_t r = 0; r < 2; ++r) {
    const double c = dot(dir.data(), a.row(r));
    for (std::size_t k = 0; k < 6; ++k) dir[k] -= c * a(r, k);
  }
  dir = (1.0 / norm(dir.data())) * dir;
  for (std::size_t k = 0; k < 6; ++k) b(0, k) = std::cos(theta) * a(0, k) + std::sin(theta) * dir[k];
  const Tensor angles = principal_angles(a, b);
  CHECK(angles[1] == doctest::Approx(theta).epsilon(1e-6));
}

TEST_CASE("principal_angles rejects non-orthonormal input") {
  try {
    principal_angles(Tensor::matrix(1, 2, {2, 0}), Tensor::matrix(1, 2, {1, 0}));
    FAIL("expected NotOrthonormal");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotOrthonormal);
  }
}
