#include <doctest.h>

#include <cmath>
#include <numbers>

#include "latent_atlas/container.hpp"
#include "latent_atlas/error.hpp"
#include "latent_atlas/geometry.hpp"
#include "support.hpp"

using namespace latent_atlas;
using namespace latent_atlas::testing;

namespace {

constexpr double kPi = std::numbers::pi;

// Bottleneck h = diag(3, 2, 1) x + const, so J = diag(3, 2, 1).
DenoiserModel diagonal_model() {
  DenoiserConfig config;
  config.input_dim = 3;
  config.hidden = {3};
  config.bottleneck_index = 0;
  config.time_embed_dim = 4;
  config.timesteps = 10;
  config.activation = Activation::identity;
  DenoiserModel model = make_denoiser(config, 0);
  Tensor& w = model.layers[0].weight;
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) w(r, c) = r == c ? 3.0 - static_cast<double>(r) : 0.0;
  return model;
}

LocalBasis synthetic_basis(SeededRng& rng, std::size_t n, std::size_t d, std::size_t dh) {
  LocalBasis b;
  b.n = n;
  b.V = random_subspace(rng, n, d);
  b.U = random_subspace(rng, n, dh);
  b.sigma = Tensor({n});
  for (std::size_t i = 0; i < n; ++i) b.sigma[i] = static_cast<double>(n - i);
  b.sigma_verified = b.sigma;
  b.degenerate.assign(n, false);
  b.x = Tensor({d});
  return b;
}

// Top-n right singular vectors and values of J from an independent SVD.
struct Oracle {
  Tensor V;
  std::vector<double> sigma;
};

Oracle oracle(const Tensor& jac, std::size_t n) {
  Eigen::JacobiSVD<Mat> svd(to_eigen(jac), Eigen::ComputeThinV);
  Oracle o;
  o.V = from_eigen(svd.matrixV().leftCols(static_cast<Eigen::Index>(n)).transpose());
  for (std::size_t i = 0; i < n; ++i) o.sigma.push_back(svd.singularValues()(static_cast<Eigen::Index>(i)));
  return o;
}

void check_invariants(const LocalBasis& b, const DenoiserModel& model) {
  CHECK(row_orthonormality_error(b.V) < 1e-4);
  CHECK(row_orthonormality_error(b.U) < 1e-4);
  for (std::size_t i = 0; i + 1 < b.n; ++i) CHECK(b.sigma[i] >= b.sigma[i + 1]);
  const Tensor jv = jvp_encode(model, b.x, b.t, b.V).u;
  for (std::size_t i = 0; i < b.n; ++i) {
    if (b.sigma[i] < 1e-8 * b.sigma[0]) continue;
    const Tensor r = jv.row_tensor(i) - b.sigma[i] * b.U.row_tensor(i);
    CHECK(norm(r.data()) / b.sigma[i] <= 1e-2);
  }
}

}  // namespace

TEST_CASE("diagonal Jacobian gives axis bases") {
  const DenoiserModel model = diagonal_model();
  IterationOptions opt;
  opt.n = 3;
  opt.min_iter = 2;
  const LocalBasis b = local_basis(model, Tensor::vector({0.3, -0.2, 0.1}), 5, opt);
  CHECK(b.converged);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(b.sigma[i] == doctest::Approx(3.0 - static_cast<double>(i)).epsilon(1e-10));
    CHECK(b.sigma_verified[i] == doctest::Approx(3.0 - static_cast<double>(i)).epsilon(1e-10));
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(b.V(i, k) - (i == k ? 1.0 : 0.0)) < 1e-8);
  }
  check_invariants(b, model);

  opt.n = 2;
  opt.convergence_threshold = 1e-12;  // sigma error is quadratic in the subspace error
  opt.max_iter = 200;
  const LocalBasis top = local_basis(model, Tensor::vector({0.3, -0.2, 0.1}), 5, opt);
  CHECK(top.sigma[0] == doctest::Approx(3.0).epsilon(1e-10));
  CHECK(top.sigma[1] == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("dense Jacobian equals stacked jvps") {
  const DenoiserModel model = small_model(2, 5);
  SeededRng rng(1);
  const Tensor x = rng.normal({5});
  const Tensor jac = dense_jacobian(model, x, 8);
  REQUIRE(jac.rows() == 12);
  REQUIRE(jac.cols() == 5);
  const Tensor v = rng.normal({5});
  const Tensor u = jvp_encode(model, x, 8, v).u;
  CHECK(max_abs_diff(matmul(jac, v.reshaped({5, 1})).reshaped({12}), u) < 1e-13);
}

TEST_CASE("subspace iteration matches the dense oracle on random models") {
  SeededRng rng(2);
  int compared = 0;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const DenoiserModel model = small_model(seed, 6, {20, 16, 20});
    const Tensor x = rng.normal({6});
    const std::size_t t = rng.index(51);
    IterationOptions opt;
    opt.n = 3;
    opt.chunk_size = 2;
    opt.max_iter = 500;
    opt.convergence_threshold = 1e-10;
    opt.seed = seed;
    const LocalBasis b = local_basis(model, x, t, opt);
    const Oracle o = oracle(dense_jacobian(model, x, t), 3);
    CAPTURE(seed);
    if (!b.converged) continue;  // a near-degenerate gap; nothing to compare
    ++compared;
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(relative_error(b.sigma[i], o.sigma[i]) < 1e-6);
      CHECK(relative_error(b.sigma_verified[i], o.sigma[i]) < 1e-6);
    }
    CHECK(geodesic_distance(b.V, o.V) < 1e-5);
    check_invariants(b, model);
  }
  CHECK(compared >= 5);
}

TEST_CASE("local_basis determinism and option checks") {
  const DenoiserModel model = small_model(3, 4);
  const Tensor x = Tensor::vector({0.1, 0.2, -0.3, 0.4});
  IterationOptions opt;
  opt.n = 2;
  const LocalBasis a = local_basis(model, x, 10, opt);
  const LocalBasis b = local_basis(model, x, 10, opt);
  CHECK(a.V == b.V);
  CHECK(a.U == b.U);
  CHECK(a.sigma == b.sigma);
  for (std::size_t i = 0; i < a.n; ++i) {
    auto row = a.V.row(i);
    std::size_t best = 0;
    for (std::size_t k = 1; k < row.size(); ++k)
      if (std::abs(row[k]) > std::abs(row[best])) best = k;
    CHECK(row[best] >= 0.0);
  }

  opt.n = 5;
  try {
    local_basis(model, x, 10, opt);
    FAIL("expected BadOptions");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BadOptions);
    CHECK(e.detail() == "n<=min(d,D_h)");
  }
  opt.n = 2;
  opt.min_iter = 5;
  opt.max_iter = 4;
  CHECK_THROWS_AS(local_basis(model, x, 10, opt), Error);
}

TEST_CASE("progress callback sees every iteration") {
  const DenoiserModel model = small_model(4, 4);
  IterationOptions opt;
  opt.n = 2;
  std::size_t calls = 0;
  const LocalBasis b = local_basis(model, Tensor({4}, 0.1), 3, opt, [&](std::size_t, std::size_t, double) { ++calls; });
  CHECK(calls == b.iterations_used);
}

TEST_CASE("pullback identity") {
  SeededRng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const DenoiserModel model = small_model(static_cast<std::uint64_t>(trial), 5);
    const Tensor x = rng.normal({5});
    const Tensor v = rng.normal({5});
    const std::size_t t = rng.index(51);
    const double p = pullback_norm_sq(model, x, t, v);
    const double via_jvp = squared_norm(jvp_encode(model, x, t, v).u.data());
    CHECK(std::abs(p - via_jvp) <= 1e-12 * via_jvp);
    const Mat j = to_eigen(dense_jacobian(model, x, t));
    const Eigen::VectorXd ev = Eigen::Map<const Eigen::VectorXd>(v.data().data(), 5);
    const double quad = ev.dot((j.transpose() * j) * ev);
    CHECK(relative_error(p, quad) < 1e-9);
  }
}

TEST_CASE("geodesic distance axioms") {
  SeededRng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 4 + rng.index(30);
    const std::size_t k = 1 + rng.index(std::min<std::size_t>(d - 1, 8));
    const Tensor a = random_subspace(rng, k, d);
    const Tensor b = random_subspace(rng, k, d);
    CHECK(geodesic_distance(a, a) < 1e-9);
    const double ab = geodesic_distance(a, b);
    CHECK(std::abs(ab - geodesic_distance(b, a)) < 1e-9);
    CHECK(ab >= 0.0);
    CHECK(ab <= std::sqrt(static_cast<double>(k)) * kPi / 2 + 1e-9);
    const Mat q = random_orthogonal(rng, d);
    const Tensor qa = from_eigen(to_eigen(a) * q.transpose());
    const Tensor qb = from_eigen(to_eigen(b) * q.transpose());
    CHECK(std::abs(geodesic_distance(qa, qb) - ab) < 1e-9);

    // Clamped arccos of the overlap singular values, evaluated independently.
    Eigen::JacobiSVD<Mat> svd(to_eigen(a) * to_eigen(b).transpose());
    double sq = 0.0;
    for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) {
      const double th = std::acos(std::clamp(svd.singularValues()(i), -1.0, 1.0));
      sq += th * th;
    }
    CHECK(std::abs(std::sqrt(sq) - ab) < 1e-9);
  }
}

TEST_CASE("projection onto the tangent space") {
  SeededRng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const LocalBasis b = synthetic_basis(rng, 3, 5, 9);
    const Tensor u = rng.normal({9});
    const Projection p = project_onto_tangent(u, b);
    const Tensor rest = u - p.projected;
    const double lhs = squared_norm(u.data());
    const double rhs = squared_norm(p.projected.data()) + squared_norm(rest.data());
    CHECK(std::abs(lhs - rhs) <= 1e-10 * lhs);
    for (std::size_t i = 0; i < 3; ++i) {
      double c = 0.0;
      for (std::size_t k = 0; k < 9; ++k) c += u[k] * b.U(i, k);
      CHECK(std::abs(p.coeffs[i] - c) < 1e-10);
    }
  }
}

TEST_CASE("projection onto the latent basis") {
  SeededRng rng(8);
  const LocalBasis b = synthetic_basis(rng, 2, 6, 8);
  const Tensor v = project_onto_latent(rng.normal({6}), b);
  CHECK(std::abs(norm(v.data()) - 1.0) < 1e-12);
  // Lies in span(V): projecting again changes nothing.
  CHECK(max_abs_diff(project_onto_latent(v, b), v) < 1e-12);

  LocalBasis axis;
  axis.n = 1;
  axis.V = Tensor::matrix(1, 3, {1, 0, 0});
  try {
    project_onto_latent(Tensor::vector({0, 1, 0}), axis);
    FAIL("expected ZeroProjection");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroProjection);
  }
}

TEST_CASE("transport onto itself is the identity") {
  SeededRng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const LocalBasis b = synthetic_basis(rng, 4, 7, 10);
    for (std::size_t i = 0; i < 4; ++i) {
      const TransportResult r = transport(b, b, i);
      CHECK(r.distortion_angle < 1e-8);
      const double a = vector_angle(r.v.data(), b.V.row(i));
      CHECK(std::min(a, kPi - a) < 1e-8);
    }
  }
}

TEST_CASE("transport into a rotated copy of the tangent space has no distortion") {
  SeededRng rng(10);
  const LocalBasis src = synthetic_basis(rng, 3, 5, 8);
  LocalBasis dst = synthetic_basis(rng, 3, 5, 8);
  const Mat rot = random_orthogonal(rng, 3);
  dst.U = from_eigen(rot * to_eigen(src.U));
  for (std::size_t i = 0; i < 3; ++i) CHECK(transport(src, dst, i).distortion_angle < 1e-8);
}

TEST_CASE("transport matches a dense reconstruction") {
  SeededRng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const LocalBasis src = synthetic_basis(rng, 3, 6, 10);
    const LocalBasis dst = synthetic_basis(rng, 3, 6, 10);
    const std::size_t i = rng.index(3);
    for (bool inverse : {false, true}) {
      for (bool renorm : {true, false}) {
        TransportOptions opt;
        opt.inverse_sigma_weighting = inverse;
        opt.renormalize = renorm;
        const TransportResult r = transport(src, dst, i, opt);
        const Eigen::VectorXd u = to_eigen(src.U).row(static_cast<Eigen::Index>(i)).transpose();
        const Eigen::VectorXd c = to_eigen(dst.U) * u;
        Eigen::VectorXd w = c;
        if (inverse)
          for (Eigen::Index j = 0; j < w.size(); ++j) w(j) /= dst.sigma[static_cast<std::size_t>(j)];
        Eigen::VectorXd v = to_eigen(dst.V).transpose() * w;
        if (renorm) v.normalize();
        for (Eigen::Index j = 0; j < c.size(); ++j) CHECK(std::abs(r.coeffs[static_cast<std::size_t>(j)] - c(j)) < 1e-10);
        for (Eigen::Index k = 0; k < v.size(); ++k) CHECK(std::abs(r.v[static_cast<std::size_t>(k)] - v(k)) < 1e-10);
        const Eigen::VectorXd up = to_eigen(dst.U).transpose() * c;
        const double want = std::atan2((u - up).norm(), up.norm());
        CHECK(std::abs(r.distortion_angle - want) < 1e-10);
      }
    }
  }
}

TEST_CASE("transport between orthogonal tangent spaces fails") {
  LocalBasis src, dst;
  src.n = dst.n = 1;
  src.V = dst.V = Tensor::matrix(1, 2, {1, 0});
  src.U = Tensor::matrix(1, 3, {1, 0, 0});
  dst.U = Tensor::matrix(1, 3, {0, 0, 1});
  src.sigma = dst.sigma = Tensor::vector({1.0});
  try {
    transport(src, dst, 0);
    FAIL("expected ZeroProjection");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroProjection);
  }
}

TEST_CASE("distortion is zero exactly when u lies in the destination span") {
  SeededRng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const LocalBasis src = synthetic_basis(rng, 2, 4, 6);
    LocalBasis dst = synthetic_basis(rng, 2, 4, 6);
    CHECK(transport(src, dst, 0).distortion_angle > 1e-6);
    // Put src.U row 0 inside span(dst.U).
    Tensor u = rng.normal({2});
    Tensor rows = dst.U;
    const Tensor mixed = matmul(u.reshaped({1, 2}), rows);
    dst.U.set_row(0, (1.0 / norm(mixed.data()) * mixed).data());
    dst.U.set_row(1, src.U.row(0));
    dst.U = qr_orthonormalize(dst.U);
    CHECK(transport(src, dst, 0).distortion_angle < 1e-8);
  }
}

TEST_CASE("vector angle") {
  CHECK(vector_angle(std::vector<double>{1, 0}, std::vector<double>{0, 2}) == doctest::Approx(kPi / 2));
  CHECK(vector_angle(std::vector<double>{1, 1}, std::vector<double>{2, 2}) == 0.0);
  CHECK(vector_angle(std::vector<double>{1, 0}, std::vector<double>{-1, 0}) == doctest::Approx(kPi));
}

TEST_CASE("basis artifacts round-trip") {
  const DenoiserModel model = small_model(13, 4);
  IterationOptions opt;
  opt.n = 3;
  const LocalBasis b = local_basis(model, Tensor::vector({0.5, -0.5, 0.2, 0.0}), 20, opt);
  const LocalBasis back = basis_from_artifact(parse_artifact(serialize_artifact(basis_to_artifact(b))));
  CHECK(back.V == b.V);
  CHECK(back.U == b.U);
  CHECK(back.sigma == b.sigma);
  CHECK(back.sigma_verified == b.sigma_verified);
  CHECK(back.x == b.x);
  CHECK(back.t == b.t);
  CHECK(back.converged == b.converged);
  CHECK(back.iterations_used == b.iterations_used);
  CHECK(back.degenerate == b.degenerate);
  CHECK(back.final_residual == b.final_residual);
}
