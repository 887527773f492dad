#pragma once

// Generators and small fixtures shared by the unit suites.

#include <Eigen/Dense>

#include "latent_atlas/denoiser.hpp"
#include "latent_atlas/linalg.hpp"
#include "latent_atlas/schedule.hpp"
#include "latent_atlas/tensor.hpp"

namespace latent_atlas::testing {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Mat to_eigen(const Tensor& t) {
  Mat m(t.rows(), t.cols());
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m(r, c) = t.data()[r * t.cols() + c];
  return m;
}

inline Tensor from_eigen(const Mat& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) t(r, c) = m(r, c);
  return t;
}

// Haar-ish random orthogonal matrix via Householder QR of a Gaussian matrix.
inline Mat random_orthogonal(SeededRng& rng, std::size_t n) {
  const Mat g = to_eigen(rng.normal({n, n}));
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ();
  return q;
}

// k orthonormal rows spanning a random subspace of R^d.
inline Tensor random_subspace(SeededRng& rng, std::size_t k, std::size_t d) {
  const Mat q = random_orthogonal(rng, d);
  return from_eigen(q.topRows(k));
}

inline Tensor random_unit(SeededRng& rng, std::size_t d) {
  Tensor v = rng.normal({d});
  return (1.0 / norm(v.data())) * v;
}

inline DenoiserModel small_model(std::uint64_t seed, std::size_t d = 3, std::vector<std::size_t> hidden = {16, 12, 16},
                                 Activation activation = Activation::silu, std::size_t timesteps = 50) {
  DenoiserConfig config;
  config.input_dim = d;
  config.hidden = std::move(hidden);
  config.bottleneck_index = 1;
  config.time_embed_dim = 8;
  config.timesteps = timesteps;
  config.activation = activation;
  return make_denoiser(config, seed);
}

inline double relative_error(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

}  // namespace latent_atlas::testing
