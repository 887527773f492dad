#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace latent_atlas {

/// Dense row-major array of doubles. Rank 1 holds vectors (x, h, u, v),
/// rank 2 holds stacks of row vectors (bases, batches, Jacobians).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor zeros(std::size_t n) { return Tensor({n}); }
  static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }
  static Tensor identity(std::size_t n);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  /// Rows/cols treat a rank-1 tensor as a single row.
  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;
  Tensor row_tensor(std::size_t r) const;
  void set_row(std::size_t r, std::span<const double> values);

  Tensor reshaped(std::vector<std::size_t> shape) const;
  Tensor transposed() const;
  bool all_finite() const noexcept;

  bool operator==(const Tensor& other) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
double squared_norm(std::span<const double> a);
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_transposed(const Tensor& a, const Tensor& b);  // a * b^T
Tensor stack_rows(const std::vector<Tensor>& rows);
double max_abs_diff(const Tensor& a, const Tensor& b);
double frobenius_norm(const Tensor& a);

/// Seeded pseudo-random source whose stream depends only on the seed: the
/// engine is std::mt19937_64 and every derived distribution is computed here
/// rather than through the implementation-defined <random> distributions.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  double normal();
  Tensor normal(std::vector<std::size_t> shape);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Derive an independent stream seed from a base seed and a salt.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace latent_atlas
