#include "latent_atlas/tensor.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "eigen_view.hpp"
#include "latent_atlas/error.hpp"

namespace latent_atlas {

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) fail(ErrorCode::DimMismatch, std::string(op) + ": shape mismatch");
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != element_count(shape_)) {
    fail(ErrorCode::DimMismatch, "tensor data size does not match shape");
  }
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

std::size_t Tensor::rows() const noexcept {
  if (shape_.empty()) return 0;
  return shape_.size() == 1 ? 1 : shape_[0];
}

std::size_t Tensor::cols() const noexcept {
  if (shape_.empty()) return 0;
  return shape_.size() == 1 ? shape_[0] : data_.size() / shape_[0];
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  return std::span<double>(data_).subspan(r * c, c);
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const double>(data_).subspan(r * c, c);
}

Tensor Tensor::row_tensor(std::size_t r) const {
  auto values = row(r);
  return Tensor::vector(std::vector<double>(values.begin(), values.end()));
}

void Tensor::set_row(std::size_t r, std::span<const double> values) {
  if (values.size() != cols()) fail(ErrorCode::DimMismatch, "set_row: length mismatch");
  std::copy(values.begin(), values.end(), row(r).begin());
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::transposed() const {
  const std::size_t r = rows(), c = cols();
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = data_[i * c + j];
  return out;
}

bool Tensor::all_finite() const noexcept {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorCode::DimMismatch, "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

double norm(std::span<const double> a) {
  // Scaled accumulation so tiny or huge vectors do not under/overflow.
  double scale = 0.0;
  for (double v : a) scale = std::max(scale, std::abs(v));
  if (scale == 0.0 || !std::isfinite(scale)) return scale;
  double s = 0.0;
  for (double v : a) {
    const double r = v / scale;
    s += r * r;
  }
  return scale * std::sqrt(s);
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "subtract");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor operator*(double s, const Tensor& a) {
  Tensor out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) fail(ErrorCode::DimMismatch, "matmul: inner dimension mismatch");
  Tensor out({a.rows(), b.cols()});
  as_matrix(out).noalias() = as_matrix(a) * as_matrix(b);
  return out;
}

Tensor matmul_transposed(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) fail(ErrorCode::DimMismatch, "matmul_transposed: dimension mismatch");
  Tensor out({a.rows(), b.rows()});
  as_matrix(out).noalias() = as_matrix(a) * as_matrix(b).transpose();
  return out;
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) return Tensor({0, 0});
  const std::size_t c = rows.front().size();
  Tensor out({rows.size(), c});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != c) fail(ErrorCode::DimMismatch, "stack_rows: ragged rows");
    out.set_row(i, rows[i].data());
  }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double frobenius_norm(const Tensor& a) { return norm(a.data()); }

double SeededRng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t SeededRng::index(std::size_t n) {
  if (n == 0) fail(ErrorCode::BadRange, "SeededRng::index: empty range");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t draw = engine_();
  while (draw >= limit) draw = engine_();
  return static_cast<std::size_t>(draw % bound);
}

double SeededRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller; 1 - uniform() lies in (0, 1] so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

Tensor SeededRng::normal(std::vector<std::size_t> shape) {
  Tensor out(std::move(shape));
  for (double& v : out.values()) v = normal();
  return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finalizer over the combined value.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace latent_atlas
