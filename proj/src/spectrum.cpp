#include "latent_atlas/spectrum.hpp"

#include <cmath>
#include <numbers>

#include "latent_atlas/error.hpp"

namespace latent_atlas {

namespace {

struct Twiddles {
  std::vector<double> cos_table;
  std::vector<double> sin_table;
};

// Index by (k * n) mod N so every angle is reduced exactly before evaluation.
Twiddles make_twiddles(std::size_t n) {
  Twiddles tw{std::vector<double>(n), std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    tw.cos_table[i] = std::cos(angle);
    tw.sin_table[i] = std::sin(angle);
  }
  return tw;
}

void check_signal(const Tensor& signal) {
  if (signal.rank() != 1 && signal.rank() != 2) {
    fail(ErrorCode::DimMismatch, "power_spectrum: signal must be 1-D or 2-D");
  }
  for (std::size_t extent : signal.shape())
    if (extent < 2) fail(ErrorCode::EmptySignal, "power_spectrum: every dimension needs >= 2 samples");
}

Tensor power_1d(const Tensor& signal, std::size_t bins) {
  const std::size_t n = signal.size();
  const Twiddles tw = make_twiddles(n);
  Tensor out({bins});
  for (std::size_t k = 0; k < bins; ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t idx = (k * i) % n;
      re += signal[i] * tw.cos_table[idx];
      im -= signal[i] * tw.sin_table[idx];
    }
    out[k] = re * re + im * im;
  }
  return out;
}

Tensor power_2d_full(const Tensor& signal) {
  const std::size_t h = signal.shape()[0];
  const std::size_t w = signal.shape()[1];
  const Twiddles th = make_twiddles(h);
  const Twiddles tw = make_twiddles(w);
  // Row transforms first, then columns.
  std::vector<double> row_re(h * w), row_im(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t kx = 0; kx < w; ++kx) {
      double re = 0.0, im = 0.0;
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t idx = (kx * x) % w;
        re += signal(y, x) * tw.cos_table[idx];
        im -= signal(y, x) * tw.sin_table[idx];
      }
      row_re[y * w + kx] = re;
      row_im[y * w + kx] = im;
    }
  }
  Tensor out({h, w});
  for (std::size_t ky = 0; ky < h; ++ky) {
    for (std::size_t kx = 0; kx < w; ++kx) {
      double re = 0.0, im = 0.0;
      for (std::size_t y = 0; y < h; ++y) {
        const std::size_t idx = (ky * y) % h;
        const double c = th.cos_table[idx];
        const double s = th.sin_table[idx];
        const double a = row_re[y * w + kx];
        const double b = row_im[y * w + kx];
        // (a + ib)(c - is)
        re += a * c + b * s;
        im += b * c - a * s;
      }
      out(ky, kx) = re * re + im * im;
    }
  }
  return out;
}

}  // namespace

Tensor full_power_spectrum(const Tensor& signal) {
  check_signal(signal);
  if (signal.rank() == 1) return power_1d(signal, signal.size());
  return power_2d_full(signal);
}

Tensor power_spectrum(const Tensor& signal) {
  check_signal(signal);
  if (signal.rank() == 1) return power_1d(signal, signal.size() / 2 + 1);

  const std::size_t h = signal.shape()[0];
  const std::size_t w = signal.shape()[1];
  const Tensor full = power_2d_full(signal);
  const std::size_t bins = std::min(h, w) / 2 + 1;
  std::vector<double> total(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (std::size_t ky = 0; ky < h; ++ky) {
    const double fy = ky <= h / 2 ? static_cast<double>(ky) : static_cast<double>(ky) - static_cast<double>(h);
    for (std::size_t kx = 0; kx < w; ++kx) {
      const double fx = kx <= w / 2 ? static_cast<double>(kx) : static_cast<double>(kx) - static_cast<double>(w);
      const auto r = static_cast<std::size_t>(std::floor(std::sqrt(fx * fx + fy * fy) + 0.5));
      if (r >= bins) continue;
      total[r] += full(ky, kx);
      ++count[r];
    }
  }
  Tensor out({bins});
  for (std::size_t r = 0; r < bins; ++r) out[r] = count[r] ? total[r] / static_cast<double>(count[r]) : 0.0;
  return out;
}

}  // namespace latent_atlas
