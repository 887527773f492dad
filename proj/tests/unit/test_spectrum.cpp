#include <doctest.h>

#include <cmath>
#include <numbers>

#include "latent_atlas/error.hpp"
#include "latent_atlas/spectrum.hpp"
#include "latent_atlas/tensor.hpp"

using namespace latent_atlas;

TEST_CASE("constant signal puts all energy at DC") {
  const Tensor p = power_spectrum(Tensor({8}, 1.5));
  REQUIRE(p.size() == 5);
  CHECK(p[0] == doctest::Approx(8 * 8 * 1.5 * 1.5));
  for (std::size_t k = 1; k < p.size(); ++k) CHECK(std::abs(p[k]) < 1e-20);
}

TEST_CASE("pure tone lands in its bin") {
  Tensor s({8});
  for (std::size_t k = 0; k < 8; ++k) s[k] = std::cos(2.0 * std::numbers::pi * 2.0 * k / 8.0);
  const Tensor p = power_spectrum(s);
  std::size_t peak = 0;
  for (std::size_t k = 0; k < p.size(); ++k)
    if (p[k] > p[peak]) peak = k;
  CHECK(peak == 2);
  for (std::size_t k = 0; k < p.size(); ++k)
    if (k != 2) CHECK(p[k] < 1e-20);
}

TEST_CASE("2-D pure tone lands in its radius bin") {
  Tensor s({8, 8});
  for (std::size_t r = 0; r < 8; ++r)
    for (std::size_t c = 0; c < 8; ++c) s(r, c) = std::cos(2.0 * std::numbers::pi * 3.0 * c / 8.0);
  const Tensor p = power_spectrum(s);
  REQUIRE(p.size() == 5);
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (k == 3)
      CHECK(p[k] > 1.0);
    else
      CHECK(p[k] < 1e-20);
  }
}

TEST_CASE("Parseval on the full spectrum") {
  SeededRng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor s = rng.normal({16});
    const double energy = squared_norm(s.data());
    double total = 0.0;
    const Tensor out_0 = full_power_spectrum(s);
    for (double v : out_0.data()) total += v;
    CHECK(std::abs(total - 16.0 * energy) < 1e-9 * 16.0 * energy);
  }
  const Tensor img = rng.normal({6, 10});
  double total = 0.0;
  const Tensor out_1 = full_power_spectrum(img);
  for (double v : out_1.data()) total += v;
  CHECK(std::abs(total - 60.0 * squared_norm(img.data())) < 1e-9 * total);
}

TEST_CASE("negation leaves the spectrum unchanged") {
  SeededRng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor s = rng.normal({4 + rng.index(6), 4 + rng.index(6)});
    CHECK(power_spectrum(s) == power_spectrum(-1.0 * s));
  }
}

TEST_CASE("short signals are rejected") {
  try {
    power_spectrum(Tensor({1}));
    FAIL("expected EmptySignal");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptySignal);
  }
  CHECK_THROWS_AS(power_spectrum(Tensor({1, 5})), Error);
}
