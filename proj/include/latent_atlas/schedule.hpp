#pragma once

#include <cstddef>

#include "latent_atlas/tensor.hpp"

namespace latent_atlas {

/// Forward-process noise tables, indexed by timestep t = 1..T.
/// betas[t-1] = beta_t, alpha_bars[t-1] = prod_{s<=t} (1 - beta_s).
struct NoiseSchedule {
  std::size_t T = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  Tensor betas;
  Tensor alpha_bars;

  /// alpha_bar at t, with alpha_bar(0) = 1.
  double alpha_bar(std::size_t t) const;
  double beta(std::size_t t) const;
};

/// Betas linearly spaced from beta_start (t=1) to beta_end (t=T).
/// Throws BadRange unless 0 < beta_start <= beta_end < 1 and T >= 1.
NoiseSchedule make_linear_schedule(std::size_t T = 1000, double beta_start = 1e-4,
                                   double beta_end = 0.02);

}  // namespace latent_atlas
