#pragma once

#include "latent_atlas/tensor.hpp"

namespace latent_atlas {

/// Squared DFT magnitudes by direct summation.
///   1-D length L: bins 0..floor(L/2).
///   2-D H x W: radially averaged over integer radius bins
///   0..floor(min(H, W)/2), where frequency (fy, fx) in signed form falls in
///   bin floor(sqrt(fx^2 + fy^2) + 0.5). Frequencies past the last bin are
///   dropped.
/// Throws EmptySignal if any dimension is < 2.
Tensor power_spectrum(const Tensor& signal);

/// Unaveraged |X_k|^2 over every frequency (L values, or H x W).
/// Parseval: the sum equals N * sum(signal^2).
Tensor full_power_spectrum(const Tensor& signal);

}  // namespace latent_atlas
