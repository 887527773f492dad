#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "latent_atlas/container.hpp"
#include "latent_atlas/denoiser.hpp"
#include "latent_atlas/geometry.hpp"
#include "latent_atlas/schedule.hpp"

namespace latent_atlas {

/// Rectangular table of finite scalars with a provenance manifest.
struct AnalysisTable {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  Manifest provenance;

  /// Throws BadOptions on a width mismatch or a non-finite value.
  void add_row(std::vector<double> row);
  std::size_t column_index(std::string_view column) const;
  std::vector<double> column(std::string_view column) const;
};

/// One header line, then one line per row; values use round-trip precision.
std::string table_to_csv(const AnalysisTable& table);
AnalysisTable table_from_csv(std::string name, std::string_view csv);

/// Writes <dir>/<name>.csv and the provenance sidecar <dir>/<name>.manifest.
/// Returns the csv path.
std::filesystem::path write_table(const std::filesystem::path& dir, const AnalysisTable& table);

/// Fraction of non-DC spectral energy below the median frequency for a
/// min-max normalized copy of v. grid empty means 1-D; {H, W} means a
/// radially averaged 2-D spectrum. A flat vector counts as all low frequency.
double low_frequency_fraction(const Tensor& v, const std::vector<std::size_t>& grid);

/// Power spectrum of the min-max normalized v, checked against Parseval.
Tensor normalized_power_spectrum(const Tensor& v, const std::vector<std::size_t>& grid);

/// Columns: t, i, low_frequency_fraction, p0..pB (spectrum bins).
/// Throws ShapeUnknown when grid has the wrong size for the bases.
AnalysisTable basis_psd(const std::vector<LocalBasis>& bases, const std::vector<std::size_t>& grid);

struct AnalysisOptions {
  IterationOptions basis;
  std::size_t num_steps = 100;  // DDIM inversion grid
};

/// Latents of every sample at every requested timestep (each snapped to the
/// inversion grid), obtained by deterministic DDIM inversion.
/// Result[a] is the [N x d] batch at timesteps[a].
std::vector<Tensor> invert_to_timesteps(const DenoiserModel& model, const NoiseSchedule& schedule,
                                        const Tensor& samples, const std::vector<std::size_t>& timesteps,
                                        std::size_t num_steps);

/// Symmetric matrix of geodesic distances between the U subspaces.
Tensor pairwise_geodesic_matrix(const std::vector<LocalBasis>& bases);

/// Columns: t, mean_distance, min_distance, max_distance, pairs.
/// One row per timestep in ascending order.
AnalysisTable sample_discrepancy(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& samples,
                                 const std::vector<std::size_t>& timesteps, const AnalysisOptions& options);

/// Square distance matrix between the bases of one sample across timesteps.
Tensor timestep_distances(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& x0,
                          const std::vector<std::size_t>& timesteps, const AnalysisOptions& options);

/// Columns: t, then one column per timestep.
AnalysisTable timestep_distance_matrix(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& x0,
                                       const std::vector<std::size_t>& timesteps, const AnalysisOptions& options);

struct LabeledModel {
  std::string label;
  const DenoiserModel* model = nullptr;
  const NoiseSchedule* schedule = nullptr;
  Tensor samples;  // rows of x0 whose matrices are averaged
};

/// Columns: model, gap, mean_distance, count. Labels go to the provenance.
AnalysisTable dataset_consistency(const std::vector<LabeledModel>& models, const std::vector<std::size_t>& timesteps,
                                  const AnalysisOptions& options);

struct BasisPair {
  const LocalBasis* src = nullptr;
  const LocalBasis* dst = nullptr;
};

/// Columns: pair, i, distance, angle, latent_angle, flagged. Directions whose
/// projection vanishes are recorded with angle pi/2 and flagged = 1.
AnalysisTable transport_distortion(const std::vector<BasisPair>& pairs, std::size_t directions);

struct RankCorrelation {
  double rho = 0.0;
  /// One-sided permutation p-value for rho > 0.
  double p_value = 1.0;
  std::size_t count = 0;
};

/// Spearman correlation with average ranks for ties.
RankCorrelation spearman(const std::vector<double>& x, const std::vector<double>& y, std::size_t permutations = 2000,
                         std::uint64_t seed = 0);

}  // namespace latent_atlas
