#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "latent_atlas/container.hpp"
#include "latent_atlas/tensor.hpp"

namespace latent_atlas {

enum class DatasetKind { gmm2d, shapes16 };

std::string dataset_kind_name(DatasetKind kind);
DatasetKind parse_dataset_kind(std::string_view name);

inline constexpr std::size_t kShapesGrid = 16;

struct DatasetSpec {
  DatasetKind kind = DatasetKind::gmm2d;
  // gmm2d
  std::size_t k = 2;
  double radius = 2.0;
  double std = 0.1;
  // shapes16
  std::vector<std::string> shapes{"disk", "square", "bar", "ring"};
  double size_min = 2.5;  // half-extent in pixels
  double size_max = 5.0;
  double jitter = 2.0;    // max center offset in pixels
  std::size_t crop = kShapesGrid;  // central crop edge; 16 keeps the full grid
  std::size_t count = 10000;
  std::uint64_t seed = 0;

  bool operator==(const DatasetSpec&) const = default;
};

/// Throws BadSpec on an invalid spec.
void validate_dataset_spec(const DatasetSpec& spec);

/// Flattened sample dimension: 2 for gmm2d, crop^2 for shapes16.
std::size_t data_dim(const DatasetSpec& spec);

/// Image shape {crop, crop} for shapes16, empty for gmm2d.
std::vector<std::size_t> grid_shape(const DatasetSpec& spec);

struct Dataset {
  DatasetSpec spec;
  Tensor samples;                   // count x d
  std::vector<std::size_t> labels;  // mode or shape class per sample
};

/// gmm2d: k modes equally spaced on a circle (first at angle 0), isotropic
/// Gaussian noise. shapes16: supersampled anti-aliased shapes on a 16 x 16
/// grid in [-1, 1], centered with the per-pixel dataset mean m as
/// (x - m) / (1 + |m|) so values stay in [-1, 1], then cropped.
Dataset generate_dataset(const DatasetSpec& spec);

/// Mode centers of a gmm2d spec, k x 2.
Tensor gmm_centers(const DatasetSpec& spec);

/// Distance from x to the nearest gmm2d mode center in units of std.
double support_distance(const DatasetSpec& spec, const Tensor& x);

void write_dataset_manifest(Manifest& manifest, const DatasetSpec& spec);
DatasetSpec dataset_spec_from_manifest(const Manifest& manifest);

}  // namespace latent_atlas
