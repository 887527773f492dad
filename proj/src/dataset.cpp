#include "latent_atlas/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "latent_atlas/error.hpp"

namespace latent_atlas {

namespace {

constexpr std::size_t kSupersample = 4;

bool known_shape(const std::string& s) { return s == "disk" || s == "square" || s == "bar" || s == "ring"; }

// Membership of a point (dx, dy) relative to the shape center.
bool inside(const std::string& shape, double dx, double dy, double size, bool vertical) {
  if (shape == "disk") return dx * dx + dy * dy <= size * size;
  if (shape == "square") return std::abs(dx) <= size && std::abs(dy) <= size;
  if (shape == "bar") {
    const double along = vertical ? dy : dx;
    const double across = vertical ? dx : dy;
    return std::abs(along) <= size && std::abs(across) <= std::max(0.75, size / 3.0);
  }
  const double r = std::sqrt(dx * dx + dy * dy);
  const double inner = std::max(size * 0.5, size - 1.5);
  return r <= size && r >= inner;
}

Tensor rasterize(const std::string& shape, double cx, double cy, double size, bool vertical) {
  Tensor img({kShapesGrid * kShapesGrid});
  const double step = 1.0 / static_cast<double>(kSupersample);
  for (std::size_t py = 0; py < kShapesGrid; ++py) {
    for (std::size_t px = 0; px < kShapesGrid; ++px) {
      std::size_t hits = 0;
      for (std::size_t sy = 0; sy < kSupersample; ++sy) {
        for (std::size_t sx = 0; sx < kSupersample; ++sx) {
          const double x = static_cast<double>(px) + (static_cast<double>(sx) + 0.5) * step;
          const double y = static_cast<double>(py) + (static_cast<double>(sy) + 0.5) * step;
          if (inside(shape, x - cx, y - cy, size, vertical)) ++hits;
        }
      }
      const double coverage = static_cast<double>(hits) / static_cast<double>(kSupersample * kSupersample);
      img[py * kShapesGrid + px] = 2.0 * coverage - 1.0;
    }
  }
  return img;
}

Dataset make_gmm(const DatasetSpec& spec) {
  Dataset ds{spec, Tensor({spec.count, 2}), std::vector<std::size_t>(spec.count)};
  const Tensor centers = gmm_centers(spec);
  SeededRng rng(spec.seed);
  for (std::size_t i = 0; i < spec.count; ++i) {
    const std::size_t mode = rng.index(spec.k);
    ds.labels[i] = mode;
    for (std::size_t c = 0; c < 2; ++c) ds.samples(i, c) = centers(mode, c) + spec.std * rng.normal();
  }
  return ds;
}

Dataset make_shapes(const DatasetSpec& spec) {
  const std::size_t full = kShapesGrid * kShapesGrid;
  Tensor images({spec.count, full});
  std::vector<std::size_t> labels(spec.count);
  SeededRng rng(spec.seed);
  const double mid = static_cast<double>(kShapesGrid) / 2.0;
  for (std::size_t i = 0; i < spec.count; ++i) {
    const std::size_t cls = rng.index(spec.shapes.size());
    const double cx = mid + rng.uniform(-spec.jitter, spec.jitter);
    const double cy = mid + rng.uniform(-spec.jitter, spec.jitter);
    const double size = rng.uniform(spec.size_min, spec.size_max);
    const bool vertical = rng.uniform() < 0.5;
    labels[i] = cls;
    images.set_row(i, rasterize(spec.shapes[cls], cx, cy, size, vertical).data());
  }

  std::vector<double> mean(full, 0.0);
  for (std::size_t i = 0; i < spec.count; ++i)
    for (std::size_t p = 0; p < full; ++p) mean[p] += images(i, p);
  for (double& m : mean) m /= static_cast<double>(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i)
    for (std::size_t p = 0; p < full; ++p) images(i, p) = (images(i, p) - mean[p]) / (1.0 + std::abs(mean[p]));

  const std::size_t c = spec.crop;
  const std::size_t offset = (kShapesGrid - c) / 2;
  Dataset ds{spec, Tensor({spec.count, c * c}), std::move(labels)};
  for (std::size_t i = 0; i < spec.count; ++i)
    for (std::size_t y = 0; y < c; ++y)
      for (std::size_t x = 0; x < c; ++x) ds.samples(i, y * c + x) = images(i, (y + offset) * kShapesGrid + x + offset);
  return ds;
}

}  // namespace

std::string dataset_kind_name(DatasetKind kind) { return kind == DatasetKind::gmm2d ? "gmm2d" : "shapes16"; }

DatasetKind parse_dataset_kind(std::string_view name) {
  if (name == "gmm2d") return DatasetKind::gmm2d;
  if (name == "shapes16") return DatasetKind::shapes16;
  fail(ErrorCode::BadSpec, "unknown dataset kind '" + std::string(name) + "'");
}

void validate_dataset_spec(const DatasetSpec& spec) {
  if (spec.count == 0) fail(ErrorCode::BadSpec, "count must be >= 1", "count>=1");
  if (spec.kind == DatasetKind::gmm2d) {
    if (spec.k == 0) fail(ErrorCode::BadSpec, "k must be >= 1", "k>=1");
    if (!(spec.std >= 0.0) || !std::isfinite(spec.std)) fail(ErrorCode::BadSpec, "std must be >= 0", "std>=0");
    if (!std::isfinite(spec.radius) || spec.radius < 0.0) fail(ErrorCode::BadSpec, "radius must be >= 0", "radius>=0");
    return;
  }
  if (spec.shapes.empty()) fail(ErrorCode::BadSpec, "shapes16 needs at least one shape class", "shapes");
  for (const std::string& s : spec.shapes)
    if (!known_shape(s)) fail(ErrorCode::BadSpec, "unknown shape '" + s + "'", "shapes");
  if (!(spec.size_min > 0.0) || !(spec.size_max >= spec.size_min)) {
    fail(ErrorCode::BadSpec, "need 0 < size_min <= size_max", "size_min<=size_max");
  }
  if (!(spec.jitter >= 0.0)) fail(ErrorCode::BadSpec, "jitter must be >= 0", "jitter>=0");
  if (spec.crop < 2 || spec.crop > kShapesGrid || (kShapesGrid - spec.crop) % 2 != 0) {
    fail(ErrorCode::BadSpec, "crop must be an even size in 2..16", "crop");
  }
}

std::size_t data_dim(const DatasetSpec& spec) {
  return spec.kind == DatasetKind::gmm2d ? 2 : spec.crop * spec.crop;
}

std::vector<std::size_t> grid_shape(const DatasetSpec& spec) {
  if (spec.kind == DatasetKind::gmm2d) return {};
  return {spec.crop, spec.crop};
}

Dataset generate_dataset(const DatasetSpec& spec) {
  validate_dataset_spec(spec);
  return spec.kind == DatasetKind::gmm2d ? make_gmm(spec) : make_shapes(spec);
}

Tensor gmm_centers(const DatasetSpec& spec) {
  if (spec.kind != DatasetKind::gmm2d || spec.k == 0) fail(ErrorCode::BadSpec, "mode centers need a gmm2d spec");
  Tensor centers({spec.k, 2});
  for (std::size_t m = 0; m < spec.k; ++m) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(spec.k);
    centers(m, 0) = spec.radius * std::cos(angle);
    centers(m, 1) = spec.radius * std::sin(angle);
  }
  return centers;
}

double support_distance(const DatasetSpec& spec, const Tensor& x) {
  if (!(spec.std > 0.0)) fail(ErrorCode::BadSpec, "support distance needs std > 0");
  if (x.size() != 2) fail(ErrorCode::DimMismatch, "gmm2d points are 2-D");
  const Tensor centers = gmm_centers(spec);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < spec.k; ++m) best = std::min(best, std::hypot(x[0] - centers(m, 0), x[1] - centers(m, 1)));
  return best / spec.std;
}

void write_dataset_manifest(Manifest& mf, const DatasetSpec& spec) {
  mf.set("dataset.kind", dataset_kind_name(spec.kind));
  mf.set("dataset.count", spec.count);
  mf.set("dataset.seed", spec.seed);
  if (spec.kind == DatasetKind::gmm2d) {
    mf.set("dataset.k", spec.k);
    mf.set("dataset.radius", spec.radius);
    mf.set("dataset.std", spec.std);
  } else {
    std::string joined;
    for (const std::string& s : spec.shapes) joined += (joined.empty() ? "" : ",") + s;
    mf.set("dataset.shapes", joined);
    mf.set("dataset.size_min", spec.size_min);
    mf.set("dataset.size_max", spec.size_max);
    mf.set("dataset.jitter", spec.jitter);
    mf.set("dataset.crop", spec.crop);
  }
}

DatasetSpec dataset_spec_from_manifest(const Manifest& mf) {
  DatasetSpec spec;
  spec.kind = parse_dataset_kind(mf.get("dataset.kind"));
  spec.count = mf.get_uint("dataset.count");
  spec.seed = mf.get_uint("dataset.seed");
  if (spec.kind == DatasetKind::gmm2d) {
    spec.k = mf.get_uint("dataset.k");
    spec.radius = mf.get_double("dataset.radius");
    spec.std = mf.get_double("dataset.std");
  } else {
    spec.shapes.clear();
    const std::string& joined = mf.get("dataset.shapes");
    std::size_t start = 0;
    while (start <= joined.size()) {
      const std::size_t comma = std::min(joined.find(',', start), joined.size());
      spec.shapes.push_back(joined.substr(start, comma - start));
      start = comma + 1;
    }
    spec.size_min = mf.get_double("dataset.size_min");
    spec.size_max = mf.get_double("dataset.size_max");
    spec.jitter = mf.get_double("dataset.jitter");
    spec.crop = mf.get_uint("dataset.crop");
  }
  validate_dataset_spec(spec);
  return spec;
}

}  // namespace latent_atlas
