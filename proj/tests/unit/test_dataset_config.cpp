#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "latent_atlas/config.hpp"
#include "latent_atlas/dataset.hpp"
#include "latent_atlas/error.hpp"

using namespace latent_atlas;

namespace {

const std::filesystem::path kConfigs = LATENT_ATLAS_CONFIG_DIR;

std::string failure_detail(const RunConfig& config, ErrorCode expected = ErrorCode::ValidationError) {
  try {
    validate_config(config);
  } catch (const Error& e) {
    CHECK(e.code() == expected);
    return e.detail();
  }
  return "";
}

ErrorCode dataset_error(const DatasetSpec& spec) {
  try {
    generate_dataset(spec);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::IoError;  // sentinel: nothing thrown
}

}  // namespace

TEST_CASE("datasets are deterministic in their seed") {
  DatasetSpec spec;
  spec.count = 200;
  spec.seed = 5;
  CHECK(generate_dataset(spec).samples == generate_dataset(spec).samples);
  DatasetSpec other = spec;
  other.seed = 6;
  CHECK_FALSE(generate_dataset(spec).samples == generate_dataset(other).samples);

  DatasetSpec shapes;
  shapes.kind = DatasetKind::shapes16;
  shapes.count = 20;
  CHECK(generate_dataset(shapes).samples == generate_dataset(shapes).samples);
}

TEST_CASE("single zero-width mode returns its center") {
  DatasetSpec spec;
  spec.k = 1;
  spec.std = 0.0;
  spec.count = 50;
  const Dataset data = generate_dataset(spec);
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(data.samples(i, 0) == spec.radius);
    CHECK(data.samples(i, 1) == 0.0);
  }
}

TEST_CASE("two-mode mixture centroids") {
  DatasetSpec spec;
  spec.k = 2;
  spec.radius = 2.0;
  spec.std = 0.1;
  spec.count = 10000;
  const Dataset data = generate_dataset(spec);
  double sum[2][2] = {{0, 0}, {0, 0}};
  std::size_t counts[2] = {0, 0};
  for (std::size_t i = 0; i < spec.count; ++i) {
    const std::size_t m = data.labels[i];
    REQUIRE(m < 2);
    sum[m][0] += data.samples(i, 0);
    sum[m][1] += data.samples(i, 1);
    ++counts[m];
  }
  const Tensor centers = gmm_centers(spec);
  CHECK(centers(0, 0) == 2.0);
  CHECK(centers(1, 0) == doctest::Approx(-2.0).epsilon(1e-15));
  for (std::size_t m = 0; m < 2; ++m) {
    REQUIRE(counts[m] > 0);
    CHECK(std::abs(sum[m][0] / counts[m] - centers(m, 0)) < 0.02);
    CHECK(std::abs(sum[m][1] / counts[m] - centers(m, 1)) < 0.02);
  }
  CHECK(support_distance(spec, Tensor::vector({2.0, 0.1})) == doctest::Approx(1.0));
}

TEST_CASE("shape images have the requested size and range") {
  DatasetSpec spec;
  spec.kind = DatasetKind::shapes16;
  spec.count = 100;
  const Dataset full = generate_dataset(spec);
  CHECK(data_dim(spec) == 256);
  CHECK(grid_shape(spec) == std::vector<std::size_t>{16, 16});
  CHECK(full.samples.rows() == 100);
  CHECK(full.samples.cols() == 256);
  for (double v : full.samples.data()) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  spec.crop = 8;
  const Dataset cropped = generate_dataset(spec);
  CHECK(data_dim(spec) == 64);
  CHECK(cropped.samples.cols() == 64);
  CHECK(*std::max_element(cropped.labels.begin(), cropped.labels.end()) < spec.shapes.size());
}

TEST_CASE("invalid dataset specs are rejected") {
  DatasetSpec spec;
  spec.count = 0;
  CHECK(dataset_error(spec) == ErrorCode::BadSpec);
  spec = DatasetSpec{};
  spec.k = 0;
  CHECK(dataset_error(spec) == ErrorCode::BadSpec);
  spec = DatasetSpec{};
  spec.std = -1.0;
  CHECK(dataset_error(spec) == ErrorCode::BadSpec);
  spec = DatasetSpec{};
  spec.kind = DatasetKind::shapes16;
  spec.shapes = {"hexagon"};
  CHECK(dataset_error(spec) == ErrorCode::BadSpec);
  CHECK_THROWS_AS(parse_dataset_kind("mnist"), Error);
}

TEST_CASE("dataset spec survives a manifest round trip") {
  DatasetSpec spec;
  spec.kind = DatasetKind::shapes16;
  spec.crop = 8;
  spec.seed = 9;
  spec.shapes = {"disk", "ring"};
  Manifest m;
  write_dataset_manifest(m, spec);
  CHECK(dataset_spec_from_manifest(m) == spec);
}

TEST_CASE("shipped configs validate") {
  for (const char* name : {"default.conf", "shapes16.conf", "gmm2d_k16.conf"}) {
    CAPTURE(name);
    const RunConfig config = load_config(kConfigs / name);
    CHECK(failure_detail(config) == "");
  }
  const RunConfig shapes = load_config(kConfigs / "shapes16.conf");
  CHECK(shapes.model.input_dim == 64);
  CHECK(load_config(kConfigs / "default.conf").model.input_dim == 2);
}

TEST_CASE("config constraints are named") {
  RunConfig config = load_config(kConfigs / "default.conf");
  config.edit.t_edit_frac = 0.1;
  config.sampling.t_boost_frac = 0.2;
  CHECK(failure_detail(config) == "t_edit>=t_boost");

  config = load_config(kConfigs / "default.conf");
  config.basis.n = 500;
  CHECK(failure_detail(config) == "n<=min(d,D_h)");

  config = load_config(kConfigs / "default.conf");
  config.basis.n = 0;
  CHECK(failure_detail(config) == "n>=1");

  config = load_config(kConfigs / "default.conf");
  config.sampling.num_steps = 2000;
  CHECK(failure_detail(config) == "num_steps<=T");
}

TEST_CASE("parse errors name the line and key") {
  try {
    parse_config("dataset.k = 3\n# comment\nbogus.key = 1\n");
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(e.detail() == "line 3 bogus.key");
  }
  try {
    parse_config("train.steps = many\n");
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(e.detail() == "line 1 train.steps");
  }
  CHECK_THROWS_AS(parse_config("no equals sign\n"), Error);
}

TEST_CASE("config text round-trips") {
  RunConfig config = load_config(kConfigs / "shapes16.conf");
  config.edit.gamma = 1.25;
  config.edit.method = EditMethod::direct_addition;
  const std::string text = config_to_text(config);
  const RunConfig back = parse_config(text);
  CHECK(config_to_text(back) == text);
  CHECK(back.dataset == config.dataset);
  CHECK(back.edit.gamma == 1.25);
  CHECK(back.gamma() == 1.25);
  CHECK(parse_config("").gamma() == default_gamma(1.0));
  CHECK(config_reference().find("basis.n") != std::string::npos);
}
