#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "latent_atlas/container.hpp"
#include "latent_atlas/denoiser.hpp"
#include "latent_atlas/error.hpp"
#include "support.hpp"

using namespace latent_atlas;
using namespace latent_atlas::testing;

namespace {

std::filesystem::path scratch_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "latent_atlas_denoiser_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

ErrorCode load_error(const std::filesystem::path& path) {
  try {
    load_model(path);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::IoError;  // sentinel: nothing thrown
}

}  // namespace

TEST_CASE("time embedding") {
  const Tensor zero = time_embedding(0, 8, 100);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(zero[2 * k] == 0.0);
    CHECK(zero[2 * k + 1] == 1.0);
  }
  const Tensor end = time_embedding(100, 4, 100);
  for (double v : end.data()) {
    CHECK(std::isfinite(v));
    CHECK(std::abs(v) <= 1.0);
  }
  // Reference evaluation written out longhand.
  const Tensor e = time_embedding(100, 32, 1000);
  for (int k = 0; k < 16; ++k) {
    const double omega = std::exp(-std::log(10000.0) * (2.0 * k) / 32.0);
    CHECK(e[2 * k] == doctest::Approx(std::sin(100.0 * omega)).epsilon(1e-12));
    CHECK(e[2 * k + 1] == doctest::Approx(std::cos(100.0 * omega)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(time_embedding(101, 4, 100), Error);
}

TEST_CASE("forward and encode basics") {
  DenoiserModel model = small_model(1);
  SeededRng rng(2);
  const Tensor x = rng.normal({3});
  CHECK(forward(model, x, 7) == forward(model, x, 7));
  CHECK(forward(model, x, 7).size() == 3);
  CHECK(encode(model, x, 7).size() == 12);
  CHECK_THROWS_AS(forward(model, Tensor({4}), 7), Error);
  CHECK_THROWS_AS(forward(model, x, 51), Error);

  DenoiserModel zero = model;
  for (DenseLayer& layer : zero.layers) {
    std::fill(layer.weight.values().begin(), layer.weight.values().end(), 0.0);
    std::fill(layer.bias.values().begin(), layer.bias.values().end(), 0.0);
  }
  const Tensor out_0 = forward(zero, x, 3);
  for (double v : out_0.data()) CHECK(v == 0.0);
  const Tensor out_1 = encode(zero, x, 3);
  for (double v : out_1.data()) CHECK(v == 0.0);

  // Batched evaluation agrees with the single-point path.
  const Tensor batch = rng.normal({5, 3});
  const Tensor out = forward(model, batch, 9);
  for (std::size_t i = 0; i < 5; ++i) CHECK(max_abs_diff(out.row_tensor(i), forward(model, batch.row_tensor(i), 9)) < 1e-15);
}

TEST_CASE("default architecture has a 256-wide bottleneck") {
  const DenoiserModel model = make_denoiser(DenoiserConfig{}, 0);
  CHECK(encode(model, Tensor({2}), 0).size() == 256);
  CHECK(model.layers.size() == 4);
}

TEST_CASE("jvp is linear and exact against finite differences") {
  SeededRng rng(3);
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const DenoiserModel model = small_model(seed, 4);
    const Tensor x = rng.normal({4});
    const std::size_t t = rng.index(51);
    CHECK(squared_norm(jvp_encode(model, x, t, Tensor({4})).u.data()) == 0.0);
    for (int trial = 0; trial < 25; ++trial) {
      const Tensor v = rng.normal({4});
      const Tensor u = jvp_encode(model, x, t, v).u;
      CHECK(max_abs_diff(jvp_encode(model, x, t, 2.5 * v).u, 2.5 * u) < 1e-12 * (1.0 + norm(u.data())));
      const double eps = 1e-5 * (1.0 + norm(x.data()));
      const Tensor fd = (1.0 / (2.0 * eps)) * (encode(model, x + eps * v, t) - encode(model, x - eps * v, t));
      CHECK(norm((u - fd).data()) / norm(u.data()) < 1e-6);
    }
  }
}

TEST_CASE("stacked jvp rows equal single jvps") {
  const DenoiserModel model = small_model(5, 4);
  SeededRng rng(4);
  const Tensor x = rng.normal({4});
  const Tensor vs = rng.normal({3, 4});
  const JvpResult stacked = jvp_encode(model, x, 10, vs);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(max_abs_diff(stacked.u.row_tensor(i), jvp_encode(model, x, 10, vs.row_tensor(i)).u) < 1e-14);
  }
  CHECK(stacked.h == encode(model, x, 10));
}

TEST_CASE("adjoint identity") {
  SeededRng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const DenoiserModel model = small_model(static_cast<std::uint64_t>(trial % 5), 3);
    const Tensor x = rng.normal({3});
    const std::size_t t = rng.index(51);
    const Tensor v = rng.normal({3});
    const Tensor u = rng.normal({12});
    const double lhs = dot(u.data(), jvp_encode(model, x, t, v).u.data());
    const double rhs = dot(vjp_encode(model, x, t, u).data(), v.data());
    CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(std::abs(lhs), 1e-12));
  }
  const DenoiserModel model = small_model(0, 3);
  const Tensor out_2 = vjp_encode(model, Tensor({3}), 4, Tensor({12}));
  for (double w : out_2.data()) CHECK(w == 0.0);
}

TEST_CASE("single linear layer: vjp is the transpose") {
  DenoiserConfig config;
  config.input_dim = 3;
  config.hidden = {5};
  config.bottleneck_index = 0;
  config.time_embed_dim = 4;
  config.timesteps = 10;
  config.activation = Activation::identity;
  const DenoiserModel model = make_denoiser(config, 8);
  SeededRng rng(9);
  const Tensor x = rng.normal({3});
  const Tensor u = rng.normal({5});
  const Tensor w = vjp_encode(model, x, 4, u);
  const Tensor& a = model.layers[0].weight;  // 5 x (3 + 4)
  for (std::size_t c = 0; c < 3; ++c) {
    double want = 0.0;
    for (std::size_t r = 0; r < 5; ++r) want += a(r, c) * u[r];
    CHECK(w[c] == doctest::Approx(want).epsilon(1e-14));
  }
  const Tensor v = rng.normal({3});
  const Tensor jv = jvp_encode(model, x, 4, v).u;
  for (std::size_t r = 0; r < 5; ++r) {
    double want = 0.0;
    for (std::size_t c = 0; c < 3; ++c) want += a(r, c) * v[c];
    CHECK(jv[r] == doctest::Approx(want).epsilon(1e-14));
  }
}

TEST_CASE("save and load round-trip bit-exactly") {
  const DenoiserModel model = small_model(10, 3);
  const auto path = scratch_file("model.art");
  save_model(path, model);
  const DenoiserModel loaded = load_model(path);
  CHECK(loaded == model);
  SeededRng rng(1);
  const Tensor x = rng.normal({3});
  CHECK(encode(loaded, x, 5) == encode(model, x, 5));
  CHECK(serialize_artifact(model_to_artifact(loaded)) == serialize_artifact(model_to_artifact(model)));
}

TEST_CASE("corrupted model files are rejected") {
  const DenoiserModel model = small_model(11, 3);
  const std::string bytes = serialize_artifact(model_to_artifact(model));

  const auto truncated = scratch_file("truncated.art");
  write_file_atomic(truncated, std::string_view(bytes).substr(0, bytes.size() - 17));
  CHECK(load_error(truncated) == ErrorCode::FormatError);

  const auto bumped = scratch_file("bumped.art");
  std::string text = bytes;
  const std::string needle = "format_version = " + std::to_string(kArtifactFormatVersion);
  const auto at = text.find(needle);
  REQUIRE(at != std::string::npos);
  text.replace(at, needle.size(), "format_version = " + std::to_string(kArtifactFormatVersion + 1));
  write_file_atomic(bumped, text);
  CHECK(load_error(bumped) == ErrorCode::VersionMismatch);
}

TEST_CASE("training is deterministic and reduces the loss") {
  const NoiseSchedule schedule = make_linear_schedule(50, 1e-3, 0.2);
  SeededRng rng(12);
  Tensor data = rng.normal({256, 2});
  for (std::size_t i = 0; i < 256; ++i) {
    data(i, 0) = 0.1 * data(i, 0) + (i % 2 ? 1.5 : -1.5);
    data(i, 1) *= 0.1;
  }
  const DenoiserModel init = small_model(13, 2, {32, 32, 32}, Activation::silu, 50);
  TrainConfig config;
  config.steps = 400;
  config.batch_size = 32;
  config.seed = 4;

  const TrainResult a = train(init, data, schedule, config);
  const TrainResult b = train(init, data, schedule, config);
  CHECK(a.model == b.model);
  CHECK(a.loss_trace == b.loss_trace);
  CHECK(a.loss_trace.size() == 400);
  const double before = denoising_loss(init, data, schedule, 2048, 99);
  const double after = denoising_loss(a.model, data, schedule, 2048, 99);
  CHECK(after < before);

  TrainConfig none = config;
  none.steps = 0;
  CHECK(train(init, data, schedule, none).model == init);
}

TEST_CASE("divergence is reported") {
  const NoiseSchedule schedule = make_linear_schedule(50, 1e-3, 0.2);
  SeededRng rng(14);
  const Tensor data = 1e200 * rng.normal({16, 2});
  TrainConfig config;
  config.steps = 5;
  config.batch_size = 4;
  try {
    train(small_model(1, 2), data, schedule, config);
    FAIL("expected Diverged");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Diverged);
  }
}
