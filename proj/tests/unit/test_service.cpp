#include <doctest.h>
#include <httplib.h>

#include <chrono>
#include <json.hpp>
#include <thread>

#include "latent_atlas/commands.hpp"
#include "latent_atlas/service.hpp"

using namespace latent_atlas;
using json = nlohmann::json;

namespace {

RunConfig tiny_config() {
  RunConfig config;
  config.dataset.count = 512;
  config.schedule.T = 100;
  config.model.hidden = {16, 16, 16};
  config.model.time_embed_dim = 8;
  config.model.input_dim = 2;
  config.model.timesteps = 100;
  config.train.steps = 100;
  config.train.batch_size = 32;
  config.basis.n = 2;
  config.sampling.num_steps = 10;
  return config;
}

struct Fixture {
  Workspace ws;
  RunConfig config;
  std::string model;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    const auto root = std::filesystem::temp_directory_path() / "latent_atlas_service_test";
    std::filesystem::remove_all(root);
    Workspace ws = Workspace::init(root);
    const RunConfig config = tiny_config();
    const std::string model = run_train(ws, config).hash;
    return Fixture{ws, config, model};
  }();
  return f;
}

json parse(const httplib::Result& r) {
  REQUIRE(r);
  return json::parse(r->body);
}

json await_job(httplib::Client& client, const std::string& id) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(60);
  for (;;) {
    const json job = parse(client.Get("/v1/jobs/" + id));
    const std::string status = job.at("status");
    if (status == "done" || status == "failed") return job;
    REQUIRE(std::chrono::steady_clock::now() < deadline);
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
}

std::string blob_data(const json& artifact, const std::string& name) {
  for (const json& b : artifact.at("blobs"))
    if (b.at("name") == name) return b.at("data");
  FAIL("missing blob " << name);
  return "";
}

}  // namespace

TEST_CASE("models endpoint lists the trained model") {
  const Fixture& f = fixture();
  Service service(f.ws, f.config, ServiceOptions{"127.0.0.1", 0, std::nullopt});
  httplib::Client client("127.0.0.1", service.start());
  const auto res = client.Get("/v1/models");
  REQUIRE(res);
  CHECK(res->status == 200);
  const json body = json::parse(res->body);
  REQUIRE(body.at("models").size() == 1);
  CHECK(body["models"][0]["hash"] == f.model);

  const json samples = parse(client.Get("/v1/samples?model=" + f.model.substr(0, 12) + "&count=4"));
  CHECK(samples.at("count") == 4);
  CHECK(samples.at("d") == 2);
  service.stop();
}

TEST_CASE("gamma zero edit over HTTP equals the reconstruction") {
  const Fixture& f = fixture();
  Service service(f.ws, f.config, ServiceOptions{"127.0.0.1", 0, std::nullopt});
  httplib::Client client("127.0.0.1", service.start());
  const json request = {{"model", f.model}, {"sample_index", 3}, {"t_edit", 0.6}, {"dir", 0}, {"gamma", 0.0}};
  const auto res = client.Post("/v1/jobs/edit", request.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 202);
  const std::string id = json::parse(res->body).at("id");
  const json job = await_job(client, id);
  REQUIRE(job.at("status") == "done");
  CHECK(job.at("progress") == 1.0);
  const std::string hash = job.at("result");
  const json artifact = parse(client.Get("/v1/artifacts/" + hash));
  CHECK(artifact.at("kind") == "edit");
  CHECK(artifact.at("hash") == hash);
  CHECK(blob_data(artifact, "edited") == blob_data(artifact, "reconstructed"));
  service.stop();
}

TEST_CASE("invalid requests get 400 naming the constraint") {
  const Fixture& f = fixture();
  Service service(f.ws, f.config, ServiceOptions{"127.0.0.1", 0, std::nullopt});
  httplib::Client client("127.0.0.1", service.start());

  json request = {{"model", f.model}, {"sample_index", 0}, {"t_edit", 0.1}, {"dir", 0}};
  auto res = client.Post("/v1/jobs/edit", request.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  json body = json::parse(res->body);
  CHECK(body.at("error") == "ValidationError");
  CHECK(body.at("constraint") == "t_edit>=t_boost");

  request = {{"model", f.model}, {"sample_index", 0}, {"t", 0.5}, {"n", 500}};
  res = client.Post("/v1/jobs/basis", request.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  CHECK(json::parse(res->body).at("constraint") == "n<=min(d,D_h)");

  res = client.Post("/v1/jobs/edit", "{not json", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  CHECK(json::parse(res->body).at("constraint") == "body");

  res = client.Post("/v1/jobs/edit", json{{"model", f.model}}.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  CHECK(json::parse(res->body).at("constraint") == "sample_index");
  service.stop();
}

TEST_CASE("unknown jobs and artifacts are 404") {
  const Fixture& f = fixture();
  Service service(f.ws, f.config, ServiceOptions{"127.0.0.1", 0, std::nullopt});
  httplib::Client client("127.0.0.1", service.start());
  auto res = client.Get("/v1/jobs/job-999");
  REQUIRE(res);
  CHECK(res->status == 404);
  CHECK(json::parse(res->body).at("error") == "NotFound");
  res = client.Get("/v1/artifacts/ffffffffffff");
  REQUIRE(res);
  CHECK(res->status == 404);
  res = client.Get("/v1/nothing-here");
  REQUIRE(res);
  CHECK(res->status == 404);
  service.stop();
}

TEST_CASE("a second job while one is running is a conflict") {
  const Fixture& f = fixture();
  RunConfig slow = f.config;
  slow.basis.min_iter = 40000;
  slow.basis.max_iter = 40000;
  Service service(f.ws, slow, ServiceOptions{"127.0.0.1", 0, std::nullopt});
  httplib::Client client("127.0.0.1", service.start());
  const json request = {{"model", f.model}, {"sample_index", 1}, {"t", 0.5}, {"n", 2}};
  auto first = client.Post("/v1/jobs/basis", request.dump(), "application/json");
  REQUIRE(first);
  REQUIRE(first->status == 202);
  auto second = client.Post("/v1/jobs/basis", request.dump(), "application/json");
  REQUIRE(second);
  CHECK(second->status == 409);
  CHECK(json::parse(second->body).at("error") == "Conflict");

  const json job = await_job(client, json::parse(first->body).at("id"));
  CHECK(job.at("status") == "done");
  CHECK(job.at("kind") == "basis");
  // Idle again: new work is accepted.
  second = client.Post("/v1/jobs/basis", request.dump(), "application/json");
  REQUIRE(second);
  CHECK(second->status == 202);
  await_job(client, json::parse(second->body).at("id"));
  service.stop();
}
