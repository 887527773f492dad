#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "latent_atlas/error.hpp"
#include "latent_atlas/workspace.hpp"

using namespace latent_atlas;

namespace {

std::filesystem::path fresh_root(const std::string& name) {
  const auto root = std::filesystem::temp_directory_path() / ("latent_atlas_ws_" + name);
  std::filesystem::remove_all(root);
  return root;
}

Artifact demo(const std::string& kind, double value, const std::string& parent = "") {
  Artifact a;
  a.kind = kind;
  a.manifest.set("demo.value", value);
  if (!parent.empty()) a.manifest.set("provenance.model", parent);
  a.add_blob("data", Tensor::vector({value, value + 1.0}));
  return a;
}

ErrorCode load_error(const Workspace& ws, std::string_view hash) {
  try {
    ws.load(hash);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::IoError;  // sentinel: nothing thrown
}

}  // namespace

TEST_CASE("init creates the layout and is idempotent") {
  const auto root = fresh_root("init");
  CHECK_THROWS_AS(Workspace::open(root), Error);
  Workspace::init(root);
  for (const char* dir : kWorkspaceDirs) CHECK(std::filesystem::is_directory(root / dir));
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(root)) ++entries;
  CHECK(entries == 5);
  Workspace::init(root);
  CHECK(Workspace::open(root).root() == root);
}

TEST_CASE("store, load and list artifacts") {
  const Workspace ws = Workspace::init(fresh_root("store"));
  const Artifact model = demo("model", 1.0);
  const std::string hash = ws.store(model);
  CHECK(hash == artifact_hash(model));
  CHECK(ws.store(model) == hash);
  CHECK(ws.contains(hash));
  CHECK(ws.locate(hash).parent_path().filename() == "models");
  CHECK(ws.locate(hash.substr(0, 10)) == ws.locate(hash));
  const Artifact back = ws.load(hash.substr(0, 12));
  CHECK(back.kind == "model");
  CHECK(back.blob("data") == model.blob("data"));

  const std::string basis = ws.store(demo("basis", 2.0, hash));
  CHECK(ws.locate(basis).parent_path().filename() == "bases");
  CHECK(ws.list().size() == 2);
  CHECK(ws.list("basis").size() == 1);
  CHECK(ws.list("basis").front().hash == basis);
  CHECK(load_error(ws, "0000000000") == ErrorCode::NotFound);
  CHECK(load_error(ws, "zz") != ErrorCode::IoError);
}

TEST_CASE("a flipped byte is detected") {
  const Workspace ws = Workspace::init(fresh_root("flip"));
  const std::string hash = ws.store(demo("model", 3.0));
  const auto path = ws.locate(hash);
  std::string bytes = read_file(path);
  bytes[bytes.size() - 3] ^= 0x01;
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << bytes;
  }
  CHECK(load_error(ws, hash) == ErrorCode::CorruptArtifact);
  const auto report = ws.verify();
  REQUIRE(report.size() == 1);
  CHECK_FALSE(report.front().ok);
  CHECK_FALSE(report.front().error.empty());
}

TEST_CASE("verify passes on an intact workspace") {
  const Workspace ws = Workspace::init(fresh_root("verify"));
  ws.store(demo("model", 1.0));
  ws.store(demo("edit", 2.0));
  for (const VerifyEntry& e : ws.verify()) CHECK(e.ok);
}

TEST_CASE("gc removes temp files and orphans") {
  const Workspace ws = Workspace::init(fresh_root("gc"));
  const std::string model = ws.store(demo("model", 1.0));
  const std::string kept = ws.store(demo("basis", 2.0, model));
  const std::string orphan = ws.store(demo("basis", 3.0, std::string(64, 'a')));
  const auto temp = ws.root() / "models" / "leftover.art.tmp";
  write_file_atomic(temp, "partial");
  const GcReport report = ws.gc();
  CHECK(report.removed.size() == 2);
  CHECK_FALSE(std::filesystem::exists(temp));
  CHECK(ws.contains(model));
  CHECK(ws.contains(kept));
  CHECK_FALSE(ws.contains(orphan));
  CHECK(ws.gc().removed.empty());
}

TEST_CASE("configs are stored by content hash") {
  const Workspace ws = Workspace::init(fresh_root("config"));
  RunConfig config;
  config.basis.n = 2;
  config.train.steps = 77;
  const std::string hash = ws.store_config(config);
  CHECK(ws.store_config(config) == hash);
  CHECK(std::filesystem::exists(ws.root() / "configs" / (hash + ".conf")));
  const RunConfig back = ws.load_config_by_hash(hash.substr(0, 8));
  CHECK(config_to_text(back) == config_to_text(config));
  CHECK(workspace_dir_for("model") == "models");
  CHECK(workspace_dir_for("trajectory") == "edits");
  CHECK_THROWS_AS(workspace_dir_for("table"), Error);
}
