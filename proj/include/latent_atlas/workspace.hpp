#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "latent_atlas/config.hpp"
#include "latent_atlas/container.hpp"

namespace latent_atlas {

inline constexpr const char* kWorkspaceDirs[] = {"models", "bases", "edits", "tables", "configs"};

/// Subdirectory an artifact kind is stored under.
std::string workspace_dir_for(std::string_view kind);

struct ArtifactInfo {
  std::string hash;
  std::string kind;
  std::filesystem::path path;
  std::uintmax_t bytes = 0;
};

struct VerifyEntry {
  std::filesystem::path path;
  bool ok = false;
  std::string error;
};

struct GcReport {
  std::vector<std::filesystem::path> removed;
};

/// Directory tree {models, bases, edits, tables, configs} holding
/// content-addressed artifacts named <hash>.art and configs named
/// <hash>.conf. Artifacts reference their inputs through manifest keys
/// starting with "provenance.".
class Workspace {
 public:
  /// Creates the five subdirectories (idempotent).
  static Workspace init(const std::filesystem::path& root);
  /// Throws NotFound unless the layout exists.
  static Workspace open(const std::filesystem::path& root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path tables_dir() const { return root_ / "tables"; }

  /// Writes atomically and returns the content hash.
  std::string store(const Artifact& artifact) const;
  /// Resolves a full hash or unique prefix. NotFound / Conflict otherwise.
  std::filesystem::path locate(std::string_view hash_prefix) const;
  /// Loads and verifies (CorruptArtifact if the content or file name hash
  /// disagrees).
  Artifact load(std::string_view hash_prefix) const;
  bool contains(std::string_view hash) const;

  std::string store_config(const RunConfig& config) const;
  RunConfig load_config_by_hash(std::string_view hash_prefix) const;

  /// Artifacts sorted by (directory, hash).
  std::vector<ArtifactInfo> list(std::string_view kind = {}) const;
  std::vector<VerifyEntry> verify() const;
  /// Removes leftover temp files and artifacts whose provenance references
  /// a model or basis that no longer exists.
  GcReport gc() const;

 private:
  explicit Workspace(std::filesystem::path root) : root_(std::move(root)) {}
  std::filesystem::path root_;
};

/// LATENT_ATLAS_WORKSPACE if set, otherwise "./workspace".
std::filesystem::path default_workspace_path();

}  // namespace latent_atlas
