#include "latent_atlas/workspace.hpp"

#include <algorithm>
#include <cstdlib>

#include "latent_atlas/error.hpp"

namespace latent_atlas {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kArtifactExt = ".art";
constexpr std::string_view kConfigExt = ".conf";

bool is_hex(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
  });
}

std::vector<fs::path> files_with_ext(const fs::path& dir, std::string_view ext) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ext) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Only the header is needed for listing; stop at the "end" line.
std::string peek_kind(const fs::path& path) {
  const std::string bytes = read_file(path);
  const std::string marker = "\nkind = ";
  const auto pos = bytes.find(marker);
  if (pos == std::string::npos) return "unknown";
  const auto start = pos + marker.size();
  return bytes.substr(start, bytes.find('\n', start) - start);
}

}  // namespace

std::string workspace_dir_for(std::string_view kind) {
  if (kind == "model") return "models";
  if (kind == "basis" || kind == "direction") return "bases";
  if (kind == "edit" || kind == "trajectory" || kind == "samples") return "edits";
  fail(ErrorCode::BadOptions, "no workspace directory for artifact kind '" + std::string(kind) + "'");
}

Workspace Workspace::init(const fs::path& root) {
  for (const char* dir : kWorkspaceDirs) fs::create_directories(root / dir);
  return Workspace(root);
}

Workspace Workspace::open(const fs::path& root) {
  for (const char* dir : kWorkspaceDirs) {
    if (!fs::is_directory(root / dir)) {
      fail(ErrorCode::NotFound, "not a workspace (missing " + (root / dir).string() + "); run 'workspace init'");
    }
  }
  return Workspace(root);
}

std::string Workspace::store(const Artifact& artifact) const {
  const std::string hash = artifact_hash(artifact);
  const fs::path path = root_ / workspace_dir_for(artifact.kind) / (hash + std::string(kArtifactExt));
  if (!fs::exists(path)) write_artifact(path, artifact);
  return hash;
}

fs::path Workspace::locate(std::string_view prefix) const {
  if (!is_hex(prefix)) fail(ErrorCode::NotFound, "'" + std::string(prefix) + "' is not a hash");
  std::vector<fs::path> matches;
  for (const char* dir : kWorkspaceDirs) {
    for (const fs::path& p : files_with_ext(root_ / dir, kArtifactExt)) {
      if (p.stem().string().rfind(prefix, 0) == 0) matches.push_back(p);
    }
  }
  if (matches.empty()) fail(ErrorCode::NotFound, "no artifact with hash " + std::string(prefix));
  if (matches.size() > 1) fail(ErrorCode::Conflict, "hash prefix " + std::string(prefix) + " is ambiguous");
  return matches.front();
}

Artifact Workspace::load(std::string_view prefix) const {
  const fs::path path = locate(prefix);
  Artifact artifact = read_artifact(path);
  if (artifact_hash(artifact) != path.stem().string()) {
    fail(ErrorCode::CorruptArtifact, "artifact content does not match its file name " + path.filename().string());
  }
  return artifact;
}

bool Workspace::contains(std::string_view hash) const {
  try {
    locate(hash);
    return true;
  } catch (const Error&) {
    return false;
  }
}

std::string Workspace::store_config(const RunConfig& config) const {
  const std::string text = config_to_text(config);
  const std::string hash = sha256_hex(text);
  const fs::path path = root_ / "configs" / (hash + std::string(kConfigExt));
  if (!fs::exists(path)) write_file_atomic(path, text);
  return hash;
}

RunConfig Workspace::load_config_by_hash(std::string_view prefix) const {
  std::vector<fs::path> matches;
  for (const fs::path& p : files_with_ext(root_ / "configs", kConfigExt)) {
    if (p.stem().string().rfind(prefix, 0) == 0) matches.push_back(p);
  }
  if (matches.size() != 1) fail(ErrorCode::NotFound, "no unique config with hash " + std::string(prefix));
  const std::string text = read_file(matches.front());
  if (sha256_hex(text) != matches.front().stem().string()) fail(ErrorCode::CorruptArtifact, "config hash mismatch");
  return parse_config(text);
}

std::vector<ArtifactInfo> Workspace::list(std::string_view kind) const {
  std::vector<ArtifactInfo> out;
  for (const char* dir : kWorkspaceDirs) {
    for (const fs::path& p : files_with_ext(root_ / dir, kArtifactExt)) {
      ArtifactInfo info{p.stem().string(), peek_kind(p), p, fs::file_size(p)};
      if (kind.empty() || info.kind == kind) out.push_back(std::move(info));
    }
  }
  return out;
}

std::vector<VerifyEntry> Workspace::verify() const {
  std::vector<VerifyEntry> out;
  for (const char* dir : kWorkspaceDirs) {
    for (const fs::path& p : files_with_ext(root_ / dir, kArtifactExt)) {
      VerifyEntry entry{p, true, {}};
      try {
        const Artifact a = read_artifact(p);
        if (artifact_hash(a) != p.stem().string()) fail(ErrorCode::CorruptArtifact, "file name does not match content hash");
      } catch (const Error& e) {
        entry.ok = false;
        entry.error = std::string(error_code_name(e.code())) + ": " + e.what();
      }
      out.push_back(std::move(entry));
    }
    for (const fs::path& p : files_with_ext(root_ / dir, kConfigExt)) {
      VerifyEntry entry{p, sha256_hex(read_file(p)) == p.stem().string(), {}};
      if (!entry.ok) entry.error = "CorruptArtifact: config hash mismatch";
      out.push_back(std::move(entry));
    }
  }
  return out;
}

GcReport Workspace::gc() const {
  GcReport report;
  for (const char* dir : kWorkspaceDirs) {
    for (const auto& entry : fs::directory_iterator(root_ / dir)) {
      if (entry.is_regular_file() && entry.path().filename().string().find(".tmp") != std::string::npos) {
        fs::remove(entry.path());
        report.removed.push_back(entry.path());
      }
    }
  }
  // Orphans: provenance pointing at a model or basis that is gone. Repeat
  // until stable since removing a basis can orphan a transported direction.
  bool changed = true;
  while (changed) {
    changed = false;
    for (const ArtifactInfo& info : list()) {
      Artifact a;
      try {
        a = read_artifact(info.path);
      } catch (const Error&) {
        continue;  // reported by verify, never deleted silently
      }
      for (const auto& [key, value] : a.manifest.entries()) {
        const bool reference = key == "provenance.model" || key == "provenance.src_basis" ||
                               key == "provenance.dst_basis";
        if (reference && !contains(value)) {
          fs::remove(info.path);
          report.removed.push_back(info.path);
          changed = true;
          break;
        }
      }
    }
  }
  return report;
}

fs::path default_workspace_path() {
  if (const char* env = std::getenv("LATENT_ATLAS_WORKSPACE"); env && *env) return fs::path(env);
  return fs::path("workspace");
}

}  // namespace latent_atlas
