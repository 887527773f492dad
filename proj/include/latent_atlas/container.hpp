#pragma once

#include <concepts>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "latent_atlas/tensor.hpp"

namespace latent_atlas {

inline constexpr int kArtifactFormatVersion = 1;

/// Ordered flat key/value text manifest. Keys use [A-Za-z0-9_.-]; values are
/// single-line strings. Numbers are stored with round-trip precision.
class Manifest {
 public:
  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, const char* value) { set(key, std::string(value)); }
  void set(const std::string& key, double value);
  template <std::integral I>
  void set(const std::string& key, I value) {
    if constexpr (std::is_same_v<I, bool>) {
      set(key, std::string(value ? "true" : "false"));
    } else {
      set(key, std::to_string(value));
    }
  }
  void set_sizes(const std::string& key, const std::vector<std::size_t>& values);
  void set_doubles(const std::string& key, const std::vector<double>& values);

  bool has(std::string_view key) const;
  std::optional<std::string> find(std::string_view key) const;
  /// Throws FormatError naming the key when absent.
  const std::string& get(std::string_view key) const;
  double get_double(std::string_view key) const;
  std::uint64_t get_uint(std::string_view key) const;
  bool get_bool(std::string_view key) const;
  std::vector<std::size_t> get_sizes(std::string_view key) const;
  std::vector<double> get_doubles(std::string_view key) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  void merge(const Manifest& other);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

struct Blob {
  std::string name;
  Tensor data;
};

/// A manifest plus raw little-endian float64 blobs. The serialized form is a
/// text header terminated by a line "end", followed by the blob bytes in
/// header order. content_hash is SHA-256 over the header (without the hash
/// line) and the blob bytes.
struct Artifact {
  std::string kind;
  Manifest manifest;
  std::vector<Blob> blobs;

  void add_blob(std::string name, Tensor data);
  const Tensor& blob(std::string_view name) const;
  bool has_blob(std::string_view name) const;
};

std::string serialize_artifact(const Artifact& artifact);
/// Throws FormatError on malformed/truncated input, VersionMismatch on an
/// unsupported format_version, CorruptArtifact when the stored hash does not
/// match the recomputed one.
Artifact parse_artifact(std::string_view bytes);
std::string artifact_hash(const Artifact& artifact);

/// Atomic write (temp file then rename). Returns the content hash.
std::string write_artifact(const std::filesystem::path& path, const Artifact& artifact);
Artifact read_artifact(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

std::string sha256_hex(std::string_view bytes);
std::string base64_encode(std::string_view bytes);
std::string tensor_bytes(const Tensor& t);
std::string format_double(double value);

}  // namespace latent_atlas
