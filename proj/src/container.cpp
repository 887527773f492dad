#include "latent_atlas/container.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "latent_atlas/error.hpp"

namespace latent_atlas {

namespace {

constexpr std::string_view kMagic = "latent-atlas artifact";

bool valid_key(std::string_view key) {
  if (key.empty()) return false;
  return std::all_of(key.begin(), key.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
  });
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  if (s.empty()) return parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    parts.emplace_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::uint64_t parse_uint(std::string_view text, std::string_view key) {
  std::uint64_t value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    fail(ErrorCode::FormatError, "expected an unsigned integer for '" + std::string(key) + "'",
         std::string(key));
  }
  return value;
}

double parse_double(std::string_view text, std::string_view key) {
  std::string owned(text);
  char* end = nullptr;
  const double value = std::strtod(owned.c_str(), &end);
  if (owned.empty() || end != owned.c_str() + owned.size()) {
    fail(ErrorCode::FormatError, "expected a number for '" + std::string(key) + "'", std::string(key));
  }
  return value;
}

std::string header_without_hash(const Artifact& artifact) {
  std::ostringstream out;
  out << kMagic << '\n';
  out << "format_version = " << kArtifactFormatVersion << '\n';
  out << "kind = " << artifact.kind << '\n';
  for (const auto& [key, value] : artifact.manifest.entries()) out << key << " = " << value << '\n';
  out << "blob.count = " << artifact.blobs.size() << '\n';
  for (std::size_t i = 0; i < artifact.blobs.size(); ++i) {
    const Blob& blob = artifact.blobs[i];
    out << "blob." << i << ".name = " << blob.name << '\n';
    out << "blob." << i << ".shape = ";
    for (std::size_t s = 0; s < blob.data.shape().size(); ++s) out << (s ? "," : "") << blob.data.shape()[s];
    out << '\n';
    out << "blob." << i << ".bytes = " << blob.data.size() * sizeof(double) << '\n';
  }
  return out.str();
}

std::string all_blob_bytes(const Artifact& artifact) {
  std::string bytes;
  for (const Blob& blob : artifact.blobs) bytes += tensor_bytes(blob.data);
  return bytes;
}

Tensor tensor_from_bytes(std::string_view bytes, std::vector<std::size_t> shape) {
  Tensor t(std::move(shape));
  if (bytes.size() != t.size() * sizeof(double)) {
    fail(ErrorCode::FormatError, "blob byte count does not match its shape");
  }
  std::memcpy(t.data().data(), bytes.data(), bytes.size());
  if constexpr (std::endian::native == std::endian::big) {
    for (double& v : t.values()) {
      auto raw = std::bit_cast<std::uint64_t>(v);
      raw = __builtin_bswap64(raw);
      v = std::bit_cast<double>(raw);
    }
  }
  return t;
}

}  // namespace

void Manifest::set(const std::string& key, const std::string& value) {
  if (!valid_key(key)) fail(ErrorCode::FormatError, "invalid manifest key '" + key + "'", key);
  if (value.find('\n') != std::string::npos) {
    fail(ErrorCode::FormatError, "manifest values must be single-line", key);
  }
  const std::string stored(trim(value));
  for (auto& entry : entries_) {
    if (entry.first == key) {
      entry.second = stored;
      return;
    }
  }
  entries_.emplace_back(key, stored);
}

void Manifest::set(const std::string& key, double value) { set(key, format_double(value)); }

void Manifest::set_sizes(const std::string& key, const std::vector<std::size_t>& values) {
  std::string joined;
  for (std::size_t i = 0; i < values.size(); ++i) joined += (i ? "," : "") + std::to_string(values[i]);
  set(key, joined);
}

void Manifest::set_doubles(const std::string& key, const std::vector<double>& values) {
  std::string joined;
  for (std::size_t i = 0; i < values.size(); ++i) joined += (i ? "," : "") + format_double(values[i]);
  set(key, joined);
}

bool Manifest::has(std::string_view key) const { return find(key).has_value(); }

std::optional<std::string> Manifest::find(std::string_view key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  return std::nullopt;
}

const std::string& Manifest::get(std::string_view key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  fail(ErrorCode::FormatError, "manifest is missing '" + std::string(key) + "'", std::string(key));
}

double Manifest::get_double(std::string_view key) const { return parse_double(get(key), key); }

std::uint64_t Manifest::get_uint(std::string_view key) const { return parse_uint(get(key), key); }

bool Manifest::get_bool(std::string_view key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail(ErrorCode::FormatError, "expected a boolean for '" + std::string(key) + "'", std::string(key));
}

std::vector<std::size_t> Manifest::get_sizes(std::string_view key) const {
  std::vector<std::size_t> out;
  for (const auto& part : split(get(key), ',')) out.push_back(parse_uint(part, key));
  return out;
}

std::vector<double> Manifest::get_doubles(std::string_view key) const {
  std::vector<double> out;
  for (const auto& part : split(get(key), ',')) out.push_back(parse_double(part, key));
  return out;
}

void Manifest::merge(const Manifest& other) {
  for (const auto& [k, v] : other.entries_) set(k, v);
}

void Artifact::add_blob(std::string name, Tensor data) {
  if (!valid_key(name)) fail(ErrorCode::FormatError, "invalid blob name '" + name + "'");
  blobs.push_back(Blob{std::move(name), std::move(data)});
}

const Tensor& Artifact::blob(std::string_view name) const {
  for (const Blob& b : blobs)
    if (b.name == name) return b.data;
  fail(ErrorCode::FormatError, "artifact is missing blob '" + std::string(name) + "'", std::string(name));
}

bool Artifact::has_blob(std::string_view name) const {
  return std::any_of(blobs.begin(), blobs.end(), [&](const Blob& b) { return b.name == name; });
}

std::string tensor_bytes(const Tensor& t) {
  std::string bytes(t.size() * sizeof(double), '\0');
  std::memcpy(bytes.data(), t.data().data(), bytes.size());
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      auto raw = __builtin_bswap64(std::bit_cast<std::uint64_t>(t[i]));
      std::memcpy(bytes.data() + i * sizeof(double), &raw, sizeof(raw));
    }
  }
  return bytes;
}

std::string artifact_hash(const Artifact& artifact) {
  return sha256_hex(header_without_hash(artifact) + all_blob_bytes(artifact));
}

std::string serialize_artifact(const Artifact& artifact) {
  const std::string header = header_without_hash(artifact);
  const std::string blobs = all_blob_bytes(artifact);
  return header + "content_hash = " + sha256_hex(header + blobs) + "\nend\n" + blobs;
}

Artifact parse_artifact(std::string_view bytes) {
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string_view {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string_view::npos) fail(ErrorCode::FormatError, "artifact header is truncated");
    std::string_view line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };

  if (next_line() != kMagic) fail(ErrorCode::FormatError, "not a latent-atlas artifact");

  Manifest raw;
  std::string stored_hash;
  bool saw_end = false;
  while (pos < bytes.size()) {
    const std::string_view line = next_line();
    if (line == "end") {
      saw_end = true;
      break;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) fail(ErrorCode::FormatError, "malformed header line '" + std::string(line) + "'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key == "content_hash") {
      stored_hash = value;
    } else {
      raw.set(key, value);
    }
  }
  if (!saw_end) fail(ErrorCode::FormatError, "artifact header is truncated");

  const auto version = raw.find("format_version");
  if (!version) fail(ErrorCode::FormatError, "artifact has no format_version");
  if (parse_uint(*version, "format_version") != static_cast<std::uint64_t>(kArtifactFormatVersion)) {
    fail(ErrorCode::VersionMismatch, "unsupported artifact format_version " + *version);
  }

  Artifact artifact;
  artifact.kind = raw.get("kind");
  const std::size_t blob_count = raw.get_uint("blob.count");
  for (const auto& [key, value] : raw.entries()) {
    if (key == "format_version" || key == "kind" || key.rfind("blob.", 0) == 0) continue;
    artifact.manifest.set(key, value);
  }

  std::size_t offset = pos;
  for (std::size_t i = 0; i < blob_count; ++i) {
    const std::string prefix = "blob." + std::to_string(i);
    const std::string name = raw.get(prefix + ".name");
    const std::vector<std::size_t> shape = raw.get_sizes(prefix + ".shape");
    const std::uint64_t count = raw.get_uint(prefix + ".bytes");
    if (offset + count > bytes.size()) fail(ErrorCode::FormatError, "artifact blob '" + name + "' is truncated");
    artifact.add_blob(name, tensor_from_bytes(bytes.substr(offset, count), shape));
    offset += count;
  }
  if (offset != bytes.size()) fail(ErrorCode::FormatError, "artifact has trailing bytes");
  if (stored_hash.empty()) fail(ErrorCode::FormatError, "artifact has no content_hash");
  if (artifact_hash(artifact) != stored_hash) {
    fail(ErrorCode::CorruptArtifact, "artifact content does not match its stored hash", stored_hash);
  }
  return artifact;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::NotFound, "cannot open '" + path.string() + "'", path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::IoError, "short write to '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

std::string write_artifact(const std::filesystem::path& path, const Artifact& artifact) {
  write_file_atomic(path, serialize_artifact(artifact));
  return artifact_hash(artifact);
}

Artifact read_artifact(const std::filesystem::path& path) { return parse_artifact(read_file(path)); }

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    fail(ErrorCode::IoError, "SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int written = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                      reinterpret_cast<const unsigned char*>(bytes.data()),
                                      static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(written));
  return out;
}

std::string format_double(double value) {
  // Shortest form that parses back to the same double.
  char buffer[64];
  const auto res = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, res.ptr);
}

}  // namespace latent_atlas
