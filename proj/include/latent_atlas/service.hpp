#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "latent_atlas/config.hpp"
#include "latent_atlas/workspace.hpp"

namespace latent_atlas {

enum class JobStatus { queued, running, done, failed };

std::string_view job_status_name(JobStatus status);

struct JobRecord {
  std::string id;
  std::string kind;  // basis | edit | transport
  JobStatus status = JobStatus::queued;
  double progress = 0.0;
  std::string result;  // artifact hash once done
  std::string error;   // message once failed
  std::string constraint;
};

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::optional<std::filesystem::path> static_dir;  // UI assets, served at /
};

/// HTTP/JSON front end under /v1/. Compute runs on one worker thread; a
/// mutating job submitted while another is queued or running gets 409.
class Service {
 public:
  Service(Workspace workspace, RunConfig defaults, ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds the listening socket and returns the bound port.
  int bind();
  /// Serves until stop() is called. bind() must have succeeded.
  void listen();
  /// bind() then listen() on a background thread. Returns the port.
  int start();
  void stop();

  std::optional<JobRecord> job(const std::string& id) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace latent_atlas
