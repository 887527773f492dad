#include "latent_atlas/service.hpp"

#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "latent_atlas/commands.hpp"
#include "latent_atlas/error.hpp"

namespace latent_atlas {

using json = nlohmann::json;

std::string_view job_status_name(JobStatus status) {
  switch (status) {
    case JobStatus::queued: return "queued";
    case JobStatus::running: return "running";
    case JobStatus::done: return "done";
    case JobStatus::failed: return "failed";
  }
  return "unknown";
}

namespace {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::ValidationError:
    case ErrorCode::BadOptions:
    case ErrorCode::ParseError:
    case ErrorCode::BadSpec:
    case ErrorCode::BadTimestep:
    case ErrorCode::DimMismatch:
      return 400;
    case ErrorCode::NotFound: return 404;
    case ErrorCode::Conflict: return 409;
    default: return 500;
  }
}

json error_body(std::string_view code, const std::string& message, const std::string& constraint) {
  json body = {{"error", code}, {"message", message}};
  if (!constraint.empty()) body["constraint"] = constraint;
  return body;
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json job_json(const JobRecord& job) {
  json j = {{"id", job.id},
            {"kind", job.kind},
            {"status", job_status_name(job.status)},
            {"progress", job.progress}};
  j["result"] = job.result.empty() ? json(nullptr) : json(job.result);
  j["error"] = job.error.empty() ? json(nullptr) : json(job.error);
  if (!job.constraint.empty()) j["constraint"] = job.constraint;
  return j;
}

json manifest_json(const Manifest& mf) {
  json out = json::object();
  for (const auto& [key, value] : mf.entries()) out[key] = value;
  return out;
}

json tensor_json(const Tensor& t) {
  return {{"shape", t.shape()}, {"dtype", "float64-le"}, {"data", base64_encode(tensor_bytes(t))}};
}

// Required request fields; a missing or mistyped field is a 400 naming it.
template <typename T>
T field(const json& body, const char* name) {
  if (!body.contains(name)) fail(ErrorCode::ValidationError, std::string("missing field '") + name + "'", name);
  try {
    return body.at(name).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::ValidationError, std::string("field '") + name + "' has the wrong type", name);
  }
}

template <typename T>
T field_or(const json& body, const char* name, T fallback) {
  return body.contains(name) && !body.at(name).is_null() ? field<T>(body, name) : fallback;
}

std::size_t index_field(const json& body, const char* name) {
  const json& v = body.contains(name) ? body.at(name) : json();
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    fail(ErrorCode::ValidationError, std::string("field '") + name + "' must be a non-negative integer", name);
  }
  return v.get<std::size_t>();
}

json parse_body(const httplib::Request& req) {
  try {
    json body = json::parse(req.body);
    if (!body.is_object()) fail(ErrorCode::ValidationError, "request body must be a JSON object", "body");
    return body;
  } catch (const json::exception&) {
    fail(ErrorCode::ValidationError, "request body is not valid JSON", "body");
  }
}

}  // namespace

struct Service::Impl {
  using Task = std::function<std::string(const ProgressFn&)>;

  Workspace ws;
  RunConfig defaults;
  ServiceOptions options;
  httplib::Server server;

  mutable std::mutex mutex;
  std::condition_variable cv;
  std::map<std::string, JobRecord> jobs;
  std::deque<std::pair<std::string, Task>> queue;
  std::size_t next_id = 1;
  bool stopping = false;
  std::thread worker;
  std::thread listener;
  int port = -1;

  Impl(Workspace w, RunConfig d, ServiceOptions o) : ws(std::move(w)), defaults(std::move(d)), options(std::move(o)) {
    worker = std::thread([this] { work(); });
    routes();
  }

  void work() {
    for (;;) {
      std::pair<std::string, Task> next;
      {
        std::unique_lock lock(mutex);
        cv.wait(lock, [this] { return stopping || !queue.empty(); });
        if (stopping) return;
        next = std::move(queue.front());
        queue.pop_front();
        jobs[next.first].status = JobStatus::running;
      }
      const std::string& id = next.first;
      auto progress = [this, &id](double f) {
        std::lock_guard lock(mutex);
        jobs[id].progress = std::clamp(f, 0.0, 1.0);
      };
      try {
        const std::string result = next.second(progress);
        std::lock_guard lock(mutex);
        JobRecord& job = jobs[id];
        job.result = result;
        job.progress = 1.0;
        job.status = JobStatus::done;
      } catch (const Error& e) {
        std::lock_guard lock(mutex);
        JobRecord& job = jobs[id];
        job.error = std::string(error_code_name(e.code())) + ": " + e.what();
        job.constraint = e.detail();
        job.status = JobStatus::failed;
      } catch (const std::exception& e) {
        std::lock_guard lock(mutex);
        JobRecord& job = jobs[id];
        job.error = e.what();
        job.status = JobStatus::failed;
      }
    }
  }

  std::string submit(const std::string& kind, Task task) {
    std::lock_guard lock(mutex);
    for (const auto& [id, job] : jobs) {
      if (job.status == JobStatus::queued || job.status == JobStatus::running) {
        fail(ErrorCode::Conflict, "job " + id + " is still " + std::string(job_status_name(job.status)), "one job at a time");
      }
    }
    JobRecord job;
    job.id = "job-" + std::to_string(next_id++);
    job.kind = kind;
    jobs[job.id] = job;
    queue.emplace_back(job.id, std::move(task));
    cv.notify_one();
    return job.id;
  }

  // Wraps a handler so library errors become JSON error responses.
  httplib::Server::Handler guarded(std::function<void(const httplib::Request&, httplib::Response&)> fn) {
    return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const Error& e) {
        send_json(res, http_status(e.code()), error_body(error_code_name(e.code()), e.what(), e.detail()));
      } catch (const std::exception& e) {
        send_json(res, 500, error_body("InternalError", e.what(), ""));
      }
    };
  }

  void routes() {
    server.Get("/v1/models", guarded([this](const httplib::Request&, httplib::Response& res) {
      json models = json::array();
      for (const ArtifactInfo& info : ws.list("model")) {
        const Artifact a = ws.load(info.hash);
        models.push_back({{"hash", info.hash}, {"manifest", manifest_json(a.manifest)}});
      }
      send_json(res, 200, {{"models", models}});
    }));

    server.Get("/v1/samples", guarded([this](const httplib::Request& req, httplib::Response& res) {
      if (!req.has_param("model")) fail(ErrorCode::ValidationError, "missing query parameter 'model'", "model");
      const StoredModel stored = load_stored_model(ws, req.get_param_value("model"));
      std::size_t count = 256;
      if (req.has_param("count")) {
        const std::string text = req.get_param_value("count");
        if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos) {
          fail(ErrorCode::ValidationError, "count must be a non-negative integer", "count");
        }
        count = std::stoull(text);
      }
      const Dataset ds = model_dataset(stored);
      count = std::min(count, ds.samples.rows());
      Tensor head({count, ds.samples.cols()});
      for (std::size_t i = 0; i < count; ++i) head.set_row(i, ds.samples.row(i));
      json body = {{"model", stored.hash},
                   {"kind", dataset_kind_name(stored.dataset.kind)},
                   {"d", ds.samples.cols()},
                   {"grid", grid_shape(stored.dataset)},
                   {"count", count},
                   {"labels", std::vector<std::size_t>(ds.labels.begin(), ds.labels.begin() + static_cast<std::ptrdiff_t>(count))},
                   {"samples", tensor_json(head)}};
      send_json(res, 200, body);
    }));

    server.Post("/v1/jobs/basis", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      BasisRequest request;
      request.model = field<std::string>(body, "model");
      request.sample_index = index_field(body, "sample_index");
      request.t_frac = field<double>(body, "t");
      request.n = index_field(body, "n");
      request.seed = field_or<std::uint64_t>(body, "seed", 0);
      const StoredModel stored = load_stored_model(ws, request.model);
      validate_basis_request(stored, defaults, request);
      const std::string id = submit("basis", [this, request](const ProgressFn& progress) {
        return run_basis(ws, defaults, request, progress).hash;
      });
      send_json(res, 202, {{"id", id}});
    }));

    server.Post("/v1/jobs/edit", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      EditCommand command;
      command.model = field<std::string>(body, "model");
      command.sample_index = index_field(body, "sample_index");
      command.t_edit_frac = field<double>(body, "t_edit");
      command.direction = index_field(body, "dir");
      if (body.contains("gamma") && !body.at("gamma").is_null()) command.gamma = field<double>(body, "gamma");
      command.method = parse_edit_method(field_or<std::string>(body, "method", "x_space_guidance"));
      if (body.contains("n")) command.n = index_field(body, "n");
      command.repeat = body.contains("repeat") ? index_field(body, "repeat") : 1;
      command.seed = field_or<std::uint64_t>(body, "seed", 0);
      const StoredModel stored = load_stored_model(ws, command.model);
      make_edit_request(stored, defaults, command);
      const std::string id = submit("edit", [this, command](const ProgressFn& progress) {
        return run_edit(ws, defaults, command, progress).hash;
      });
      send_json(res, 202, {{"id", id}});
    }));

    server.Post("/v1/jobs/transport", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      TransportCommand command;
      command.src_basis = field<std::string>(body, "src_basis");
      command.dst_basis = field<std::string>(body, "dst_basis");
      command.direction = index_field(body, "dir");
      command.options.inverse_sigma_weighting = field_or<bool>(body, "inverse_sigma_weighting", false);
      command.options.renormalize = field_or<bool>(body, "renormalize", true);
      const Artifact src = ws.load(command.src_basis);
      const Artifact dst = ws.load(command.dst_basis);
      if (src.kind != "basis" || dst.kind != "basis") {
        fail(ErrorCode::ValidationError, "transport needs two basis artifacts", "basis artifacts");
      }
      if (command.direction >= src.manifest.get_uint("basis.n")) {
        fail(ErrorCode::ValidationError, "dir must be below the source basis size", "dir<n");
      }
      const std::string id = submit("transport", [this, command](const ProgressFn&) {
        return run_transport(ws, command).hash;
      });
      send_json(res, 202, {{"id", id}});
    }));

    server.Get(R"(/v1/jobs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      std::lock_guard lock(mutex);
      const auto it = jobs.find(id);
      if (it == jobs.end()) fail(ErrorCode::NotFound, "no job " + id);
      send_json(res, 200, job_json(it->second));
    }));

    server.Get(R"(/v1/artifacts/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string prefix = req.matches[1];
      const std::filesystem::path path = ws.locate(prefix);
      const Artifact a = ws.load(prefix);
      json blobs = json::array();
      for (const Blob& b : a.blobs) {
        json entry = tensor_json(b.data);
        entry["name"] = b.name;
        blobs.push_back(std::move(entry));
      }
      send_json(res, 200, {{"hash", path.stem().string()}, {"kind", a.kind}, {"manifest", manifest_json(a.manifest)},
                           {"blobs", blobs}});
    }));

    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) send_json(res, res.status, error_body("HttpError", "status " + std::to_string(res.status), ""));
    });

    if (options.static_dir) server.set_mount_point("/", options.static_dir->string());
  }
};

Service::Service(Workspace workspace, RunConfig defaults, ServiceOptions options)
    : impl_(std::make_unique<Impl>(std::move(workspace), std::move(defaults), std::move(options))) {}

Service::~Service() { stop(); }

int Service::bind() {
  if (impl_->options.port == 0) {
    impl_->port = impl_->server.bind_to_any_port(impl_->options.host);
  } else {
    impl_->port = impl_->server.bind_to_port(impl_->options.host, impl_->options.port) ? impl_->options.port : -1;
  }
  if (impl_->port < 0) fail(ErrorCode::IoError, "cannot bind " + impl_->options.host + ":" + std::to_string(impl_->options.port));
  return impl_->port;
}

void Service::listen() { impl_->server.listen_after_bind(); }

int Service::start() {
  const int port = bind();
  impl_->listener = std::thread([this] { listen(); });
  impl_->server.wait_until_ready();
  return port;
}

void Service::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->listener.joinable()) impl_->listener.join();
  {
    std::lock_guard lock(impl_->mutex);
    impl_->stopping = true;
  }
  impl_->cv.notify_all();
  if (impl_->worker.joinable()) impl_->worker.join();
}

std::optional<JobRecord> Service::job(const std::string& id) const {
  std::lock_guard lock(impl_->mutex);
  const auto it = impl_->jobs.find(id);
  if (it == impl_->jobs.end()) return std::nullopt;
  return it->second;
}

}  // namespace latent_atlas
