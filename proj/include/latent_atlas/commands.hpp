#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "latent_atlas/analysis.hpp"
#include "latent_atlas/config.hpp"
#include "latent_atlas/dataset.hpp"
#include "latent_atlas/editing.hpp"
#include "latent_atlas/workspace.hpp"

namespace latent_atlas {

/// Workflow entry points shared by the command line and the HTTP service.
/// Every function is a deterministic function of the workspace contents and
/// its arguments.

using ProgressFn = std::function<void(double fraction)>;

struct StoredModel {
  std::string hash;
  DenoiserModel model;
  NoiseSchedule schedule;
  DatasetSpec dataset;
  Manifest manifest;
};

StoredModel load_stored_model(const Workspace& ws, std::string_view hash_prefix);

/// An explicit n is returned unchanged; otherwise basis.n from the config,
/// capped at min(d, D_h) so small models still get a usable default.
std::size_t resolve_basis_size(const StoredModel& stored, const RunConfig& config, std::optional<std::size_t> n);

/// Regenerates the model's training set from its recorded spec.
Dataset model_dataset(const StoredModel& stored);

/// x_t for the given sample reached the way the edit pipeline reaches it:
/// invert to T, then sample down to the snapped t.
Tensor latent_at(const StoredModel& stored, const Tensor& x0, std::size_t t, const TrajectoryConfig& trajectory);

struct TrainOutcome {
  std::string hash;
  double initial_loss = 0.0;  // mean of the first 100 batch losses
  double final_loss = 0.0;    // mean of the last 100 batch losses
};

TrainOutcome run_train(const Workspace& ws, const RunConfig& config, const ProgressFn& progress = {});

struct SampleOutcome {
  std::string hash;
  Tensor samples;
};

SampleOutcome run_sample(const Workspace& ws, const RunConfig& config, std::string_view model, std::size_t count,
                         std::optional<double> eta, std::uint64_t seed);

std::string run_invert(const Workspace& ws, const RunConfig& config, std::string_view model, std::size_t sample_index);

struct BasisRequest {
  std::string model;
  std::size_t sample_index = 0;
  double t_frac = 1.0;
  std::size_t n = 10;
  std::uint64_t seed = 0;
};

struct BasisOutcome {
  std::string hash;
  LocalBasis basis;
};

/// Throws ValidationError naming the constraint for bad requests.
void validate_basis_request(const StoredModel& stored, const RunConfig& config, const BasisRequest& request);
BasisOutcome run_basis(const Workspace& ws, const RunConfig& config, const BasisRequest& request,
                       const ProgressFn& progress = {});

struct EditCommand {
  std::string model;
  std::size_t sample_index = 0;
  double t_edit_frac = 1.0;
  std::size_t direction = 0;
  std::optional<double> gamma;  // default from the t_edit fraction
  EditMethod method = EditMethod::x_space_guidance;
  std::optional<std::size_t> n;
  std::size_t repeat = 1;
  std::uint64_t seed = 0;
};

struct EditOutcome {
  std::string hash;
  std::string basis_hash;
  EditResult result;
};

EditRequest make_edit_request(const StoredModel& stored, const RunConfig& config, const EditCommand& command);
EditOutcome run_edit(const Workspace& ws, const RunConfig& config, const EditCommand& command,
                     const ProgressFn& progress = {});

struct TransportCommand {
  std::string src_basis;
  std::string dst_basis;
  std::size_t direction = 0;
  TransportOptions options;
};

struct TransportOutcome {
  std::string hash;
  TransportResult result;
};

TransportOutcome run_transport(const Workspace& ws, const TransportCommand& command);

struct AnalyzeCommand {
  std::string kind;                 // psd | samples | timesteps | datasets | transport
  std::vector<std::string> models;  // datasets takes two or more
  std::size_t sample_index = 0;
  std::size_t count = 15;
  std::vector<double> t_fracs;      // empty means a kind-specific default
  std::optional<std::size_t> n;
  std::uint64_t seed = 0;
};

struct AnalyzeOutcome {
  AnalysisTable table;
  std::filesystem::path path;
  std::optional<RankCorrelation> trend;
};

AnalyzeOutcome run_analyze(const Workspace& ws, const RunConfig& config, const AnalyzeCommand& command);

}  // namespace latent_atlas
