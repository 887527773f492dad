#include "latent_atlas/commands.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "latent_atlas/error.hpp"

namespace latent_atlas {

namespace {

[[noreturn]] void invalid(const std::string& constraint, const std::string& message) {
  fail(ErrorCode::ValidationError, message, constraint);
}

double mean_of(const std::vector<double>& v, std::size_t begin, std::size_t end) {
  return std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(begin), v.begin() + static_cast<std::ptrdiff_t>(end),
                         0.0) /
         static_cast<double>(end - begin);
}

std::size_t timestep_of(double frac, const NoiseSchedule& schedule) {
  if (!(frac >= 0.0 && frac <= 1.0)) invalid("0<=t<=T", "timestep fraction must be in [0, 1]");
  return static_cast<std::size_t>(std::llround(frac * static_cast<double>(schedule.T)));
}

Tensor sample_row(const Dataset& ds, std::size_t index) {
  if (index >= ds.samples.rows()) {
    invalid("sample_index<count", "sample index " + std::to_string(index) + " is outside the dataset (" +
                                      std::to_string(ds.samples.rows()) + " samples)");
  }
  return ds.samples.row_tensor(index);
}

// Distinct indices drawn uniformly without replacement, in draw order.
std::vector<std::size_t> choose_indices(std::size_t population, std::size_t count, std::uint64_t seed) {
  if (count > population) invalid("count<=dataset", "cannot choose more samples than the dataset holds");
  std::vector<std::size_t> all(population);
  std::iota(all.begin(), all.end(), 0);
  SeededRng rng(seed);
  for (std::size_t i = 0; i < count; ++i) std::swap(all[i], all[i + rng.index(population - i)]);
  all.resize(count);
  return all;
}

Tensor rows_of(const Tensor& samples, const std::vector<std::size_t>& indices) {
  std::vector<Tensor> rows;
  for (std::size_t i : indices) rows.push_back(samples.row_tensor(i));
  return stack_rows(rows);
}

std::vector<std::size_t> timesteps_of(const std::vector<double>& fracs, const NoiseSchedule& schedule) {
  std::vector<std::size_t> ts;
  for (double f : fracs) ts.push_back(timestep_of(f, schedule));
  return ts;
}

IterationOptions basis_options(const RunConfig& config, std::size_t n, std::uint64_t seed) {
  IterationOptions o = config.basis;
  o.n = n;
  o.seed = seed;
  return o;
}

}  // namespace

StoredModel load_stored_model(const Workspace& ws, std::string_view hash_prefix) {
  const std::filesystem::path path = ws.locate(hash_prefix);
  Artifact artifact = ws.load(hash_prefix);
  if (artifact.kind != "model") fail(ErrorCode::NotFound, "artifact " + std::string(hash_prefix) + " is not a model");
  StoredModel stored;
  stored.hash = path.stem().string();
  stored.model = model_from_artifact(artifact);
  const Manifest& mf = artifact.manifest;
  stored.schedule = make_linear_schedule(mf.get_uint("schedule.T"), mf.get_double("schedule.beta_start"),
                                         mf.get_double("schedule.beta_end"));
  stored.dataset = dataset_spec_from_manifest(mf);
  stored.manifest = mf;
  return stored;
}

std::size_t resolve_basis_size(const StoredModel& stored, const RunConfig& config, std::optional<std::size_t> n) {
  if (n) return *n;
  return std::min({config.basis.n, stored.model.input_dim(), stored.model.bottleneck_dim()});
}

Dataset model_dataset(const StoredModel& stored) { return generate_dataset(stored.dataset); }

Tensor latent_at(const StoredModel& stored, const Tensor& x0, std::size_t t, const TrajectoryConfig& trajectory) {
  const std::size_t snapped = snap_to_grid(timestep_grid(stored.schedule.T, trajectory.num_steps), t);
  const Tensor x_T = ddim_invert(stored.model, stored.schedule, x0, trajectory.num_steps);
  SeededRng rng(trajectory.seed);
  return ddim_sample_segment(stored.model, stored.schedule, x_T, stored.schedule.T, snapped, trajectory, rng);
}

TrainOutcome run_train(const Workspace& ws, const RunConfig& config, const ProgressFn& progress) {
  validate_config(config);
  const Dataset ds = generate_dataset(config.dataset);
  const NoiseSchedule schedule = config.make_schedule();
  DenoiserConfig mc = config.model;
  mc.input_dim = data_dim(config.dataset);
  mc.timesteps = config.schedule.T;
  DenoiserModel init = make_denoiser(mc, config.train.seed);
  const std::size_t steps = config.train.steps;
  TrainResult trained = train(std::move(init), ds.samples, schedule, config.train, [&](std::size_t step, double) {
    if (progress && (step + 1) % 100 == 0) progress(static_cast<double>(step + 1) / static_cast<double>(steps));
  });

  TrainOutcome outcome;
  const std::vector<double>& trace = trained.loss_trace;
  const std::size_t window = std::min<std::size_t>(100, trace.size());
  outcome.initial_loss = mean_of(trace, 0, window);
  outcome.final_loss = mean_of(trace, trace.size() - window, trace.size());

  Artifact artifact = model_to_artifact(trained.model);
  Manifest& mf = artifact.manifest;
  write_dataset_manifest(mf, config.dataset);
  mf.set("schedule.T", config.schedule.T);
  mf.set("schedule.beta_start", config.schedule.beta_start);
  mf.set("schedule.beta_end", config.schedule.beta_end);
  mf.set("train.steps", config.train.steps);
  mf.set("train.batch_size", config.train.batch_size);
  mf.set("train.learn_rate", config.train.learn_rate);
  mf.set("train.beta1", config.train.beta1);
  mf.set("train.beta2", config.train.beta2);
  mf.set("train.eps_adam", config.train.eps_adam);
  mf.set("train.seed", config.train.seed);
  mf.set("train.initial_loss", outcome.initial_loss);
  mf.set("train.final_loss", outcome.final_loss);
  mf.set("provenance.config", ws.store_config(config));
  outcome.hash = ws.store(artifact);
  return outcome;
}

SampleOutcome run_sample(const Workspace& ws, const RunConfig& config, std::string_view model, std::size_t count,
                         std::optional<double> eta, std::uint64_t seed) {
  if (count == 0) invalid("count>=1", "count must be >= 1");
  const StoredModel stored = load_stored_model(ws, model);
  TrajectoryConfig tc = config.trajectory(seed);
  if (eta) tc.eta = *eta;
  if (!(tc.eta >= 0.0 && tc.eta <= 1.0)) invalid("0<=eta<=1", "eta must be in [0, 1]");
  SeededRng noise(mix_seed(seed, 0x5a4d));
  const Tensor x_T = noise.normal({count, stored.model.input_dim()});
  SampleOutcome outcome;
  outcome.samples = ddim_generate(stored.model, stored.schedule, x_T, tc);
  Artifact artifact;
  artifact.kind = "samples";
  artifact.manifest.set("samples.count", count);
  artifact.manifest.set("samples.seed", seed);
  artifact.manifest.set("sampling.num_steps", tc.num_steps);
  artifact.manifest.set("sampling.eta", tc.eta);
  artifact.manifest.set("sampling.t_boost", tc.t_boost);
  artifact.manifest.set("provenance.model", stored.hash);
  artifact.add_blob("samples", outcome.samples);
  outcome.hash = ws.store(artifact);
  return outcome;
}

std::string run_invert(const Workspace& ws, const RunConfig& config, std::string_view model, std::size_t sample_index) {
  const StoredModel stored = load_stored_model(ws, model);
  const Tensor x0 = sample_row(model_dataset(stored), sample_index);
  Trajectory traj;
  ddim_invert(stored.model, stored.schedule, x0, config.sampling.num_steps, &traj);
  Artifact artifact = trajectory_to_artifact(traj);
  artifact.manifest.set("provenance.model", stored.hash);
  artifact.manifest.set("provenance.sample_index", sample_index);
  artifact.manifest.set("sampling.num_steps", config.sampling.num_steps);
  return ws.store(artifact);
}

void validate_basis_request(const StoredModel& stored, const RunConfig& config, const BasisRequest& request) {
  const std::size_t d = stored.model.input_dim();
  const std::size_t dh = stored.model.bottleneck_dim();
  if (request.sample_index >= stored.dataset.count) invalid("sample_index<count", "sample index is outside the dataset");
  if (!(request.t_frac > 0.0 && request.t_frac <= 1.0)) invalid("0<t<=T", "t must be a fraction in (0, 1]");
  if (request.n == 0) invalid("n>=1", "n must be >= 1");
  if (request.n > std::min(d, dh)) {
    invalid("n<=min(d,D_h)", "n = " + std::to_string(request.n) + " exceeds min(d, D_h) = " +
                                 std::to_string(std::min(d, dh)));
  }
  if (config.sampling.num_steps == 0 || config.sampling.num_steps > stored.schedule.T) {
    invalid("num_steps<=T", "sampling.num_steps must be in 1..T");
  }
}

BasisOutcome run_basis(const Workspace& ws, const RunConfig& config, const BasisRequest& request,
                       const ProgressFn& progress) {
  const StoredModel stored = load_stored_model(ws, request.model);
  validate_basis_request(stored, config, request);
  const Tensor x0 = sample_row(model_dataset(stored), request.sample_index);
  const TrajectoryConfig tc = config.trajectory(request.seed);
  const std::size_t t = snap_to_grid(timestep_grid(stored.schedule.T, tc.num_steps),
                                     timestep_of(request.t_frac, stored.schedule));
  if (progress) progress(0.05);
  const Tensor x_t = latent_at(stored, x0, t, tc);
  if (progress) progress(0.1);
  const IterationOptions opts = basis_options(config, request.n, request.seed);
  BasisOutcome outcome;
  outcome.basis = local_basis(stored.model, x_t, t, opts, [&](std::size_t it, std::size_t max_it, double) {
    if (progress) progress(0.1 + 0.9 * static_cast<double>(it) / static_cast<double>(max_it));
  });
  Artifact artifact = basis_to_artifact(outcome.basis);
  artifact.manifest.set("provenance.model", stored.hash);
  artifact.manifest.set("provenance.sample_index", request.sample_index);
  artifact.manifest.set("provenance.seed", request.seed);
  artifact.manifest.set("provenance.num_steps", tc.num_steps);
  artifact.manifest.set("provenance.t_boost", tc.t_boost);
  artifact.manifest.set("basis.min_iter", opts.min_iter);
  artifact.manifest.set("basis.max_iter", opts.max_iter);
  artifact.manifest.set("basis.chunk_size", opts.chunk_size);
  artifact.manifest.set("basis.threshold", opts.convergence_threshold);
  outcome.hash = ws.store(artifact);
  return outcome;
}

EditRequest make_edit_request(const StoredModel& stored, const RunConfig& config, const EditCommand& command) {
  if (command.sample_index >= stored.dataset.count) invalid("sample_index<count", "sample index is outside the dataset");
  if (!(command.t_edit_frac > 0.0 && command.t_edit_frac <= 1.0)) {
    invalid("0<t_edit<=T", "t_edit must be a fraction in (0, 1]");
  }
  EditRequest request;
  request.sample_index = command.sample_index;
  request.t_edit = timestep_of(command.t_edit_frac, stored.schedule);
  request.direction = command.direction;
  request.gamma = command.gamma ? *command.gamma : default_gamma(command.t_edit_frac);
  request.method = command.method;
  request.repeat_count = command.repeat;
  request.basis = basis_options(config, resolve_basis_size(stored, config, command.n), command.seed);
  request.trajectory = config.trajectory(command.seed);
  request.x0 = Tensor({stored.model.input_dim()});  // placeholder until the dataset is generated
  validate_edit_request(request, stored.model, stored.schedule);
  return request;
}

EditOutcome run_edit(const Workspace& ws, const RunConfig& config, const EditCommand& command,
                     const ProgressFn& progress) {
  const StoredModel stored = load_stored_model(ws, command.model);
  EditRequest request = make_edit_request(stored, config, command);
  request.x0 = sample_row(model_dataset(stored), command.sample_index);
  if (progress) progress(0.05);
  EditOutcome outcome;
  outcome.result = edit_pipeline(stored.model, stored.schedule, request, [&](std::size_t it, std::size_t max_it, double) {
    if (progress) progress(0.1 + 0.8 * static_cast<double>(it) / static_cast<double>(max_it));
  });

  Artifact basis = basis_to_artifact(outcome.result.basis);
  basis.manifest.set("provenance.model", stored.hash);
  basis.manifest.set("provenance.sample_index", command.sample_index);
  basis.manifest.set("provenance.seed", command.seed);
  basis.manifest.set("provenance.num_steps", request.trajectory.num_steps);
  basis.manifest.set("provenance.t_boost", request.trajectory.t_boost);
  outcome.basis_hash = ws.store(basis);

  Artifact artifact = edit_to_artifact(outcome.result);
  artifact.manifest.set("provenance.model", stored.hash);
  artifact.manifest.set("provenance.basis", outcome.basis_hash);
  artifact.manifest.set("provenance.sample_index", command.sample_index);
  artifact.manifest.set("provenance.seed", command.seed);
  artifact.manifest.set("provenance.num_steps", request.trajectory.num_steps);
  artifact.manifest.set("provenance.t_boost", request.trajectory.t_boost);
  outcome.hash = ws.store(artifact);
  if (progress) progress(1.0);
  return outcome;
}

TransportOutcome run_transport(const Workspace& ws, const TransportCommand& command) {
  const std::filesystem::path src_path = ws.locate(command.src_basis);
  const std::filesystem::path dst_path = ws.locate(command.dst_basis);
  const Artifact src_art = ws.load(command.src_basis);
  const Artifact dst_art = ws.load(command.dst_basis);
  if (src_art.kind != "basis" || dst_art.kind != "basis") invalid("basis artifacts", "transport needs two basis artifacts");
  const LocalBasis src = basis_from_artifact(src_art);
  const LocalBasis dst = basis_from_artifact(dst_art);
  if (command.direction >= src.n) invalid("dir<n", "direction index must be below the source basis size");
  if (src.V.cols() != dst.V.cols() || src.U.cols() != dst.U.cols()) {
    invalid("same ambient dims", "source and destination bases have different dimensions");
  }
  TransportOutcome outcome;
  outcome.result = transport(src, dst, command.direction, command.options);
  Artifact artifact;
  artifact.kind = "direction";
  Manifest& mf = artifact.manifest;
  mf.set("transport.direction", command.direction);
  mf.set("transport.distortion_angle", outcome.result.distortion_angle);
  mf.set("transport.latent_angle", outcome.result.latent_angle);
  mf.set("transport.geodesic_distance", geodesic_distance(src.U, dst.U));
  mf.set("transport.inverse_sigma_weighting", command.options.inverse_sigma_weighting);
  mf.set("transport.renormalize", command.options.renormalize);
  mf.set("provenance.src_basis", src_path.stem().string());
  mf.set("provenance.dst_basis", dst_path.stem().string());
  if (auto m = src_art.manifest.find("provenance.model")) mf.set("provenance.model", *m);
  artifact.add_blob("v", outcome.result.v);
  artifact.add_blob("u_projected", outcome.result.u_projected);
  artifact.add_blob("coeffs", outcome.result.coeffs);
  outcome.hash = ws.store(artifact);
  return outcome;
}

AnalyzeOutcome run_analyze(const Workspace& ws, const RunConfig& config, const AnalyzeCommand& command) {
  if (command.models.empty()) invalid("model", "analyze needs a model");
  AnalysisOptions options;
  const StoredModel stored = load_stored_model(ws, command.models.front());
  const std::size_t n = resolve_basis_size(stored, config, command.n);
  options.basis = basis_options(config, n, command.seed);
  options.num_steps = config.sampling.num_steps;
  AnalyzeOutcome out;

  if (n > std::min(stored.model.input_dim(), stored.model.bottleneck_dim())) {
    invalid("n<=min(d,D_h)", "n exceeds min(d, D_h)");
  }
  const Dataset ds = model_dataset(stored);
  auto fracs_or = [&](std::vector<double> fallback) { return command.t_fracs.empty() ? fallback : command.t_fracs; };
  const std::vector<double> decile = {1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1};

  if (command.kind == "psd") {
    const std::vector<std::size_t> ts = timesteps_of(fracs_or({1.0, 0.8, 0.6, 0.4, 0.2}), stored.schedule);
    const Tensor x0 = sample_row(ds, command.sample_index);
    const std::vector<Tensor> latents = invert_to_timesteps(stored.model, stored.schedule, x0, ts, options.num_steps);
    const std::vector<std::size_t> grid = timestep_grid(stored.schedule.T, options.num_steps);
    std::vector<LocalBasis> bases;
    for (std::size_t a = 0; a < ts.size(); ++a) {
      bases.push_back(local_basis(stored.model, latents[a].row_tensor(0), snap_to_grid(grid, ts[a]), options.basis));
    }
    out.table = basis_psd(bases, grid_shape(stored.dataset));
    out.table.provenance.set("provenance.sample_index", command.sample_index);
  } else if (command.kind == "samples") {
    const std::vector<std::size_t> ts = timesteps_of(fracs_or(decile), stored.schedule);
    const Tensor samples = rows_of(ds.samples, choose_indices(ds.samples.rows(), command.count, command.seed));
    out.table = sample_discrepancy(stored.model, stored.schedule, samples, ts, options);
    std::vector<double> elapsed, dist;
    for (const auto& row : out.table.rows) {
      elapsed.push_back(static_cast<double>(stored.schedule.T) - row[0]);
      dist.push_back(row[1]);
    }
    out.trend = spearman(elapsed, dist, 2000, command.seed);
  } else if (command.kind == "timesteps") {
    const std::vector<std::size_t> ts = timesteps_of(fracs_or({1.0, 0.8, 0.6, 0.4, 0.2}), stored.schedule);
    out.table = timestep_distance_matrix(stored.model, stored.schedule, sample_row(ds, command.sample_index), ts,
                                         options);
    out.table.provenance.set("provenance.sample_index", command.sample_index);
  } else if (command.kind == "datasets") {
    if (command.models.size() < 2) invalid("models>=2", "analyze datasets needs at least two models");
    std::vector<StoredModel> loaded;
    for (const std::string& h : command.models) loaded.push_back(load_stored_model(ws, h));
    std::vector<LabeledModel> labeled;
    for (const StoredModel& m : loaded) {
      const Dataset mds = model_dataset(m);
      const std::size_t count = std::min(command.count, mds.samples.rows());
      labeled.push_back({m.hash, &m.model, &m.schedule,
                         rows_of(mds.samples, choose_indices(mds.samples.rows(), count, command.seed))});
    }
    const std::vector<std::size_t> ts = timesteps_of(fracs_or(decile), stored.schedule);
    out.table = dataset_consistency(labeled, ts, options);
  } else if (command.kind == "transport") {
    const std::vector<std::size_t> ts = timesteps_of(fracs_or({1.0, 0.8, 0.6}), stored.schedule);
    const Tensor samples = rows_of(ds.samples, choose_indices(ds.samples.rows(), command.count, command.seed));
    const std::vector<Tensor> latents = invert_to_timesteps(stored.model, stored.schedule, samples, ts, options.num_steps);
    const std::vector<std::size_t> grid = timestep_grid(stored.schedule.T, options.num_steps);
    std::vector<std::vector<LocalBasis>> bases(ts.size());
    for (std::size_t a = 0; a < ts.size(); ++a)
      for (std::size_t s = 0; s < samples.rows(); ++s)
        bases[a].push_back(local_basis(stored.model, latents[a].row_tensor(s), snap_to_grid(grid, ts[a]), options.basis));
    std::vector<BasisPair> pairs;
    for (std::size_t a = 0; a < ts.size(); ++a)
      for (std::size_t s = 0; s < samples.rows(); ++s)
        for (std::size_t r = s + 1; r < samples.rows(); ++r) pairs.push_back({&bases[a][s], &bases[a][r]});
    for (std::size_t a = 0; a + 1 < ts.size(); ++a)
      for (std::size_t s = 0; s < samples.rows(); ++s) pairs.push_back({&bases[a][s], &bases[a + 1][s]});
    out.table = transport_distortion(pairs, n);
    out.trend = spearman(out.table.column("distance"), out.table.column("angle"), 2000, command.seed);
  } else {
    invalid("analysis kind", "unknown analysis '" + command.kind + "' (psd|samples|timesteps|datasets|transport)");
  }

  for (std::size_t i = 0; i < command.models.size(); ++i) {
    out.table.provenance.set(i == 0 ? std::string("provenance.model") : "provenance.model." + std::to_string(i),
                             command.models[i]);
  }
  out.table.provenance.set("provenance.seed", command.seed);
  if (out.trend) {
    out.table.provenance.set("trend.spearman_rho", out.trend->rho);
    out.table.provenance.set("trend.p_value", out.trend->p_value);
    out.table.provenance.set("trend.count", out.trend->count);
  }
  out.path = write_table(ws.tables_dir(), out.table);
  return out;
}

}  // namespace latent_atlas
