// Command-line front end: training, sampling, bases, edits, transport,
// analyses and the HTTP service, all against one workspace directory.

#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "latent_atlas/commands.hpp"
#include "latent_atlas/error.hpp"
#include "latent_atlas/service.hpp"

namespace la = latent_atlas;
using nlohmann::json;

namespace {

std::string join_doubles(const la::Tensor& t) {
  std::string out;
  for (std::size_t i = 0; i < t.size(); ++i) out += (i ? "," : "") + la::format_double(t[i]);
  return out;
}

void print_error(std::string_view code, const std::string& message, const std::string& constraint) {
  json err = {{"error", code}, {"message", message}};
  if (!constraint.empty()) err["constraint"] = constraint;
  std::cerr << err.dump() << std::endl;
}

la::ProgressFn progress_printer(bool enabled) {
  if (!enabled) return {};
  return [last = -1](double f) mutable {
    const int pct = static_cast<int>(f * 100.0);
    if (pct / 10 != last / 10) {
      std::cerr << "progress " << pct << "%\n";
      last = pct;
    }
  };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent-atlas: local geometry of diffusion-model latent spaces"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string workspace_path = la::default_workspace_path().string();
  std::string config_path;
  bool show_progress = false;
  app.add_option("-w,--workspace", workspace_path, "Workspace directory (default: $LATENT_ATLAS_WORKSPACE or ./workspace)");
  app.add_option("-c,--config", config_path, "Run configuration file");
  app.add_flag("--progress", show_progress, "Report progress on stderr");

  auto* ws_cmd = app.add_subcommand("workspace", "Workspace maintenance");
  ws_cmd->require_subcommand(1);
  auto* ws_init = ws_cmd->add_subcommand("init", "Create the workspace layout");
  auto* ws_list = ws_cmd->add_subcommand("list", "List stored artifacts");
  std::string list_kind;
  ws_list->add_option("--kind", list_kind, "Only this artifact kind");
  auto* ws_verify = ws_cmd->add_subcommand("verify", "Recompute every content hash");
  auto* ws_gc = ws_cmd->add_subcommand("gc", "Remove temp files and orphaned artifacts");

  auto* cfg_cmd = app.add_subcommand("config", "Configuration helpers");
  cfg_cmd->require_subcommand(1);
  auto* cfg_check = cfg_cmd->add_subcommand("check", "Validate the configuration given by --config");
  auto* cfg_show = cfg_cmd->add_subcommand("show", "Print the effective configuration");
  auto* cfg_keys = cfg_cmd->add_subcommand("keys", "List every configuration key");

  auto* train_cmd = app.add_subcommand("train", "Train a model and store it");
  std::string train_config;
  train_cmd->add_option("--config", train_config, "Run configuration file");

  auto* sample_cmd = app.add_subcommand("sample", "Generate samples with DDIM");
  std::string model;
  std::size_t count = 16;
  std::optional<double> eta;
  std::uint64_t seed = 0;
  sample_cmd->add_option("--model", model, "Model hash or prefix")->required();
  sample_cmd->add_option("--count", count, "Number of samples");
  sample_cmd->add_option("--eta", eta, "DDIM stochasticity");
  sample_cmd->add_option("--seed", seed, "Noise seed");

  auto* invert_cmd = app.add_subcommand("invert", "Store the DDIM inversion trajectory of a dataset sample");
  std::size_t sample_index = 0;
  invert_cmd->add_option("--model", model, "Model hash or prefix")->required();
  invert_cmd->add_option("--sample-index", sample_index, "Dataset sample")->required();

  auto* basis_cmd = app.add_subcommand("basis", "Compute and store a local basis");
  la::BasisRequest basis_req;
  basis_cmd->add_option("--model", basis_req.model, "Model hash or prefix")->required();
  basis_cmd->add_option("--sample-index", basis_req.sample_index, "Dataset sample")->required();
  basis_cmd->add_option("--t", basis_req.t_frac, "Timestep as a fraction of T")->required();
  basis_cmd->add_option("--n", basis_req.n, "Basis size")->required();
  basis_cmd->add_option("--seed", basis_req.seed, "Seed for the initial subspace and boosting noise");

  auto* edit_cmd = app.add_subcommand("edit", "Run the editing pipeline");
  la::EditCommand edit;
  std::string method = "x_space";
  std::optional<double> gamma;
  edit_cmd->add_option("--model", edit.model, "Model hash or prefix")->required();
  edit_cmd->add_option("--sample-index", edit.sample_index, "Dataset sample")->required();
  edit_cmd->add_option("--t-edit", edit.t_edit_frac, "Edit timestep as a fraction of T")->required();
  edit_cmd->add_option("--dir", edit.direction, "Basis direction index")->required();
  edit_cmd->add_option("--gamma", gamma, "Edit strength (default depends on --t-edit)");
  edit_cmd->add_option("--method", method, "x_space or direct")->check(CLI::IsMember({"x_space", "direct", "x_space_guidance", "direct_addition"}));
  edit_cmd->add_option("--n", edit.n, "Basis size");
  edit_cmd->add_option("--repeat", edit.repeat, "Number of guidance steps");
  edit_cmd->add_option("--seed", edit.seed, "Seed");

  auto* transport_cmd = app.add_subcommand("transport", "Transport a direction between two stored bases");
  la::TransportCommand transport;
  bool no_renormalize = false;
  transport_cmd->add_option("--src-basis", transport.src_basis, "Source basis hash")->required();
  transport_cmd->add_option("--dst-basis", transport.dst_basis, "Destination basis hash")->required();
  transport_cmd->add_option("--dir", transport.direction, "Source direction index")->required();
  transport_cmd->add_flag("--inverse-sigma", transport.options.inverse_sigma_weighting, "Weight by 1/sigma_j");
  transport_cmd->add_flag("--no-renormalize", no_renormalize, "Keep the transported length");

  auto* analyze_cmd = app.add_subcommand("analyze", "Write an analysis table");
  la::AnalyzeCommand analyze;
  analyze_cmd->add_option("kind", analyze.kind, "psd | samples | timesteps | datasets | transport")
      ->required()
      ->check(CLI::IsMember({"psd", "samples", "timesteps", "datasets", "transport"}));
  analyze_cmd->add_option("--model", analyze.models, "Model hash (repeat for datasets)")->required();
  analyze_cmd->add_option("--sample-index", analyze.sample_index, "Dataset sample for psd and timesteps");
  analyze_cmd->add_option("--count", analyze.count, "Samples for samples, datasets and transport");
  analyze_cmd->add_option("--t", analyze.t_fracs, "Timesteps as fractions of T")->delimiter(',');
  analyze_cmd->add_option("--n", analyze.n, "Basis size");
  analyze_cmd->add_option("--seed", analyze.seed, "Seed");

  auto* serve_cmd = app.add_subcommand("serve", "Start the HTTP service");
  la::ServiceOptions serve_opts;
  std::string ui_dir;
  serve_cmd->add_option("--port", serve_opts.port, "Port (0 picks a free one)");
  serve_cmd->add_option("--host", serve_opts.host, "Bind address");
  serve_cmd->add_option("--ui-dir", ui_dir, "Static UI assets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("UsageError", e.what(), "");
    return 2;
  }

  try {
    const std::string effective_config = !train_config.empty() ? train_config : config_path;
    la::RunConfig config = effective_config.empty() ? la::parse_config("") : la::load_config(effective_config);
    if (app.get_option("--workspace")->count() == 0 && !config.workspace.empty() &&
        std::getenv("LATENT_ATLAS_WORKSPACE") == nullptr) {
      workspace_path = config.workspace;
    }
    const la::ProgressFn progress = progress_printer(show_progress);

    if (*cfg_cmd) {
      if (*cfg_keys) {
        std::cout << la::config_reference();
      } else if (*cfg_check) {
        la::validate_config(config);
        std::cout << "valid\n";
      } else if (*cfg_show) {
        std::cout << la::config_to_text(config);
      }
      return 0;
    }

    if (*ws_init) {
      la::Workspace::init(workspace_path);
      std::cout << "workspace: " << workspace_path << "\n";
      return 0;
    }
    const la::Workspace ws = la::Workspace::open(workspace_path);

    if (*ws_list) {
      for (const la::ArtifactInfo& info : ws.list(list_kind)) {
        std::cout << info.hash << "  " << info.kind << "  " << info.bytes << "\n";
      }
    } else if (*ws_verify) {
      bool all_ok = true;
      for (const la::VerifyEntry& e : ws.verify()) {
        std::cout << (e.ok ? "ok       " : "CORRUPT  ") << e.path.filename().string();
        if (!e.ok) std::cout << "  " << e.error;
        std::cout << "\n";
        all_ok = all_ok && e.ok;
      }
      if (!all_ok) la::fail(la::ErrorCode::CorruptArtifact, "workspace holds corrupt artifacts");
    } else if (*ws_gc) {
      for (const auto& p : ws.gc().removed) std::cout << "removed " << p.string() << "\n";
    } else if (*train_cmd) {
      const la::TrainOutcome out = la::run_train(ws, config, progress);
      std::cout << "model: " << out.hash << "\n";
      std::cout << "initial_loss: " << la::format_double(out.initial_loss) << "\n";
      std::cout << "final_loss: " << la::format_double(out.final_loss) << "\n";
    } else if (*sample_cmd) {
      const la::SampleOutcome out = la::run_sample(ws, config, model, count, eta, seed);
      std::cout << "samples: " << out.hash << "\n";
      for (std::size_t i = 0; i < out.samples.rows(); ++i) {
        std::cout << join_doubles(out.samples.row_tensor(i)) << "\n";
      }
    } else if (*invert_cmd) {
      std::cout << "trajectory: " << la::run_invert(ws, config, model, sample_index) << "\n";
    } else if (*basis_cmd) {
      const la::BasisOutcome out = la::run_basis(ws, config, basis_req, progress);
      std::cout << "basis: " << out.hash << "\n";
      std::cout << "t: " << out.basis.t << "\n";
      std::cout << "sigma: " << join_doubles(out.basis.sigma) << "\n";
      std::cout << "sigma_verified: " << join_doubles(out.basis.sigma_verified) << "\n";
      std::cout << "converged: " << (out.basis.converged ? "true" : "false") << "\n";
      std::cout << "iterations: " << out.basis.iterations_used << "\n";
      std::cout << "final_residual: " << la::format_double(out.basis.final_residual) << "\n";
    } else if (*edit_cmd) {
      edit.method = la::parse_edit_method(method);
      edit.gamma = gamma;
      const la::EditOutcome out = la::run_edit(ws, config, edit, progress);
      std::cout << "edit: " << out.hash << "\n";
      std::cout << "basis: " << out.basis_hash << "\n";
      std::cout << "t_edit: " << out.result.t_edit << "\n";
      std::cout << "gamma: " << la::format_double(out.result.gamma) << "\n";
      std::cout << "reconstructed_hash: " << la::sha256_hex(la::tensor_bytes(out.result.reconstructed)) << "\n";
      std::cout << "edited_hash: " << la::sha256_hex(la::tensor_bytes(out.result.edited)) << "\n";
      std::cout << "edited: " << join_doubles(out.result.edited) << "\n";
    } else if (*transport_cmd) {
      transport.options.renormalize = !no_renormalize;
      const la::TransportOutcome out = la::run_transport(ws, transport);
      std::cout << "direction: " << out.hash << "\n";
      std::cout << "distortion_angle: " << la::format_double(out.result.distortion_angle) << "\n";
      std::cout << "latent_angle: " << la::format_double(out.result.latent_angle) << "\n";
    } else if (*analyze_cmd) {
      const la::AnalyzeOutcome out = la::run_analyze(ws, config, analyze);
      std::cout << "table: " << out.path.string() << "\n";
      std::cout << "rows: " << out.table.rows.size() << "\n";
      if (out.trend) {
        std::cout << "spearman_rho: " << la::format_double(out.trend->rho) << "\n";
        std::cout << "p_value: " << la::format_double(out.trend->p_value) << "\n";
      }
    } else if (*serve_cmd) {
      if (!ui_dir.empty()) serve_opts.static_dir = ui_dir;
      la::Service service(ws, config, serve_opts);
      const int port = service.bind();
      std::cout << "listening on " << serve_opts.host << ":" << port << std::endl;
      service.listen();
    }
    return 0;
  } catch (const la::Error& e) {
    print_error(la::error_code_name(e.code()), e.what(), e.detail());
    return 1;
  } catch (const std::exception& e) {
    print_error("InternalError", e.what(), "");
    return 1;
  }
}
