#include "latent_atlas/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "latent_atlas/diffusion.hpp"
#include "latent_atlas/error.hpp"
#include "latent_atlas/spectrum.hpp"

namespace latent_atlas {

void AnalysisTable::add_row(std::vector<double> row) {
  if (row.size() != columns.size()) fail(ErrorCode::BadOptions, "row width does not match the columns of " + name);
  for (double v : row)
    if (!std::isfinite(v)) fail(ErrorCode::BadOptions, "non-finite value in table " + name);
  rows.push_back(std::move(row));
}

std::size_t AnalysisTable::column_index(std::string_view column) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == column) return i;
  fail(ErrorCode::NotFound, "table " + name + " has no column '" + std::string(column) + "'");
}

std::vector<double> AnalysisTable::column(std::string_view column) const {
  const std::size_t c = column_index(column);
  std::vector<double> out;
  for (const auto& row : rows) out.push_back(row[c]);
  return out;
}

std::string table_to_csv(const AnalysisTable& table) {
  std::string out;
  for (std::size_t c = 0; c < table.columns.size(); ++c) out += (c ? "," : "") + table.columns[c];
  out += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out += (c ? "," : "") + format_double(row[c]);
    out += '\n';
  }
  return out;
}

AnalysisTable table_from_csv(std::string name, std::string_view csv) {
  AnalysisTable table;
  table.name = std::move(name);
  std::istringstream in{std::string(csv)};
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> parts;
    std::string cur;
    std::istringstream ss(s);
    while (std::getline(ss, cur, ',')) parts.push_back(cur);
    return parts;
  };
  if (!std::getline(in, line)) fail(ErrorCode::FormatError, "empty table");
  table.columns = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    for (const std::string& cell : split(line)) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0') fail(ErrorCode::FormatError, "bad number '" + cell + "' in table");
      row.push_back(v);
    }
    table.add_row(std::move(row));
  }
  return table;
}

std::filesystem::path write_table(const std::filesystem::path& dir, const AnalysisTable& table) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path csv = dir / (table.name + ".csv");
  write_file_atomic(csv, table_to_csv(table));
  std::string sidecar = "table.name = " + table.name + "\n";
  sidecar += "table.rows = " + std::to_string(table.rows.size()) + "\n";
  std::string cols;
  for (const std::string& c : table.columns) cols += (cols.empty() ? "" : ",") + c;
  sidecar += "table.columns = " + cols + "\n";
  sidecar += "table.csv_sha256 = " + sha256_hex(table_to_csv(table)) + "\n";
  for (const auto& [key, value] : table.provenance.entries()) sidecar += key + " = " + value + "\n";
  write_file_atomic(dir / (table.name + ".manifest"), sidecar);
  return csv;
}

namespace {

Tensor min_max_normalized(const Tensor& v, const std::vector<std::size_t>& grid) {
  if (v.size() == 0) fail(ErrorCode::EmptySignal, "empty direction");
  const auto [lo, hi] = std::minmax_element(v.values().begin(), v.values().end());
  const double range = *hi - *lo;
  Tensor out(grid.empty() ? std::vector<std::size_t>{v.size()} : grid);
  if (out.size() != v.size()) fail(ErrorCode::ShapeUnknown, "grid shape does not match the direction length");
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = range > 0.0 ? (v[k] - *lo) / range : 0.0;
  return out;
}

}  // namespace

Tensor normalized_power_spectrum(const Tensor& v, const std::vector<std::size_t>& grid) {
  if (!grid.empty() && grid.size() != 2) fail(ErrorCode::ShapeUnknown, "2-D treatment needs an H x W grid");
  const Tensor signal = min_max_normalized(v, grid);
  const Tensor full = full_power_spectrum(signal);
  const double lhs = std::accumulate(full.values().begin(), full.values().end(), 0.0);
  const double rhs = static_cast<double>(signal.size()) * squared_norm(signal.data());
  if (std::abs(lhs - rhs) > 1e-9 * std::max(1.0, rhs)) {
    fail(ErrorCode::ConvergenceFailure, "Parseval check failed for the power spectrum");
  }
  return power_spectrum(signal);
}

double low_frequency_fraction(const Tensor& v, const std::vector<std::size_t>& grid) {
  const Tensor p = normalized_power_spectrum(v, grid);
  const std::size_t last = p.size() - 1;
  const std::size_t median = last / 2;
  double low = 0.0, total = 0.0;
  for (std::size_t f = 1; f <= last; ++f) {
    total += p[f];
    if (f <= median) low += p[f];
  }
  // No structure inside the binned range (rounding residue only) counts as smooth.
  if (!(total > 1e-12 * (total + p[0]))) return 1.0;
  return low / total;
}

AnalysisTable basis_psd(const std::vector<LocalBasis>& bases, const std::vector<std::size_t>& grid) {
  AnalysisTable table;
  table.name = "psd";
  table.columns = {"t", "i", "low_frequency_fraction"};
  if (bases.empty()) return table;
  const std::size_t d = bases.front().V.cols();
  if (!grid.empty() && (grid.size() != 2 || grid[0] * grid[1] != d)) {
    fail(ErrorCode::ShapeUnknown, "grid shape does not match the latent dimension");
  }
  const std::size_t bins = grid.empty() ? d / 2 + 1 : std::min(grid[0], grid[1]) / 2 + 1;
  for (std::size_t b = 0; b < bins; ++b) table.columns.push_back("p" + std::to_string(b));
  for (const LocalBasis& basis : bases) {
    if (basis.V.cols() != d) fail(ErrorCode::DimMismatch, "bases disagree on the latent dimension");
    for (std::size_t i = 0; i < basis.V.rows(); ++i) {
      const Tensor v = basis.V.row_tensor(i);
      const Tensor p = normalized_power_spectrum(v, grid);
      std::vector<double> row{static_cast<double>(basis.t), static_cast<double>(i), low_frequency_fraction(v, grid)};
      row.insert(row.end(), p.values().begin(), p.values().end());
      table.add_row(std::move(row));
    }
  }
  std::string shape = grid.empty() ? "1d" : std::to_string(grid[0]) + "x" + std::to_string(grid[1]);
  table.provenance.set("psd.grid", shape);
  table.provenance.set("psd.normalization", "min-max");
  return table;
}

std::vector<Tensor> invert_to_timesteps(const DenoiserModel& model, const NoiseSchedule& schedule,
                                        const Tensor& samples, const std::vector<std::size_t>& timesteps,
                                        std::size_t num_steps) {
  const std::vector<std::size_t> grid = timestep_grid(schedule.T, num_steps);
  std::size_t highest = 0;
  std::vector<std::size_t> snapped;
  for (std::size_t t : timesteps) {
    if (t > schedule.T) fail(ErrorCode::BadTimestep, "timestep exceeds T");
    snapped.push_back(snap_to_grid(grid, t));
    highest = std::max(highest, snapped.back());
  }
  Trajectory traj;
  const Tensor batch = samples.rank() == 1 ? samples.reshaped({1, samples.size()}) : samples;
  ddim_invert_segment(model, schedule, batch, 0, highest, num_steps, &traj);
  std::vector<Tensor> out;
  for (std::size_t t : snapped) out.push_back(traj.at(t));
  return out;
}

Tensor pairwise_geodesic_matrix(const std::vector<LocalBasis>& bases) {
  const std::size_t n = bases.size();
  Tensor m({n, n});
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      m(a, b) = geodesic_distance(bases[a].U, bases[b].U);
      m(b, a) = m(a, b);
    }
  }
  return m;
}

namespace {

std::vector<std::size_t> sorted_unique(std::vector<std::size_t> ts) {
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  return ts;
}

void record_options(Manifest& mf, const AnalysisOptions& o) {
  mf.set("basis.n", o.basis.n);
  mf.set("basis.seed", o.basis.seed);
  mf.set("basis.max_iter", o.basis.max_iter);
  mf.set("basis.threshold", o.basis.convergence_threshold);
  mf.set("sampling.num_steps", o.num_steps);
}

std::vector<std::size_t> snapped_timesteps(const NoiseSchedule& schedule, const std::vector<std::size_t>& timesteps,
                                           std::size_t num_steps) {
  const std::vector<std::size_t> grid = timestep_grid(schedule.T, num_steps);
  std::vector<std::size_t> out;
  for (std::size_t t : timesteps) out.push_back(snap_to_grid(grid, t));
  return out;
}

}  // namespace

AnalysisTable sample_discrepancy(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& samples,
                                 const std::vector<std::size_t>& timesteps, const AnalysisOptions& options) {
  if (samples.rank() != 2 || samples.rows() < 2) fail(ErrorCode::BadOptions, "sample_discrepancy needs >= 2 samples");
  const std::vector<std::size_t> ts = sorted_unique(snapped_timesteps(schedule, timesteps, options.num_steps));
  const std::vector<Tensor> latents = invert_to_timesteps(model, schedule, samples, ts, options.num_steps);

  AnalysisTable table;
  table.name = "sample_discrepancy";
  table.columns = {"t", "mean_distance", "min_distance", "max_distance", "pairs"};
  for (std::size_t a = 0; a < ts.size(); ++a) {
    std::vector<LocalBasis> bases;
    for (std::size_t s = 0; s < samples.rows(); ++s) {
      bases.push_back(local_basis(model, latents[a].row_tensor(s), ts[a], options.basis));
    }
    const Tensor m = pairwise_geodesic_matrix(bases);
    double sum = 0.0, lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < bases.size(); ++i) {
      for (std::size_t j = i + 1; j < bases.size(); ++j) {
        sum += m(i, j);
        lo = std::min(lo, m(i, j));
        hi = std::max(hi, m(i, j));
        ++pairs;
      }
    }
    table.add_row({static_cast<double>(ts[a]), sum / static_cast<double>(pairs), lo, hi, static_cast<double>(pairs)});
  }
  table.provenance.set("samples.count", samples.rows());
  record_options(table.provenance, options);
  return table;
}

Tensor timestep_distances(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& x0,
                          const std::vector<std::size_t>& timesteps, const AnalysisOptions& options) {
  if (timesteps.size() < 2) fail(ErrorCode::BadOptions, "need at least two timesteps");
  if (x0.rank() != 1) fail(ErrorCode::DimMismatch, "timestep_distances expects a single sample");
  const std::vector<std::size_t> ts = snapped_timesteps(schedule, timesteps, options.num_steps);
  const std::vector<Tensor> latents = invert_to_timesteps(model, schedule, x0, ts, options.num_steps);
  std::vector<LocalBasis> bases;
  for (std::size_t a = 0; a < ts.size(); ++a) {
    bases.push_back(local_basis(model, latents[a].row_tensor(0), ts[a], options.basis));
  }
  return pairwise_geodesic_matrix(bases);
}

AnalysisTable timestep_distance_matrix(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& x0,
                                       const std::vector<std::size_t>& timesteps, const AnalysisOptions& options) {
  const Tensor m = timestep_distances(model, schedule, x0, timesteps, options);
  const std::vector<std::size_t> ts = snapped_timesteps(schedule, timesteps, options.num_steps);
  AnalysisTable table;
  table.name = "timestep_matrix";
  table.columns = {"t"};
  for (std::size_t t : ts) table.columns.push_back("t" + std::to_string(t));
  for (std::size_t a = 0; a < ts.size(); ++a) {
    std::vector<double> row{static_cast<double>(ts[a])};
    for (std::size_t b = 0; b < ts.size(); ++b) row.push_back(m(a, b));
    table.add_row(std::move(row));
  }
  record_options(table.provenance, options);
  return table;
}

AnalysisTable dataset_consistency(const std::vector<LabeledModel>& models, const std::vector<std::size_t>& timesteps,
                                  const AnalysisOptions& options) {
  if (models.size() < 2) fail(ErrorCode::BadOptions, "dataset_consistency needs at least two models");
  AnalysisTable table;
  table.name = "dataset_consistency";
  table.columns = {"model", "gap", "mean_distance", "count"};
  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    const LabeledModel& lm = models[mi];
    if (!lm.model || !lm.schedule) fail(ErrorCode::BadOptions, "model entry is incomplete");
    const std::vector<std::size_t> ts = snapped_timesteps(*lm.schedule, timesteps, options.num_steps);
    std::map<std::size_t, std::pair<double, std::size_t>> by_gap;
    const Tensor samples = lm.samples.rank() == 1 ? lm.samples.reshaped({1, lm.samples.size()}) : lm.samples;
    for (std::size_t s = 0; s < samples.rows(); ++s) {
      const Tensor m = timestep_distances(*lm.model, *lm.schedule, samples.row_tensor(s), timesteps, options);
      for (std::size_t a = 0; a < ts.size(); ++a) {
        for (std::size_t b = a; b < ts.size(); ++b) {
          const std::size_t gap = ts[a] > ts[b] ? ts[a] - ts[b] : ts[b] - ts[a];
          auto& acc = by_gap[gap];
          acc.first += m(a, b);
          acc.second += 1;
        }
      }
    }
    for (const auto& [gap, acc] : by_gap) {
      table.add_row({static_cast<double>(mi), static_cast<double>(gap), acc.first / static_cast<double>(acc.second),
                     static_cast<double>(acc.second)});
    }
    table.provenance.set("model." + std::to_string(mi) + ".label", lm.label);
    table.provenance.set("model." + std::to_string(mi) + ".samples", samples.rows());
  }
  record_options(table.provenance, options);
  return table;
}

AnalysisTable transport_distortion(const std::vector<BasisPair>& pairs, std::size_t directions) {
  AnalysisTable table;
  table.name = "transport_distortion";
  table.columns = {"pair", "i", "distance", "angle", "latent_angle", "flagged"};
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const LocalBasis& src = *pairs[p].src;
    const LocalBasis& dst = *pairs[p].dst;
    const double distance = geodesic_distance(src.U, dst.U);
    const std::size_t count = std::min(directions, src.n);
    for (std::size_t i = 0; i < count; ++i) {
      try {
        const TransportResult r = transport(src, dst, i);
        table.add_row({static_cast<double>(p), static_cast<double>(i), distance, r.distortion_angle, r.latent_angle, 0.0});
      } catch (const Error& e) {
        if (e.code() != ErrorCode::ZeroProjection) throw;
        const double right = std::numbers::pi / 2.0;
        table.add_row({static_cast<double>(p), static_cast<double>(i), distance, right, right, 1.0});
      }
    }
  }
  return table;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

RankCorrelation spearman(const std::vector<double>& x, const std::vector<double>& y, std::size_t permutations,
                         std::uint64_t seed) {
  if (x.size() != y.size()) fail(ErrorCode::DimMismatch, "spearman needs paired samples");
  RankCorrelation result;
  result.count = x.size();
  if (x.size() < 2) return result;
  const std::vector<double> rx = average_ranks(x);
  std::vector<double> ry = average_ranks(y);
  result.rho = pearson(rx, ry);
  if (permutations == 0) return result;
  SeededRng rng(seed);
  std::size_t at_least = 0;
  for (std::size_t p = 0; p < permutations; ++p) {
    for (std::size_t i = ry.size() - 1; i > 0; --i) std::swap(ry[i], ry[rng.index(i + 1)]);
    if (pearson(rx, ry) >= result.rho - 1e-12) ++at_least;
  }
  result.p_value = static_cast<double>(at_least + 1) / static_cast<double>(permutations + 1);
  return result;
}

}  // namespace latent_atlas
