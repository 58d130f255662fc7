#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "gce/baselines.hpp"
#include "gce/channel.hpp"
#include "gce/errors.hpp"
#include "gce/estimator.hpp"
#include "gce/measurement.hpp"
#include "gce/precoding.hpp"
#include "gce/rng.hpp"
#include "gce/wgan.hpp"

namespace gce {

// --- error metrics -----------------------------------------------------------

// ||H - H_hat||_F^2 / ||H||_F^2 on the linear scale. Convert with nmse_to_db
// for reporting.
inline double nmse(const ComplexMatrix& h_true, const ComplexMatrix& h_hat) {
  if (h_true.rows() != h_hat.rows() || h_true.cols() != h_hat.cols())
    throw argument_error("nmse: shape mismatch");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < h_true.rows(); ++i)
    for (std::size_t j = 0; j < h_true.cols(); ++j) {
      num += std::norm(h_true(i, j) - h_hat(i, j));
      den += std::norm(h_true(i, j));
    }
  if (den == 0.0) throw argument_error("nmse: zero reference channel");
  return num / den;
}

// NMSE after the best complex scaling of the estimate. The natural metric when
// the measurements cannot pin the channel's scale (one-bit quantization keeps
// only signs). An all-zero estimate admits no useful scaling; kappa = 0 is then
// optimal and the error is the full reference energy.
inline double scaled_nmse(const ComplexMatrix& h_true, const ComplexMatrix& h_hat) {
  if (h_true.rows() != h_hat.rows() || h_true.cols() != h_hat.cols())
    throw argument_error("scaled_nmse: shape mismatch");
  double energy = 0.0;
  for (std::size_t i = 0; i < h_hat.rows(); ++i)
    for (std::size_t j = 0; j < h_hat.cols(); ++j) energy += std::norm(h_hat(i, j));
  if (energy == 0.0) {
    // Still reject a zero reference, matching nmse().
    double den = 0.0;
    for (std::size_t i = 0; i < h_true.rows(); ++i)
      for (std::size_t j = 0; j < h_true.cols(); ++j) den += std::norm(h_true(i, j));
    if (den == 0.0) throw argument_error("scaled_nmse: zero reference channel");
    return 1.0;
  }
  const cplx kappa = optimal_scale(h_true, h_hat);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < h_true.rows(); ++i)
    for (std::size_t j = 0; j < h_true.cols(); ++j) {
      num += std::norm(h_true(i, j) - kappa * h_hat(i, j));
      den += std::norm(h_true(i, j));
    }
  if (den == 0.0) throw argument_error("scaled_nmse: zero reference channel");
  return num / den;
}

// 10 log10(x), clamped to [-120, 120] so perfect recoveries and sentinel values
// stay finite in reports.
inline double nmse_to_db(double nmse_linear) {
  if (!(nmse_linear >= 0.0)) throw argument_error("nmse_to_db: NMSE must be non-negative");
  if (nmse_linear == 0.0) return -120.0;
  const double db = 10.0 * std::log10(nmse_linear);
  return std::min(120.0, std::max(-120.0, db));
}

// --- experiment configuration ------------------------------------------------

enum class EstimatorKind { gce, omp, lasso, gamp };

inline const char* estimator_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::gce: return "gce";
    case EstimatorKind::omp: return "omp";
    case EstimatorKind::lasso: return "lasso";
    case EstimatorKind::gamp: return "gamp";
  }
  throw argument_error("estimator_name: unknown estimator");
}

inline EstimatorKind parse_estimator(const std::string& name) {
  if (name == "gce") return EstimatorKind::gce;
  if (name == "omp") return EstimatorKind::omp;
  if (name == "lasso") return EstimatorKind::lasso;
  if (name == "gamp") return EstimatorKind::gamp;
  throw config_error("unknown estimator '" + name + "'");
}

// One sweep covers the grid {alphas} x {snrs_db} x {estimators}, with one row
// per latent dimension for the generative estimator, averaged over `trials`
// Monte Carlo channels. Trial t sees the same channel under every estimator and
// every grid cell, the same pilots at a given alpha, and the same noise at a
// given (alpha, snr) — so curves differ only where the physics does.
struct ExperimentConfig {
  std::string scenario = "smoke";
  DatasetConfig channel;  // array geometry + cluster statistics (count/seed are not used here)
  std::vector<double> alphas{0.4};  // pilot ratios N_p / N_t
  std::vector<double> snrs_db{10.0};
  std::vector<std::size_t> latent_dims{8};
  EstimationMode mode = EstimationMode::fullres;
  std::vector<EstimatorKind> estimators{EstimatorKind::gce, EstimatorKind::omp,
                                        EstimatorKind::lasso, EstimatorKind::gamp};
  std::size_t trials = 5;
  std::uint64_t master_seed = 1;
  std::string output_dir = ".";
  std::size_t workers = 1;  // grid points processed concurrently
  GceConfig gce;            // latent_dim is overridden per latent_dims entry
  bool planted_channels = false;    // draw truth from generators[0] instead of the cluster model
  bool include_perfect_csi = false;  // add "perfect" rows: true channel fed to the precoder

  void validate() const {
    if (channel.tx.num_antennas == 0 || channel.rx.num_antennas == 0)
      throw config_error("experiment: empty array geometry");
    if (alphas.empty()) throw config_error("experiment: alphas is empty");
    if (snrs_db.empty()) throw config_error("experiment: snrs_db is empty");
    if (estimators.empty()) throw config_error("experiment: estimators is empty");
    for (double a : alphas)
      if (!(a > 0.0) || a > 1.0) throw config_error("experiment: alpha must be in (0, 1]");
    for (double s : snrs_db)
      if (!std::isfinite(s)) throw config_error("experiment: non-finite SNR");
    if (trials == 0) throw config_error("experiment: trials must be at least 1");
    if (workers == 0) throw config_error("experiment: workers must be at least 1");
    for (std::size_t i = 0; i < estimators.size(); ++i)
      for (std::size_t j = i + 1; j < estimators.size(); ++j)
        if (estimators[i] == estimators[j])
          throw config_error(std::string("experiment: duplicate estimator '") +
                             estimator_name(estimators[i]) + "'");
    const bool wants_gce =
        std::find(estimators.begin(), estimators.end(), EstimatorKind::gce) != estimators.end();
    if (wants_gce && latent_dims.empty())
      throw config_error("experiment: gce requested but latent_dims is empty");
    for (std::size_t d : latent_dims)
      if (d == 0) throw config_error("experiment: latent dimension must be positive");
    this->gce.validate();
    ::gce::validate(channel.clusters);
  }
};

// One aggregated grid cell. `d` is the generator latent dimension on gce rows
// and 0 elsewhere (the baselines have no latent space; "perfect" rows are the
// true channel). nmse_db is 10 log10 of the trial-mean linear NMSE. A row whose
// every trial failed keeps the +120 dB sentinel so it stays visible without
// aborting the sweep.
struct ResultRow {
  std::string estimator;
  double alpha = 0.0;
  double snr_db = 0.0;
  std::size_t d = 0;
  double nmse_db = 0.0;
  double spectral_efficiency = 0.0;  // bits/s/Hz at the row's SNR via the hybrid precoder
  double time_per_iteration_ms = 0.0;
  std::size_t trials = 0;
  std::size_t failures = 0;
};

struct ResultTable {
  std::vector<ResultRow> rows;
};

inline bool result_row_less(const ResultRow& a, const ResultRow& b) {
  if (a.estimator != b.estimator) return a.estimator < b.estimator;
  if (a.alpha != b.alpha) return a.alpha < b.alpha;
  if (a.snr_db != b.snr_db) return a.snr_db < b.snr_db;
  return a.d < b.d;
}

// --- sweep machinery -----------------------------------------------------------

namespace harness_detail {

struct Combo {
  bool perfect = false;
  EstimatorKind kind = EstimatorKind::omp;
  std::size_t d = 0;              // latent dimension (gce rows only)
  std::size_t weights_index = 0;  // into the generators list (gce rows only)
};

inline std::vector<Combo> enumerate_combos(const ExperimentConfig& config,
                                           const std::vector<LoadedWeights<float>>& generators) {
  std::vector<Combo> combos;
  if (config.include_perfect_csi) combos.push_back(Combo{true, EstimatorKind::omp, 0, 0});
  for (EstimatorKind kind : config.estimators) {
    if (kind != EstimatorKind::gce) {
      combos.push_back(Combo{false, kind, 0, 0});
      continue;
    }
    for (std::size_t d : config.latent_dims) {
      std::size_t index = generators.size();
      for (std::size_t i = 0; i < generators.size(); ++i)
        if (generators[i].spec.input_shape.flat() == d) {
          index = i;
          break;
        }
      if (index == generators.size())
        throw config_error("run_sweep: no generator with latent dimension " + std::to_string(d));
      combos.push_back(Combo{false, kind, d, index});
    }
  }
  return combos;
}

inline ComplexMatrix draw_channel(const ExperimentConfig& config,
                                  const std::vector<LoadedWeights<float>>& generators,
                                  std::size_t trial) {
  Rng rng = Rng::substream(config.master_seed, stream_id("channel", trial));
  if (config.planted_channels) {
    if (generators.empty())
      throw config_error("run_sweep: planted_channels requires a generator");
    const LoadedWeights<float>& weights = generators.front();
    std::vector<double> z(weights.spec.input_shape.flat());
    for (double& v : z) v = rng.normal();
    return gce_detail::eval_generator(z, weights).h;
  }
  const ClusterParams params = sample_cluster_params(config.channel.clusters, rng);
  return generate_channel(params, config.channel.tx, config.channel.rx);
}

struct TrialResult {
  ComplexMatrix h_hat;
  double time_ms = 0.0;  // per solver iteration
};

inline TrialResult run_combo(const Combo& combo, const ComplexMatrix& h, const PilotMatrix& pilot,
                             const MeasurementSet& measurement, const BeamspaceSystem* system,
                             const ExperimentConfig& config,
                             const std::vector<LoadedWeights<float>>& generators,
                             std::size_t alpha_idx, std::size_t snr_idx, std::size_t trial) {
  TrialResult out;
  if (combo.perfect) {
    out.h_hat = h;
    return out;
  }
  if (combo.kind == EstimatorKind::gce) {
    GceConfig cfg = config.gce;
    cfg.latent_dim = combo.d;
    Rng rng =
        Rng::substream(config.master_seed, stream_id("gce-init", alpha_idx, snr_idx, trial));
    const EstimationResult res =
        estimate(measurement, pilot, generators[combo.weights_index], cfg, config.mode, rng);
    out.h_hat = res.h_hat;
    out.time_ms = 1e3 * res.wall_time_per_iteration;
    return out;
  }
  const auto t0 = std::chrono::steady_clock::now();
  SparseEstimate est;
  switch (combo.kind) {
    case EstimatorKind::omp:
      est = omp_estimate(measurement.y, *system, measurement.noise_var);
      break;
    case EstimatorKind::lasso:
      est = lasso_estimate(measurement.y, *system,
                           default_lasso_lambda(measurement.y, *system));
      break;
    case EstimatorKind::gamp:
      est = gamp_estimate(measurement.y, *system);
      break;
    default:
      throw argument_error("run_combo: unknown estimator");
  }
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
  out.h_hat = beamspace_to_channel(est.h_v, *system);
  out.time_ms = 1e3 * dt.count() / static_cast<double>(std::max<std::size_t>(1, est.iterations_used));
  return out;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

// Runs every combo over every trial at one (alpha, snr) grid point and folds
// the outcomes into rows. `median_time` selects the timing-benchmark aggregate.
inline std::vector<ResultRow> run_point(const ExperimentConfig& config,
                                        const std::vector<LoadedWeights<float>>& generators,
                                        const std::vector<Combo>& combos,
                                        const PrecodingDictionary& dictionary,
                                        std::size_t alpha_idx, std::size_t snr_idx,
                                        bool median_time) {
  const double alpha = config.alphas[alpha_idx];
  const double snr_db = config.snrs_db[snr_idx];
  const std::size_t n_t = config.channel.tx.num_antennas;
  const std::size_t n_r = config.channel.rx.num_antennas;
  const double snr_linear = std::pow(10.0, snr_db / 10.0);
  const std::size_t n_streams = std::min(n_t, n_r);
  bool needs_beamspace = false;
  for (const Combo& c : combos)
    if (!c.perfect && c.kind != EstimatorKind::gce) needs_beamspace = true;

  struct Cell {
    double nmse_sum = 0.0;
    double se_sum = 0.0;
    std::vector<double> times_ms;
    std::size_t ok = 0;
    std::size_t failures = 0;
  };
  std::vector<Cell> cells(combos.size());

  for (std::size_t trial = 0; trial < config.trials; ++trial) {
    const ComplexMatrix h = draw_channel(config, generators, trial);
    Rng pilot_rng = Rng::substream(config.master_seed, stream_id("pilot", alpha_idx, trial));
    const PilotMatrix pilot = generate_pilots(n_t, pilots_for_ratio(alpha, n_t), pilot_rng);
    Rng noise_rng =
        Rng::substream(config.master_seed, stream_id("noise", alpha_idx, snr_idx, trial));
    MeasurementSet measurement = measure(h, pilot, n_r, snr_db, noise_rng);
    if (config.mode == EstimationMode::onebit) measurement = quantize(measurement, 1);
    std::optional<BeamspaceSystem> system;
    if (needs_beamspace) system = beamspace_system(pilot, n_r, n_t);

    for (std::size_t c = 0; c < combos.size(); ++c) {
      try {
        const TrialResult result =
            run_combo(combos[c], h, pilot, measurement, system ? &*system : nullptr, config,
                      generators, alpha_idx, snr_idx, trial);
        const double err = config.mode == EstimationMode::onebit ? scaled_nmse(h, result.h_hat)
                                                                 : nmse(h, result.h_hat);
        double rate = 0.0;
        double energy = 0.0;
        for (std::size_t i = 0; i < result.h_hat.rows(); ++i)
          for (std::size_t j = 0; j < result.h_hat.cols(); ++j)
            energy += std::norm(result.h_hat(i, j));
        if (energy > 0.0) {
          const HybridPrecoder precoder =
              hybrid_precoder_omp(result.h_hat, dictionary, n_streams, n_streams, snr_linear);
          rate = spectral_efficiency(h, precoder, snr_linear);
        }
        cells[c].nmse_sum += err;
        cells[c].se_sum += rate;
        cells[c].times_ms.push_back(result.time_ms);
        ++cells[c].ok;
      } catch (const numerical_error&) {
        ++cells[c].failures;  // a solver giving up on one draw must not kill the sweep
      }
    }
  }

  std::vector<ResultRow> rows;
  rows.reserve(combos.size());
  for (std::size_t c = 0; c < combos.size(); ++c) {
    ResultRow row;
    row.estimator = combos[c].perfect ? "perfect" : estimator_name(combos[c].kind);
    row.alpha = alpha;
    row.snr_db = snr_db;
    row.d = combos[c].d;
    row.trials = config.trials;
    row.failures = cells[c].failures;
    if (cells[c].ok > 0) {
      row.nmse_db = nmse_to_db(cells[c].nmse_sum / static_cast<double>(cells[c].ok));
      row.spectral_efficiency = cells[c].se_sum / static_cast<double>(cells[c].ok);
      row.time_per_iteration_ms =
          median_time ? median_of(cells[c].times_ms) : mean_of(cells[c].times_ms);
    } else {
      row.nmse_db = 120.0;  // sentinel: every trial failed
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline ResultTable run_grid(const ExperimentConfig& config,
                            const std::vector<LoadedWeights<float>>& generators,
                            bool median_time) {
  config.validate();
  if (config.planted_channels && generators.empty())
    throw config_error("run_sweep: planted_channels requires a generator");
  const std::vector<Combo> combos = enumerate_combos(config, generators);
  const PrecodingDictionary dictionary =
      build_dictionary(config.channel.tx, 2 * config.channel.tx.num_antennas);

  const std::size_t n_jobs = config.alphas.size() * config.snrs_db.size();
  std::vector<std::vector<ResultRow>> slots(n_jobs);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t job = next.fetch_add(1);
      if (job >= n_jobs) return;
      try {
        slots[job] = run_point(config, generators, combos, dictionary,
                               job / config.snrs_db.size(), job % config.snrs_db.size(),
                               median_time);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const std::size_t n_workers = std::max<std::size_t>(1, std::min(config.workers, n_jobs));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  ResultTable table;
  for (std::vector<ResultRow>& rows : slots)
    for (ResultRow& row : rows) table.rows.push_back(std::move(row));
  std::sort(table.rows.begin(), table.rows.end(), result_row_less);
  return table;
}

}  // namespace harness_detail

// Runs the full grid. Generators are matched to latent_dims by their input
// dimension; pass one per requested d (plus the planted-truth generator first
// if planted_channels is set — planting always uses generators[0]).
inline ResultTable run_sweep(const ExperimentConfig& config,
                             const std::vector<LoadedWeights<float>>& generators = {}) {
  return harness_detail::run_grid(config, generators, false);
}

// Median per-iteration runtime at the standard pilot ratios and a fixed -10 dB
// operating point. Runs serially on purpose: concurrent grid points would
// contend for cores and poison the clock.
inline ResultTable timing_benchmark(const ExperimentConfig& config,
                                    const std::vector<LoadedWeights<float>>& generators = {}) {
  ExperimentConfig bench = config;
  bench.alphas = {0.2, 0.4, 0.75, 1.0};
  bench.snrs_db = {-10.0};
  bench.workers = 1;
  return harness_detail::run_grid(bench, generators, true);
}

// --- report emission -----------------------------------------------------------

inline constexpr char kResultsCsvVersion[] = "# gce-results-v1";
inline constexpr char kResultsCsvColumns[] =
    "estimator,alpha,snr_db,d,nmse_db,spectral_efficiency,time_per_iteration_ms,trials,failures";

inline std::string results_to_csv(const ResultTable& table) {
  std::string out = kResultsCsvVersion;
  out += '\n';
  out += kResultsCsvColumns;
  out += '\n';
  char line[320];
  for (const ResultRow& r : table.rows) {
    std::snprintf(line, sizeof line, "%s,%.10g,%.10g,%zu,%.10g,%.10g,%.10g,%zu,%zu\n",
                  r.estimator.c_str(), r.alpha, r.snr_db, r.d, r.nmse_db, r.spectral_efficiency,
                  r.time_per_iteration_ms, r.trials, r.failures);
    out += line;
  }
  return out;
}

enum class PlotKind { nmse_vs_alpha, nmse_vs_snr, se_vs_snr, timing };

namespace harness_detail {

struct PlotAxes {
  double ResultRow::* x;
  double ResultRow::* y;
  const char* x_label;
  const char* y_label;
  const char* y_column;  // CSV column name, used in error messages
  bool x_is_alpha;
};

inline PlotAxes plot_axes(PlotKind kind) {
  switch (kind) {
    case PlotKind::nmse_vs_alpha:
      return {&ResultRow::alpha, &ResultRow::nmse_db, "pilot ratio alpha", "NMSE (dB)", "nmse_db",
              true};
    case PlotKind::nmse_vs_snr:
      return {&ResultRow::snr_db, &ResultRow::nmse_db, "SNR (dB)", "NMSE (dB)", "nmse_db", false};
    case PlotKind::se_vs_snr:
      return {&ResultRow::snr_db, &ResultRow::spectral_efficiency, "SNR (dB)",
              "spectral efficiency (bits/s/Hz)", "spectral_efficiency", false};
    case PlotKind::timing:
      return {&ResultRow::alpha, &ResultRow::time_per_iteration_ms, "pilot ratio alpha",
              "time per iteration (ms)", "time_per_iteration_ms", true};
  }
  throw argument_error("plot_axes: unknown plot kind");
}

inline const char* plot_kind_name(PlotKind kind) {
  switch (kind) {
    case PlotKind::nmse_vs_alpha: return "nmse_vs_alpha";
    case PlotKind::nmse_vs_snr: return "nmse_vs_snr";
    case PlotKind::se_vs_snr: return "se_vs_snr";
    case PlotKind::timing: return "timing";
  }
  throw argument_error("plot_kind_name: unknown plot kind");
}

inline std::string format_number(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

}  // namespace harness_detail

// Deterministic static line plot: one series per estimator at each off-axis
// grid coordinate (and latent dimension), sorted by label. Throws when the
// requested column holds no finite data.
inline std::string render_plot_svg(const ResultTable& table, PlotKind kind) {
  const harness_detail::PlotAxes axes = harness_detail::plot_axes(kind);

  std::vector<double> other_values;
  for (const ResultRow& r : table.rows) {
    const double other = axes.x_is_alpha ? r.snr_db : r.alpha;
    if (std::find(other_values.begin(), other_values.end(), other) == other_values.end())
      other_values.push_back(other);
  }
  const bool other_varies = other_values.size() > 1;

  std::map<std::string, std::vector<std::pair<double, double>>> series;
  for (const ResultRow& r : table.rows) {
    const double x = r.*axes.x;
    const double y = r.*axes.y;
    if (!std::isfinite(x) || !std::isfinite(y)) continue;
    std::string label = r.estimator;
    if (other_varies)
      label += (axes.x_is_alpha ? ", snr=" : ", alpha=") +
               harness_detail::format_number("%.10g", axes.x_is_alpha ? r.snr_db : r.alpha);
    if (r.d > 0) label += ", d=" + std::to_string(r.d);
    series[label].push_back({x, y});
  }
  if (series.empty())
    throw argument_error(std::string("render_plot_svg: no finite values for column '") +
                         axes.y_column + "'");

  double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;
  bool first = true;
  for (auto& [label, points] : series) {
    std::sort(points.begin(), points.end());
    for (const auto& [x, y] : points) {
      if (first) {
        x_min = x_max = x;
        y_min = y_max = y;
        first = false;
      }
      x_min = std::min(x_min, x);
      x_max = std::max(x_max, x);
      y_min = std::min(y_min, y);
      y_max = std::max(y_max, y);
    }
  }
  auto widen = [](double& lo, double& hi) {
    if (hi - lo < 1e-12) {
      const double pad = 0.5 * std::abs(lo) + 1.0;
      lo -= pad;
      hi += pad;
    } else {
      const double pad = 0.05 * (hi - lo);
      lo -= pad;
      hi += pad;
    }
  };
  widen(x_min, x_max);
  widen(y_min, y_max);

  const double left = 70.0, right = 600.0, top = 40.0, bottom = 500.0;
  auto sx = [&](double v) { return left + (v - x_min) / (x_max - x_min) * (right - left); };
  auto sy = [&](double v) { return bottom - (v - y_min) / (y_max - y_min) * (bottom - top); };
  auto num = [](double v) { return harness_detail::format_number("%.6g", v); };

  static constexpr const char* kPalette[10] = {"#4363d8", "#e6194b", "#3cb44b", "#f58231",
                                               "#911eb4", "#0d8a8a", "#f032e6", "#9a6324",
                                               "#800000", "#000075"};

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 560\" "
         "font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"800\" height=\"560\" fill=\"#ffffff\"/>\n";
  svg += "<text x=\"335\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
         std::string(harness_detail::plot_kind_name(kind)) + "</text>\n";

  for (int i = 0; i < 5; ++i) {
    const double tx = x_min + (x_max - x_min) * i / 4.0;
    const double ty = y_min + (y_max - y_min) * i / 4.0;
    const std::string gx = num(sx(tx));
    const std::string gy = num(sy(ty));
    svg += "<line x1=\"" + gx + "\" y1=\"" + num(top) + "\" x2=\"" + gx + "\" y2=\"" +
           num(bottom) + "\" stroke=\"#dddddd\"/>\n";
    svg += "<line x1=\"" + num(left) + "\" y1=\"" + gy + "\" x2=\"" + num(right) + "\" y2=\"" +
           gy + "\" stroke=\"#dddddd\"/>\n";
    svg += "<text x=\"" + gx + "\" y=\"" + num(bottom + 18.0) + "\" text-anchor=\"middle\">" +
           harness_detail::format_number("%.4g", tx) + "</text>\n";
    svg += "<text x=\"" + num(left - 8.0) + "\" y=\"" + num(sy(ty) + 4.0) +
           "\" text-anchor=\"end\">" + harness_detail::format_number("%.4g", ty) + "</text>\n";
  }
  svg += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(right - left) +
         "\" height=\"" + num(bottom - top) + "\" fill=\"none\" stroke=\"#444444\"/>\n";
  svg += "<text x=\"335\" y=\"545\" text-anchor=\"middle\">" + std::string(axes.x_label) +
         "</text>\n";
  svg += "<text x=\"18\" y=\"270\" text-anchor=\"middle\" transform=\"rotate(-90 18 270)\">" +
         std::string(axes.y_label) + "</text>\n";

  std::size_t index = 0;
  for (const auto& [label, points] : series) {
    const char* color = kPalette[index % 10];
    std::string poly;
    for (const auto& [x, y] : points) {
      if (!poly.empty()) poly += ' ';
      poly += num(sx(x)) + "," + num(sy(y));
    }
    svg += "<polyline points=\"" + poly + "\" fill=\"none\" stroke=\"" + color +
           "\" stroke-width=\"1.5\"/>\n";
    for (const auto& [x, y] : points)
      svg += "<circle cx=\"" + num(sx(x)) + "\" cy=\"" + num(sy(y)) + "\" r=\"3\" fill=\"" +
             color + "\"/>\n";
    const double ly = 50.0 + 18.0 * static_cast<double>(index);
    svg += "<line x1=\"615\" y1=\"" + num(ly - 4.0) + "\" x2=\"640\" y2=\"" + num(ly - 4.0) +
           "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"646\" y=\"" + num(ly) + "\">" + label + "</text>\n";
    ++index;
  }
  svg += "</svg>\n";
  return svg;
}

// Writes <base_path>.csv and <base_path>.svg; returns both paths in that order.
// The CSV always carries the full table regardless of the plot kind.
inline std::vector<std::string> emit_plots(const ResultTable& table, PlotKind kind,
                                           const std::string& base_path) {
  const std::string svg = render_plot_svg(table, kind);  // render first: no partial output on error
  const std::string csv = results_to_csv(table);
  const std::string csv_path = base_path + ".csv";
  const std::string svg_path = base_path + ".svg";
  auto write_file = [](const std::string& path, const std::string& body) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw format_error("cannot open for writing: " + path);
    f.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!f) throw format_error("write failed: " + path);
  };
  write_file(csv_path, csv);
  write_file(svg_path, svg);
  return {csv_path, svg_path};
}

// --- scenario presets ------------------------------------------------------------

// Everything needed to go from nothing to a report: a training corpus recipe,
// trainer settings, the generator width, and the sweep itself.
struct ScenarioPreset {
  DatasetConfig dataset;
  TrainerConfig trainer;
  std::size_t generator_width = 32;  // base channel count of the generator stack
  ExperimentConfig experiment;
};

// "smoke" fits in CI; "paper" mirrors the overnight-scale tables.
inline ScenarioPreset preset(const std::string& name) {
  ScenarioPreset p;
  if (name == "smoke") {
    p.dataset.tx = {16, 0.1};
    p.dataset.rx = {4, 0.1};
    p.dataset.count = 512;
    p.dataset.seed = 7;
    p.trainer.epochs = 200;
    p.trainer.batch = 64;
    p.generator_width = 32;
    p.experiment.scenario = "smoke";
    p.experiment.channel = p.dataset;
    p.experiment.alphas = {0.2, 0.4, 0.75, 1.0};
    p.experiment.snrs_db = {-10.0, 0.0, 10.0};
    p.experiment.latent_dims = {8};
    p.experiment.trials = 5;
    p.experiment.master_seed = 101;
    p.experiment.gce.latent_dim = 8;
    return p;
  }
  if (name == "paper") {
    p.dataset.tx = {64, 0.1};
    p.dataset.rx = {16, 0.1};
    p.dataset.count = 3654;
    p.dataset.seed = 7;
    p.generator_width = 128;
    p.experiment.scenario = "paper";
    p.experiment.channel = p.dataset;
    p.experiment.alphas = {0.2, 0.4, 0.75, 1.0};
    p.experiment.snrs_db = {-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0};
    p.experiment.latent_dims = {35};
    p.experiment.trials = 100;
    p.experiment.master_seed = 101;
    p.experiment.gce.latent_dim = 35;
    return p;
  }
  throw config_error("unknown scenario preset '" + name + "'");
}

}  // namespace gce
