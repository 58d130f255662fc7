// gce: command-line front end for dataset generation, WGAN training,
// single-shot estimation, Monte-Carlo sweeps, timing benchmarks, and weight
// inspection. Exit codes: 0 success, 1 usage, 2 data/format error,
// 3 numerical failure.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gce/gce.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kVersion = "1.0.0";

void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw gce::format_error("cannot open for writing: " + path);
  f.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!f) throw gce::format_error("write failed: " + path);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw gce::format_error("cannot create output directory " + dir + ": " + ec.message());
}

gce::PlotKind parse_plot_kind(const std::string& name) {
  if (name == "nmse_vs_alpha") return gce::PlotKind::nmse_vs_alpha;
  if (name == "nmse_vs_snr") return gce::PlotKind::nmse_vs_snr;
  if (name == "se_vs_snr") return gce::PlotKind::se_vs_snr;
  if (name == "timing") return gce::PlotKind::timing;
  throw gce::config_error("unknown plot kind '" + name + "'");
}

void print_table(const gce::ResultTable& table) {
  std::printf("%-9s %7s %8s %5s %10s %10s %14s %7s %9s\n", "estimator", "alpha", "snr_db", "d",
              "nmse_db", "se", "ms_per_iter", "trials", "failures");
  for (const gce::ResultRow& r : table.rows) {
    char d_col[24];
    if (r.d == 0)
      std::snprintf(d_col, sizeof d_col, "-");
    else
      std::snprintf(d_col, sizeof d_col, "%zu", r.d);
    std::printf("%-9s %7.3f %8.2f %5s %10.3f %10.4f %14.5f %7zu %9zu\n", r.estimator.c_str(),
                r.alpha, r.snr_db, d_col, r.nmse_db, r.spectral_efficiency,
                r.time_per_iteration_ms, r.trials, r.failures);
  }
}

template <class Real>
std::size_t parameter_count(const gce::WeightStore<Real>& store) {
  std::size_t total = 0;
  for (const auto& p : store.params) total += p.a.size() + p.b.size();
  return total;
}

// ---- shared channel-geometry options ----------------------------------------------

struct ChannelOpts {
  std::size_t n_t = 64;
  std::size_t n_r = 16;
  double spacing = 0.1;
  std::size_t clusters = 3;
  std::size_t rays = 10;
  double spread_deg = 5.0;
  CLI::Option *o_n_t = nullptr, *o_n_r = nullptr, *o_spacing = nullptr, *o_clusters = nullptr,
              *o_rays = nullptr, *o_spread = nullptr;
};

void add_channel_options(CLI::App* cmd, ChannelOpts& o) {
  o.o_n_t = cmd->add_option("--n-t", o.n_t, "Transmit antennas")->capture_default_str();
  o.o_n_r = cmd->add_option("--n-r", o.n_r, "Receive antennas")->capture_default_str();
  o.o_spacing =
      cmd->add_option("--spacing", o.spacing, "Antenna spacing of both arrays, in wavelengths")
          ->capture_default_str();
  o.o_clusters = cmd->add_option("--clusters", o.clusters, "Scattering clusters per channel")
                     ->capture_default_str();
  o.o_rays = cmd->add_option("--rays", o.rays, "Rays per cluster")->capture_default_str();
  o.o_spread = cmd->add_option("--spread-deg", o.spread_deg,
                               "Laplacian angular spread of the rays, in degrees")
                   ->capture_default_str();
}

// Only flags the user actually set override the caller's baseline config, so
// presets keep their own geometry unless asked otherwise.
void apply_channel_overrides(const ChannelOpts& o, gce::DatasetConfig& cfg) {
  if (o.o_n_t->count() > 0) cfg.tx.num_antennas = o.n_t;
  if (o.o_n_r->count() > 0) cfg.rx.num_antennas = o.n_r;
  if (o.o_spacing->count() > 0) {
    cfg.tx.spacing_wavelengths = o.spacing;
    cfg.rx.spacing_wavelengths = o.spacing;
  }
  if (o.o_clusters->count() > 0) cfg.clusters.clusters = o.clusters;
  if (o.o_rays->count() > 0) cfg.clusters.rays_per_cluster = o.rays;
  if (o.o_spread->count() > 0) cfg.clusters.angular_spread_rad = o.spread_deg * gce::kPi / 180.0;
}

// ---- gen-data ----------------------------------------------------------------------

struct GenDataOpts {
  std::string out;
  std::size_t count = 512;
  std::uint64_t seed = 1;
  ChannelOpts ch;
};

void add_gen_data(CLI::App& app, GenDataOpts& o) {
  CLI::App* cmd = app.add_subcommand(
      "gen-data", "Sample a clustered-channel training dataset and write a GCH1 file");
  cmd->add_option("--out", o.out, "Output dataset path (GCH1)")->required();
  cmd->add_option("--count", o.count, "Number of channel realizations")->capture_default_str();
  cmd->add_option("--seed", o.seed, "Master seed; any prefix of the dataset is stable under count")
      ->capture_default_str();
  add_channel_options(cmd, o.ch);
  cmd->callback([&o] {
    gce::DatasetConfig cfg;
    apply_channel_overrides(o.ch, cfg);
    cfg.count = o.count;
    cfg.seed = o.seed;
    const gce::ChannelDataset ds = gce::generate_dataset(cfg);
    gce::write_dataset(ds, o.out);
    std::printf("wrote %zu channels (%zu x %zu) to %s\n", ds.planes.size(), ds.n_r, ds.n_t,
                o.out.c_str());
  });
}

// ---- train -------------------------------------------------------------------------

struct TrainOpts {
  std::string data, out, log;
  std::size_t latent_dim = 8;
  std::size_t width = 32;
  std::size_t critic_width = 64;
  std::size_t epochs = 3000;
  std::size_t batch = 200;
  std::size_t n_d = 5;
  double clip = 0.01;
  double learning_rate = 5e-5;
  std::uint64_t seed = 1;
};

void add_train(CLI::App& app, TrainOpts& o) {
  CLI::App* cmd = app.add_subcommand(
      "train", "Train a WGAN generator on a GCH1 dataset and write GGW1 weights");
  cmd->add_option("--data", o.data, "Training dataset (GCH1)")->required();
  cmd->add_option("--out", o.out, "Output weights path (GGW1)")->required();
  cmd->add_option("--latent-dim", o.latent_dim, "Generator latent dimension d")
      ->capture_default_str();
  cmd->add_option("--width", o.width, "Generator base channel count")->capture_default_str();
  cmd->add_option("--critic-width", o.critic_width, "Critic base channel count")
      ->capture_default_str();
  cmd->add_option("--epochs", o.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--batch", o.batch, "Minibatch size (must not exceed the dataset size)")
      ->capture_default_str();
  cmd->add_option("--n-d", o.n_d, "Critic steps per generator step")->capture_default_str();
  cmd->add_option("--clip", o.clip, "Critic weight clipping bound")->capture_default_str();
  cmd->add_option("--learning-rate", o.learning_rate, "RMSProp learning rate")
      ->capture_default_str();
  cmd->add_option("--seed", o.seed, "Seed for init, latent draws, and batch sampling")
      ->capture_default_str();
  cmd->add_option("--log", o.log,
                  "Training log path (CSV: epoch,critic_objective; default <out>.log)");
  cmd->callback([&o] {
    const gce::ChannelDataset ds = gce::read_dataset(o.data);
    const gce::NetworkSpec gen_spec =
        gce::make_generator_spec(ds.n_r, ds.n_t, o.latent_dim, o.width);
    const gce::NetworkSpec critic_spec = gce::make_critic_spec(ds.n_r, ds.n_t, o.critic_width);
    gce::TrainerConfig tc;
    tc.epochs = o.epochs;
    tc.batch = o.batch;
    tc.n_d = o.n_d;
    tc.clip = o.clip;
    tc.learning_rate = o.learning_rate;
    gce::Rng rng(o.seed);
    std::printf("training generator (latent %zu, width %zu) on %zu channels (%zu x %zu), %zu epochs\n",
                o.latent_dim, o.width, ds.planes.size(), ds.n_r, ds.n_t, tc.epochs);
    std::fflush(stdout);
    const std::size_t every = std::max<std::size_t>(1, tc.epochs / 10);
    const gce::WganResult res =
        gce::wgan_train(ds, gen_spec, critic_spec, tc, rng, [&](std::size_t epoch, double obj) {
          if ((epoch + 1) % every == 0 || epoch + 1 == tc.epochs) {
            std::printf("epoch %zu/%zu  critic objective % .6f\n", epoch + 1, tc.epochs, obj);
            std::fflush(stdout);
          }
        });
    gce::save_weights(res.generator, gen_spec, o.out);
    const std::string log_path = o.log.empty() ? o.out + ".log" : o.log;
    std::string log = "epoch,critic_objective\n";
    char line[64];
    for (std::size_t i = 0; i < res.critic_objective.size(); ++i) {
      std::snprintf(line, sizeof line, "%zu,%.10g\n", i + 1, res.critic_objective[i]);
      log += line;
    }
    write_text_file(log_path, log);
    std::printf("saved generator (latent %zu, %zu parameters) to %s\nlog: %s\n", o.latent_dim,
                parameter_count(res.generator), o.out.c_str(), log_path.c_str());
  });
}

// ---- estimate ----------------------------------------------------------------------

struct EstimateOpts {
  std::string measurements, weights, out;
  std::string mode = "auto";
  std::uint64_t pilot_seed = 0;
  std::uint64_t seed = 1;
  std::size_t iterations = 100;
  std::size_t restarts = 3;
  double learning_rate = 1e-2;
  double lambda = 0.0;
  bool include_h_hat = false;
  CLI::Option* o_lambda = nullptr;
};

void add_estimate(CLI::App& app, EstimateOpts& o) {
  CLI::App* cmd = app.add_subcommand(
      "estimate", "Recover one channel from a GMS1 measurement file; prints a JSON record");
  cmd->add_option("--measurements", o.measurements, "Measurement file (GMS1)")->required();
  cmd->add_option("--weights", o.weights, "Trained generator weights (GGW1)")->required();
  cmd->add_option("--pilot-seed", o.pilot_seed,
                  "Seed that regenerates the QPSK pilot matrix (antenna count from the weights, "
                  "pilot count from the measurement file)")
      ->required();
  cmd->add_option("--mode", o.mode,
                  "fullres, onebit, or auto (follow the measurement file's quantization)")
      ->check(CLI::IsMember({"auto", "fullres", "onebit"}))
      ->capture_default_str();
  cmd->add_option("--iterations", o.iterations, "Adam iterations per restart")
      ->capture_default_str();
  cmd->add_option("--restarts", o.restarts, "Latent restarts; the lowest final loss wins")
      ->capture_default_str();
  cmd->add_option("--learning-rate", o.learning_rate, "Adam learning rate")
      ->capture_default_str();
  o.o_lambda = cmd->add_option(
      "--lambda", o.lambda, "Regularization weight (default 0.001 full-res, 1.0 one-bit)");
  cmd->add_option("--seed", o.seed, "Seed for the latent restart draws")->capture_default_str();
  cmd->add_flag("--include-h-hat", o.include_h_hat,
                "Embed the estimated channel matrix in the record");
  cmd->add_option("--out", o.out, "Write the JSON record here instead of stdout");
  cmd->callback([&o] {
    const gce::MeasurementFile mf = gce::read_measurements(o.measurements);
    const gce::LoadedWeights<float> w = gce::load_weights<float>(o.weights);
    if (w.store.norm.n_r == 0 || w.store.norm.n_t == 0)
      throw gce::argument_error("estimate: weights carry no normalization statistics");
    gce::EstimationMode mode;
    if (o.mode == "auto")
      mode = mf.set.quantization_bits == 1 ? gce::EstimationMode::onebit
                                           : gce::EstimationMode::fullres;
    else
      mode = o.mode == "onebit" ? gce::EstimationMode::onebit : gce::EstimationMode::fullres;
    gce::GceConfig cfg = gce::GceConfig::defaults_for(mode);
    cfg.latent_dim = w.spec.input_shape.flat();
    cfg.iterations = o.iterations;
    cfg.restarts = o.restarts;
    cfg.learning_rate = o.learning_rate;
    if (o.o_lambda->count() > 0) cfg.lambda_reg = o.lambda;
    gce::Rng pilot_rng(o.pilot_seed);
    const gce::PilotMatrix pilot = gce::generate_pilots(w.store.norm.n_t, mf.n_p, pilot_rng);
    gce::Rng rng(o.seed);
    const gce::EstimationResult res = gce::estimate(mf.set, pilot, w, cfg, mode, rng);

    json rec;
    rec["mode"] = mode == gce::EstimationMode::onebit ? "onebit" : "fullres";
    rec["n_r"] = mf.n_r;
    rec["n_t"] = w.store.norm.n_t;
    rec["n_p"] = mf.n_p;
    rec["snr_db"] = mf.set.snr_db;
    rec["noise_var"] = mf.set.noise_var;
    rec["quantization_bits"] = mf.set.quantization_bits;
    rec["latent_dim"] = cfg.latent_dim;
    rec["iterations"] = cfg.iterations;
    rec["restarts"] = cfg.restarts;
    rec["lambda"] = cfg.lambda_reg;
    rec["restart_index_chosen"] = res.restart_index_chosen;
    rec["wall_time_per_iteration_s"] = res.wall_time_per_iteration;
    rec["loss_final"] = res.loss_trace.empty() ? 0.0 : res.loss_trace.back();
    rec["loss_trace"] = res.loss_trace;
    rec["z_star"] = res.z_star;
    if (o.include_h_hat) {
      const std::size_t rows = res.h_hat.rows(), cols = res.h_hat.cols();
      std::vector<std::vector<double>> re(rows, std::vector<double>(cols));
      std::vector<std::vector<double>> im(rows, std::vector<double>(cols));
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
          re[r][c] = res.h_hat(r, c).real();
          im[r][c] = res.h_hat(r, c).imag();
        }
      rec["h_hat"] = {{"re", re}, {"im", im}};
    }
    const std::string record = rec.dump() + "\n";
    if (o.out.empty()) {
      std::fwrite(record.data(), 1, record.size(), stdout);
    } else {
      write_text_file(o.out, record);
      std::printf("wrote estimate record to %s\n", o.out.c_str());
    }
  });
}

// ---- sweep / bench -----------------------------------------------------------------

struct SweepOpts {
  std::string scenario = "smoke";
  std::vector<std::string> weights;
  std::vector<std::string> estimators;
  std::vector<double> alphas, snrs;
  std::vector<std::size_t> latent_dims;
  std::size_t trials = 0;
  std::size_t workers = 0;
  std::string mode = "fullres";
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  bool perfect_csi = false;
  bool planted = false;
  std::vector<std::string> plots{"nmse_vs_alpha", "nmse_vs_snr", "se_vs_snr"};
  std::size_t gce_iterations = 100;
  std::size_t gce_restarts = 3;
  double gce_lambda = 0.0;
  double gce_learning_rate = 1e-2;
  ChannelOpts ch;
  CLI::Option *o_estimators = nullptr, *o_alphas = nullptr, *o_snrs = nullptr, *o_dims = nullptr,
              *o_trials = nullptr, *o_workers = nullptr, *o_mode = nullptr, *o_seed = nullptr,
              *o_it = nullptr, *o_rs = nullptr, *o_lambda = nullptr, *o_lr = nullptr;
};

void add_common_sweep_options(CLI::App* cmd, SweepOpts& o) {
  cmd->add_option("--scenario", o.scenario, "Preset to start from: smoke or paper")
      ->capture_default_str();
  cmd->add_option("--weights", o.weights,
                  "Trained generator weight files (GGW1), one per latent dimension");
  o.o_estimators =
      cmd->add_option("--estimators", o.estimators,
                      "Estimators to run; default: the preset set, minus gce when no "
                      "weights are given")
          ->check(CLI::IsMember({"gce", "omp", "lasso", "gamp"}));
  o.o_dims = cmd->add_option("--latent-dims", o.latent_dims,
                             "Latent dimensions for gce rows; default: from the weight files");
  o.o_trials = cmd->add_option("--trials", o.trials, "Monte-Carlo trials per grid point");
  o.o_mode = cmd->add_option("--mode", o.mode, "Measurement resolution: fullres or onebit")
                 ->check(CLI::IsMember({"fullres", "onebit"}));
  o.o_seed = cmd->add_option("--seed", o.seed, "Master seed for the paired trial streams");
  cmd->add_option("--out-dir", o.out_dir, "Directory for CSV/SVG outputs")
      ->capture_default_str();
  o.o_it = cmd->add_option("--gce-iterations", o.gce_iterations, "Adam iterations per restart");
  o.o_rs = cmd->add_option("--gce-restarts", o.gce_restarts, "Latent restarts per trial");
  o.o_lambda = cmd->add_option("--gce-lambda", o.gce_lambda,
                               "Regularization weight (default per mode)");
  o.o_lr = cmd->add_option("--gce-learning-rate", o.gce_learning_rate, "Adam learning rate");
  add_channel_options(cmd, o.ch);
}

std::vector<gce::LoadedWeights<float>> load_generators(const std::vector<std::string>& paths) {
  std::vector<gce::LoadedWeights<float>> gens;
  gens.reserve(paths.size());
  for (const std::string& path : paths) gens.push_back(gce::load_weights<float>(path));
  return gens;
}

gce::ExperimentConfig sweep_config(const SweepOpts& o,
                                   const std::vector<gce::LoadedWeights<float>>& gens) {
  gce::ExperimentConfig cfg = gce::preset(o.scenario).experiment;
  apply_channel_overrides(o.ch, cfg.channel);
  if (o.o_alphas != nullptr && o.o_alphas->count() > 0) cfg.alphas = o.alphas;
  if (o.o_snrs != nullptr && o.o_snrs->count() > 0) cfg.snrs_db = o.snrs;
  if (o.o_workers != nullptr && o.o_workers->count() > 0) cfg.workers = o.workers;
  if (o.o_trials->count() > 0) cfg.trials = o.trials;
  if (o.o_seed->count() > 0) cfg.master_seed = o.seed;
  if (o.o_mode->count() > 0)
    cfg.mode = o.mode == "onebit" ? gce::EstimationMode::onebit : gce::EstimationMode::fullres;
  cfg.output_dir = o.out_dir;
  cfg.include_perfect_csi = o.perfect_csi;
  cfg.planted_channels = o.planted;
  if (o.o_estimators->count() > 0) {
    cfg.estimators.clear();
    for (const std::string& name : o.estimators)
      cfg.estimators.push_back(gce::parse_estimator(name));
  } else if (gens.empty()) {
    std::erase(cfg.estimators, gce::EstimatorKind::gce);
  }
  if (o.o_dims->count() > 0) {
    cfg.latent_dims = o.latent_dims;
  } else if (!gens.empty()) {
    cfg.latent_dims.clear();
    for (const auto& g : gens) {
      const std::size_t d = g.spec.input_shape.flat();
      if (std::find(cfg.latent_dims.begin(), cfg.latent_dims.end(), d) == cfg.latent_dims.end())
        cfg.latent_dims.push_back(d);
    }
  }
  if (o.o_it->count() > 0) cfg.gce.iterations = o.gce_iterations;
  if (o.o_rs->count() > 0) cfg.gce.restarts = o.gce_restarts;
  if (o.o_lambda->count() > 0)
    cfg.gce.lambda_reg = o.gce_lambda;
  else
    cfg.gce.lambda_reg = gce::GceConfig::defaults_for(cfg.mode).lambda_reg;
  if (o.o_lr->count() > 0) cfg.gce.learning_rate = o.gce_learning_rate;
  return cfg;
}

void add_sweep(CLI::App& app, SweepOpts& o) {
  CLI::App* cmd = app.add_subcommand(
      "sweep",
      "Monte-Carlo estimator comparison over a pilot-ratio x SNR grid; writes CSV and SVG");
  add_common_sweep_options(cmd, o);
  o.o_alphas = cmd->add_option("--alphas", o.alphas, "Pilot ratios N_p/N_t, each in (0, 1]");
  o.o_snrs = cmd->add_option("--snrs", o.snrs, "SNR grid in dB");
  o.o_workers = cmd->add_option("--workers", o.workers, "Grid points processed concurrently");
  cmd->add_flag("--perfect-csi", o.perfect_csi, "Add perfect-CSI reference rows");
  cmd->add_flag("--planted", o.planted,
                "Draw true channels from the first generator instead of the cluster model");
  cmd->add_option("--plots", o.plots, "Plots to render (nmse_vs_alpha, nmse_vs_snr, se_vs_snr, "
                                      "timing, none)")
      ->check(CLI::IsMember({"nmse_vs_alpha", "nmse_vs_snr", "se_vs_snr", "timing", "none"}))
      ->capture_default_str();
  cmd->callback([&o] {
    const std::vector<gce::LoadedWeights<float>> gens = load_generators(o.weights);
    const gce::ExperimentConfig cfg = sweep_config(o, gens);
    std::printf("sweep '%s': %zu alphas x %zu SNRs, %zu trials, %zu workers\n",
                cfg.scenario.c_str(), cfg.alphas.size(), cfg.snrs_db.size(), cfg.trials,
                cfg.workers);
    std::fflush(stdout);
    const gce::ResultTable table = gce::run_sweep(cfg, gens);
    print_table(table);
    ensure_dir(o.out_dir);
    const std::string csv_path = (fs::path(o.out_dir) / (o.scenario + "-results.csv")).string();
    write_text_file(csv_path, gce::results_to_csv(table));
    std::printf("results: %s\n", csv_path.c_str());
    for (const std::string& name : o.plots) {
      if (name == "none") continue;
      const std::string svg_path =
          (fs::path(o.out_dir) / (o.scenario + "-" + name + ".svg")).string();
      write_text_file(svg_path, gce::render_plot_svg(table, parse_plot_kind(name)));
      std::printf("plot: %s\n", svg_path.c_str());
    }
  });
}

void add_bench(CLI::App& app, SweepOpts& o) {
  CLI::App* cmd = app.add_subcommand(
      "bench", "Serial per-iteration timing benchmark at pinned pilot ratios; writes CSV and SVG");
  add_common_sweep_options(cmd, o);
  cmd->callback([&o] {
    const std::vector<gce::LoadedWeights<float>> gens = load_generators(o.weights);
    const gce::ExperimentConfig cfg = sweep_config(o, gens);
    const gce::ResultTable table = gce::timing_benchmark(cfg, gens);
    print_table(table);
    ensure_dir(o.out_dir);
    const std::string base = (fs::path(o.out_dir) / (o.scenario + "-timing")).string();
    const std::vector<std::string> paths = gce::emit_plots(table, gce::PlotKind::timing, base);
    std::printf("timing results: %s\nplot: %s\n", paths[0].c_str(), paths[1].c_str());
  });
}

// ---- inspect-weights ---------------------------------------------------------------

const char* kind_name(gce::LayerKind k) {
  switch (k) {
    case gce::LayerKind::dense: return "dense";
    case gce::LayerKind::reshape: return "reshape";
    case gce::LayerKind::upsample2x: return "upsample2x";
    case gce::LayerKind::conv2d: return "conv2d";
    case gce::LayerKind::batchnorm: return "batchnorm";
    case gce::LayerKind::activation: return "activation";
  }
  return "?";
}

const char* act_name(gce::Activation a) {
  switch (a) {
    case gce::Activation::linear: return "linear";
    case gce::Activation::relu: return "relu";
    case gce::Activation::leaky_relu: return "leaky_relu";
  }
  return "?";
}

std::string layer_detail(const gce::LayerSpec& l, const gce::Shape& out) {
  char buf[128];
  switch (l.kind) {
    case gce::LayerKind::dense:
      std::snprintf(buf, sizeof buf, "%zu -> %zu", l.in, l.out);
      break;
    case gce::LayerKind::reshape:
    case gce::LayerKind::upsample2x:
      std::snprintf(buf, sizeof buf, "-> %zu x %zu x %zu", out.h, out.w, out.c);
      break;
    case gce::LayerKind::conv2d:
      std::snprintf(buf, sizeof buf, "%zux%zu kernel, stride %zu, %zu -> %zu channels", l.kernel,
                    l.kernel, l.stride, l.in_ch, l.out_ch);
      break;
    case gce::LayerKind::batchnorm:
      std::snprintf(buf, sizeof buf, "%zu channels", l.channels);
      break;
    case gce::LayerKind::activation:
      std::snprintf(buf, sizeof buf, "%s", act_name(l.act));
      break;
    default:
      buf[0] = '\0';
  }
  return buf;
}

struct InspectOpts {
  std::string path;
  bool as_json = false;
};

void add_inspect(CLI::App& app, InspectOpts& o) {
  CLI::App* cmd =
      app.add_subcommand("inspect-weights", "Summarize the network stored in a GGW1 file");
  cmd->add_option("file", o.path, "Weights file (GGW1)")->required();
  cmd->add_flag("--json", o.as_json, "Emit the summary as JSON");
  cmd->callback([&o] {
    const gce::LoadedWeights<float> w = gce::load_weights<float>(o.path);
    const std::vector<gce::Shape> shapes = gce::infer_shapes(w.spec);
    const gce::Shape out = shapes.back();
    const std::size_t d = w.spec.input_shape.flat();
    const gce::NormalizationStats& st = w.store.norm;
    if (o.as_json) {
      json rec;
      rec["path"] = o.path;
      rec["latent_dim"] = d;
      rec["output_shape"] = {{"h", out.h}, {"w", out.w}, {"c", out.c}};
      json layers = json::array();
      for (std::size_t i = 0; i < w.spec.layers.size(); ++i) {
        json l;
        l["kind"] = kind_name(w.spec.layers[i].kind);
        l["detail"] = layer_detail(w.spec.layers[i], shapes[i + 1]);
        l["out_shape"] = {shapes[i + 1].h, shapes[i + 1].w, shapes[i + 1].c};
        l["parameters"] = w.store.params[i].a.size() + w.store.params[i].b.size();
        l["running_stats"] = w.store.bn[i].mean.size() + w.store.bn[i].var.size();
        layers.push_back(l);
      }
      rec["layers"] = layers;
      rec["total_parameters"] = parameter_count(w.store);
      if (st.mu.empty()) {
        rec["normalization"] = nullptr;
      } else {
        const auto mu = std::minmax_element(st.mu.begin(), st.mu.end());
        const auto sg = std::minmax_element(st.sigma.begin(), st.sigma.end());
        rec["normalization"] = {{"n_r", st.n_r},
                                {"n_t", st.n_t},
                                {"mu_min", *mu.first},
                                {"mu_max", *mu.second},
                                {"sigma_min", *sg.first},
                                {"sigma_max", *sg.second}};
      }
      std::printf("%s\n", rec.dump(2).c_str());
      return;
    }
    std::printf("%s: generator, latent %zu -> %zu x %zu x %zu\n", o.path.c_str(), d, out.h, out.w,
                out.c);
    std::printf("%-4s %-11s %-44s %10s\n", "idx", "kind", "detail", "params");
    for (std::size_t i = 0; i < w.spec.layers.size(); ++i) {
      const std::size_t p = w.store.params[i].a.size() + w.store.params[i].b.size();
      const std::size_t r = w.store.bn[i].mean.size() + w.store.bn[i].var.size();
      char params[48];
      if (r > 0)
        std::snprintf(params, sizeof params, "%zu (+%zu)", p, r);
      else
        std::snprintf(params, sizeof params, "%zu", p);
      std::printf("%-4zu %-11s %-44s %10s\n", i, kind_name(w.spec.layers[i].kind),
                  layer_detail(w.spec.layers[i], shapes[i + 1]).c_str(), params);
    }
    std::printf("total trainable parameters: %zu\n", parameter_count(w.store));
    if (st.mu.empty()) {
      std::printf("normalization: none\n");
    } else {
      const auto mu = std::minmax_element(st.mu.begin(), st.mu.end());
      const auto sg = std::minmax_element(st.sigma.begin(), st.sigma.end());
      std::printf("normalization: %zu x %zu, mu in [%.4g, %.4g], sigma in [%.4g, %.4g]\n", st.n_r,
                  st.n_t, *mu.first, *mu.second, *sg.first, *sg.second);
    }
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compressed-sensing MIMO channel estimation with a deep generative prior"};
  app.set_version_flag("--version", std::string("gce ") + kVersion);
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "INI config file with one [subcommand] section per command; command-line flags "
                 "take precedence");

  GenDataOpts gen_data_opts;
  TrainOpts train_opts;
  EstimateOpts estimate_opts;
  SweepOpts sweep_opts, bench_opts;
  InspectOpts inspect_opts;
  add_gen_data(app, gen_data_opts);
  add_train(app, train_opts);
  add_estimate(app, estimate_opts);
  add_sweep(app, sweep_opts);
  add_bench(app, bench_opts);
  add_inspect(app, inspect_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const gce::config_error& e) {
    std::fprintf(stderr, "gce: %s\n", e.what());
    return 1;
  } catch (const gce::argument_error& e) {
    std::fprintf(stderr, "gce: %s\n", e.what());
    return 1;
  } catch (const gce::format_error& e) {
    std::fprintf(stderr, "gce: %s\n", e.what());
    return 2;
  } catch (const gce::unsupported_error& e) {
    std::fprintf(stderr, "gce: %s\n", e.what());
    return 2;
  } catch (const gce::numerical_error& e) {
    std::fprintf(stderr, "gce: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "gce: internal error: %s\n", e.what());
    return 3;
  }
  return 0;
}
