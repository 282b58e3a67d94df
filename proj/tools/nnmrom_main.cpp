// nnmrom command-line front end: data generation, training, prediction,
// spectral analysis and end-to-end pipeline runs with reproducible seeds.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "nnmrom/autoencoder.hpp"
#include "nnmrom/chain.hpp"
#include "nnmrom/config.hpp"
#include "nnmrom/csv.hpp"
#include "nnmrom/digest.hpp"
#include "nnmrom/errors.hpp"
#include "nnmrom/regressor.hpp"
#include "nnmrom/rom.hpp"
#include "nnmrom/signal.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nnmrom;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("short write to '" + path + "'");
}

// Tracks every file a command produces so the manifest is complete.
class OutputSet {
 public:
  void add(const std::string& path) { files_.push_back(path); }

  void write_manifest(const std::string& path) {
    json entries = json::array();
    for (const std::string& f : files_) {
      entries.push_back({{"path", f}, {"digest", digest_hex(digest_file(f))}});
    }
    json j;
    j["files"] = entries;
    write_text(path, j.dump(2) + "\n");
  }

 private:
  std::vector<std::string> files_;
};

struct SeedOverride {
  bool flag_set = false;
  std::uint64_t flag_value = 0;

  void apply(config::ExperimentConfig& cfg) const {
    if (const char* env = std::getenv("NNMROM_SEED")) {
      char* end = nullptr;
      const unsigned long long v = std::strtoull(env, &end, 10);
      if (!end || *end != '\0')
        throw InvalidParams("NNMROM_SEED is not an unsigned integer");
      cfg.override_seed(v);
    }
    if (flag_set) cfg.override_seed(flag_value);
  }
};

config::ExperimentConfig load_cfg(const std::string& path, const SeedOverride& seed) {
  config::ExperimentConfig cfg =
      path.empty() ? config::default_config() : config::load_config(path);
  seed.apply(cfg);
  cfg.validate();
  return cfg;
}

json dataset_metadata(const config::ExperimentConfig& cfg,
                      const std::string& csv_path, double wall_seconds) {
  json meta;
  meta["config"] = json::parse(config::serialize_config(cfg));
  meta["config_digest"] = config::config_digest_hex(cfg);
  meta["data_digest"] = digest_hex(digest_file(csv_path));
  meta["generated_at"] = now_iso8601();
  meta["wall_seconds"] = wall_seconds;
  return meta;
}

Dataset run_simulation(const config::ExperimentConfig& cfg, bool velocities,
                       double discard_seconds) {
  const sim::ChainSystem sys = sim::build_chain(cfg.system);
  const MultiChannelSeries forcing = sim::generate_forcing(cfg.forcing);
  sim::SimulateOptions opts;
  opts.record_velocities = velocities;
  sim::SimResult res =
      sim::simulate(sys, forcing, sim::State::zero(cfg.system.n_dof), opts);

  Dataset ds;
  ds.forcing = forcing;
  ds.response = std::move(res.displacement);
  ds.velocity = std::move(res.velocity);
  if (discard_seconds > 0.0) {
    const auto drop = static_cast<std::size_t>(discard_seconds * cfg.forcing.fs);
    if (drop >= ds.response.steps())
      throw InvalidParams("--discard removes the whole series");
    ds.forcing = ds.forcing.slice(drop, ds.forcing.steps());
    ds.response = ds.response.slice(drop, ds.response.steps());
    if (ds.velocity.channels)
      ds.velocity = ds.velocity.slice(drop, ds.velocity.steps());
  }
  return ds;
}

int cmd_simulate(const std::string& config_path, const SeedOverride& seed,
                 std::string out_dir, bool velocities, double discard,
                 double duration_override) {
  config::ExperimentConfig cfg = load_cfg(config_path, seed);
  if (duration_override > 0.0) cfg.forcing.duration = duration_override;
  cfg.validate();
  if (out_dir.empty()) out_dir = cfg.output_dir;
  fs::create_directories(out_dir);

  const auto t0 = std::chrono::steady_clock::now();
  const Dataset ds = run_simulation(cfg, velocities, discard);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const std::string csv_path = out_dir + "/dataset.csv";
  write_dataset_csv(csv_path, ds);
  write_text(csv_path + ".meta.json", dataset_metadata(cfg, csv_path, wall).dump(2) + "\n");
  std::printf("wrote %s (%zu steps, %zu forcing + %zu response channels)\n",
              csv_path.c_str(), ds.response.steps(), ds.forcing.channels,
              ds.response.channels);
  return kExitOk;
}

int cmd_train_ae(const std::string& data_path, std::size_t latent, double split,
                 const std::string& out_path, std::size_t epochs,
                 std::size_t batch, double lr, std::size_t patience,
                 const SeedOverride& seed, bool verbose) {
  const Dataset ds = read_dataset_csv(data_path);
  ae::AeTrainConfig tc;
  tc.epochs = epochs;
  tc.batch = batch;
  tc.lr = lr;
  tc.patience = patience;
  tc.verbose = verbose;
  config::ExperimentConfig base = config::default_config();
  seed.apply(base);
  tc.seed = base.ae_train.seed;

  const ae::AeArchitecture arch =
      ae::AeArchitecture::standard(ds.response.channels, latent);
  const ae::AutoencoderModel model = ae::ae_train(ds.response, arch, split, tc);
  ae::save_model(out_path, model);
  const ae::EpochStats& best = model.history[model.best_epoch];
  std::printf("trained autoencoder: best epoch %zu, train mse %.4e, test mse %.4e\n",
              model.best_epoch, best.train_mse_raw, best.test_mse_raw);
  std::printf("wrote %s\n", out_path.c_str());
  return kExitOk;
}

int cmd_train_lstm(const std::string& data_path, const std::string& ae_path,
                   std::size_t lag, std::size_t hidden, double train_frac,
                   const std::string& out_path, std::size_t epochs,
                   std::size_t window, std::size_t lanes, double lr,
                   std::size_t patience, const SeedOverride& seed, bool verbose) {
  const Dataset ds = read_dataset_csv(data_path);
  const ae::AutoencoderModel aemodel = ae::load_model(ae_path);
  const MultiChannelSeries latents = ae::encode(aemodel, ds.response);

  reg::RegressorConfig rc;
  rc.lag = lag;
  rc.hidden = hidden;
  rc.train_fraction = train_frac;
  rc.n_forcing = ds.forcing.channels;
  rc.n_latent = aemodel.arch.bottleneck;

  reg::RegTrainConfig tc;
  tc.epochs = epochs;
  tc.window = window;
  tc.lanes = lanes;
  tc.lr = lr;
  tc.patience = patience;
  tc.verbose = verbose;
  config::ExperimentConfig base = config::default_config();
  seed.apply(base);
  tc.seed = base.reg_train.seed;

  const auto n_reg = static_cast<std::size_t>(
      static_cast<double>(latents.steps()) * train_frac);
  const reg::FeatureDataset features = reg::build_features(
      ds.forcing.slice(0, n_reg), latents.slice(0, n_reg), lag);
  const reg::LatentRegressor model = reg::train_teacher_forced(features, rc, tc);
  reg::save_regressor(out_path, model);
  std::printf("trained regressor: best epoch %zu, val mse %.4e\n", model.best_epoch,
              model.history[model.best_epoch].second);
  std::printf("wrote %s\n", out_path.c_str());
  return kExitOk;
}

int cmd_fit(const std::string& config_path, const SeedOverride& seed,
            const std::string& data_path, const std::string& out_path) {
  config::ExperimentConfig cfg = load_cfg(config_path, seed);
  const Dataset ds = read_dataset_csv(data_path);

  rom::FitConfig fc = cfg.fit_config();
  fc.arch = ae::AeArchitecture::standard(ds.response.channels, cfg.ae_latent);
  fc.reg_cfg.n_forcing = ds.forcing.channels;
  fc.data_digest = digest_hex(digest_file(data_path));
  const rom::RomArtifact art = rom::fit_rom(ds, fc);
  rom::save_artifact(out_path, art);
  std::printf("wrote %s (artifact digest %s)\n", out_path.c_str(),
              digest_hex(digest_file(out_path)).c_str());
  return kExitOk;
}

int cmd_predict(const std::string& rom_path, const std::string& forcing_path,
                std::size_t horizon, std::size_t start, const std::string& out_path,
                const std::string& latent_out) {
  const rom::RomArtifact art = rom::load_artifact(rom_path);
  const Dataset ds = read_dataset_csv(forcing_path);
  const std::size_t lag = art.regressor.config.lag;
  if (horizon == 0) horizon = art.regressor.config.horizon;
  if (start == 0) start = 2 * lag;
  if (start < lag) throw InvalidParams("--start must be at least the model lag");
  if (start + horizon > ds.forcing.steps())
    throw SeriesTooShort("dataset too short for the requested window");

  rom::WarmupData warm;
  const std::size_t w0 = start >= 2 * lag ? start - 2 * lag : start - lag;
  warm.forcing = ds.forcing.slice(w0, start);
  warm.displacement = ds.response.slice(w0, start);

  reg::FreeRunResult latent_run;
  const MultiChannelSeries pred =
      rom::rom_predict(art, ds.forcing.slice(start, start + horizon), warm,
                       horizon, &latent_run);
  if (!latent_run.complete)
    std::fprintf(stderr, "warning: prediction became non-finite at step %zu\n",
                 latent_run.failed_step);

  // Physical prediction with truth overlay where available.
  const std::size_t got = pred.steps();
  const std::size_t nd = pred.channels;
  MultiChannelSeries out(pred.dt, 2 * nd, got);
  for (std::size_t ch = 0; ch < nd; ++ch)
    out.labels.push_back("x" + std::to_string(ch + 1) + "_pred");
  for (std::size_t ch = 0; ch < nd; ++ch)
    out.labels.push_back("x" + std::to_string(ch + 1) + "_true");
  for (std::size_t i = 0; i < got; ++i) {
    for (std::size_t ch = 0; ch < nd; ++ch) {
      out.at(i, ch) = pred.at(i, ch);
      out.at(i, nd + ch) = ds.response.at(start + i, ch);
    }
  }
  write_series_csv(out_path, out);
  std::printf("wrote %s (%zu steps)\n", out_path.c_str(), got);

  if (!latent_out.empty()) {
    const MultiChannelSeries latents_true = ae::encode(
        art.autoencoder, ds.response.slice(start, start + got));
    MultiChannelSeries lx(pred.dt, 2 * latents_true.channels, got);
    for (std::size_t ch = 0; ch < latents_true.channels; ++ch)
      lx.labels.push_back("y" + std::to_string(ch + 1) + "_pred");
    for (std::size_t ch = 0; ch < latents_true.channels; ++ch)
      lx.labels.push_back("y" + std::to_string(ch + 1) + "_true");
    for (std::size_t i = 0; i < got; ++i) {
      for (std::size_t ch = 0; ch < latents_true.channels; ++ch) {
        lx.at(i, ch) = latent_run.latents.at(i, ch);
        lx.at(i, latents_true.channels + ch) = latents_true.at(i, ch);
      }
    }
    write_series_csv(latent_out, lx);
    std::printf("wrote %s\n", latent_out.c_str());
  }
  return kExitOk;
}

int cmd_evaluate(const std::string& rom_path, const std::string& data_path,
                 const std::string& report_path, std::size_t horizon,
                 const std::string& plot_dir) {
  const rom::RomArtifact art = rom::load_artifact(rom_path);
  const Dataset ds = read_dataset_csv(data_path);
  if (horizon == 0) horizon = art.regressor.config.horizon;
  if (!plot_dir.empty()) fs::create_directories(plot_dir);
  const rom::EvaluationReport rep = rom::evaluate(art, ds, horizon, plot_dir);
  write_text(report_path, rom::report_json(rep) + "\n");
  std::printf("eval window [%zu, %zu): aggregate nmse %.4f, bounded=%s\n",
              rep.eval_start, rep.eval_start + rep.horizon, rep.aggregate_nmse,
              rep.bounded ? "yes" : "no");
  std::printf("wrote %s\n", report_path.c_str());
  return kExitOk;
}

int cmd_analyze(const std::string& data_path, const std::string& config_path,
                const SeedOverride& seed, bool linear_baseline,
                std::size_t force_dof, bool latent_corr,
                const std::string& ae_path, std::string out_dir,
                std::size_t segment, double overlap, const std::string& window,
                bool calibrate) {
  if (latent_corr && ae_path.empty())
    throw InvalidParams("--latent-corr requires --ae <model>");

  fs::create_directories(out_dir.empty() ? "." : out_dir);
  if (out_dir.empty()) out_dir = ".";

  // The linear twin and calibration need the generating config: take it from
  // --config or from the dataset metadata sidecar.
  config::ExperimentConfig cfg;
  bool have_cfg = false;
  if (!config_path.empty()) {
    cfg = load_cfg(config_path, seed);
    have_cfg = true;
  } else if (fs::exists(data_path + ".meta.json")) {
    std::ifstream in(data_path + ".meta.json");
    json meta = json::parse(in);
    cfg = config::parse_config(meta.at("config").dump());
    seed.apply(cfg);
    have_cfg = true;
  }

  if (calibrate) {
    if (!have_cfg)
      throw InvalidParams("--calibrate requires --config or a dataset sidecar");
    const double std_cal = sim::calibrate_forcing_std(cfg.system, cfg.forcing);
    std::printf("calibrated forcing std: %.6g N (target cubic/linear rms ratio 1)\n",
                std_cal);
    return kExitOk;
  }

  const Dataset ds = read_dataset_csv(data_path);
  signal::WelchParams wp{segment, overlap, window};

  const std::vector<std::size_t> drive = ds.drive_dofs();
  if (drive.size() != 2)
    throw InvalidParams("analyze expects exactly two forcing channels");
  const std::vector<double> f0 = ds.forcing.channel(0);
  const std::vector<double> f1 = ds.forcing.channel(1);

  double nl_mean = 0.0;
  for (std::size_t dof = 0; dof < ds.response.channels; ++dof) {
    const std::vector<double> y = ds.response.channel(dof);
    const signal::SpectralEstimate g2 =
        signal::multicoherence(f0, f1, y, 1.0 / ds.response.dt, wp);
    signal::export_spectral_csv(
        out_dir + "/coherence_dof" + std::to_string(dof + 1) + ".csv", g2);
    nl_mean += signal::band_mean(g2, 0.5, 8.0);
  }
  nl_mean /= static_cast<double>(ds.response.channels);
  std::printf("mean multicoherence over 0.5-8 Hz: %.4f\n", nl_mean);

  if (linear_baseline) {
    if (!have_cfg)
      throw InvalidParams("--linear-baseline requires --config or a dataset sidecar");
    config::ExperimentConfig lin = cfg;
    lin.system.k_nl = 0.0;
    const Dataset lds = run_simulation(lin, false, 0.0);
    double lin_mean = 0.0;
    const std::vector<double> lf0 = lds.forcing.channel(0);
    const std::vector<double> lf1 = lds.forcing.channel(1);
    for (std::size_t dof = 0; dof < lds.response.channels; ++dof) {
      const std::vector<double> y = lds.response.channel(dof);
      const signal::SpectralEstimate g2 =
          signal::multicoherence(lf0, lf1, y, 1.0 / lds.response.dt, wp);
      signal::export_spectral_csv(
          out_dir + "/coherence_linear_dof" + std::to_string(dof + 1) + ".csv", g2);
      lin_mean += signal::band_mean(g2, 0.5, 8.0);
    }
    lin_mean /= static_cast<double>(lds.response.channels);
    std::printf("linear-baseline mean multicoherence over 0.5-8 Hz: %.4f "
                "(contrast %.4f)\n",
                lin_mean, lin_mean - nl_mean);
  }

  if (force_dof > 0) {
    if (force_dof > ds.response.channels)
      throw IndexOutOfRange("--force-dof out of range");
    if (!have_cfg)
      throw InvalidParams("element forces require --config or a dataset sidecar");
    const sim::ChainSystem sys = sim::build_chain(cfg.system);
    const MultiChannelSeries forces = sim::element_force_histories(
        sys, ds.response, ds.velocity, force_dof - 1);
    const std::string path =
        out_dir + "/force_dof" + std::to_string(force_dof) + ".csv";
    {
      std::ofstream outf(path);
      if (!outf) throw IoError("cannot write '" + path + "'");
      outf << "t,linear,cubic\n";
      char buf[128];
      for (std::size_t i = 0; i < forces.steps(); ++i) {
        std::snprintf(buf, sizeof buf, "%.12e,%.12e,%.12e\n",
                      static_cast<double>(i) * forces.dt, forces.at(i, 0),
                      forces.at(i, 1));
        outf << buf;
      }
    }
    const double ratio = sim::restoring_force_ratio(sys, ds.response, ds.velocity,
                                                    force_dof - 1);
    std::printf("dof %zu rms cubic/linear force ratio: %.3f (wrote %s)\n",
                force_dof, ratio, path.c_str());
  }

  if (latent_corr) {
    const ae::AutoencoderModel model = ae::load_model(ae_path);
    const MultiChannelSeries z = ae::encode(model, ds.response);
    const Matrix corr = signal::correlation_matrix(z);
    const std::string path = out_dir + "/latent_correlation.csv";
    std::ofstream outf(path);
    if (!outf) throw IoError("cannot write '" + path + "'");
    char buf[32];
    for (std::size_t i = 0; i < corr.rows; ++i) {
      for (std::size_t j = 0; j < corr.cols; ++j) {
        std::snprintf(buf, sizeof buf, "%s%.6f", j ? "," : "", corr.at(i, j));
        outf << buf;
      }
      outf << "\n";
    }
    std::printf("wrote %s\n", path.c_str());
  }
  return kExitOk;
}

int cmd_full_run(const std::string& config_path, const SeedOverride& seed,
                 std::string out_dir) {
  config::ExperimentConfig cfg = load_cfg(config_path, seed);
  if (out_dir.empty()) out_dir = cfg.output_dir;
  fs::create_directories(out_dir);
  fs::create_directories(out_dir + "/plots");

  const std::string partial_marker = out_dir + "/.partial";
  write_text(partial_marker, "run in progress\n");
  OutputSet outputs;

  // Stage 1: simulate.
  const auto t0 = std::chrono::steady_clock::now();
  const std::string cfg_path = out_dir + "/config.json";
  write_text(cfg_path, config::serialize_config(cfg) + "\n");
  outputs.add(cfg_path);

  const Dataset ds = run_simulation(cfg, false, 0.0);
  const std::string csv_path = out_dir + "/dataset.csv";
  write_dataset_csv(csv_path, ds);
  outputs.add(csv_path);
  const double sim_wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_text(csv_path + ".meta.json",
             dataset_metadata(cfg, csv_path, sim_wall).dump(2) + "\n");
  outputs.add(csv_path + ".meta.json");

  // Stage 2: fit the ROM.
  rom::FitConfig fc = cfg.fit_config();
  fc.data_digest = digest_hex(digest_file(csv_path));
  const rom::RomArtifact art = rom::fit_rom(ds, fc);

  const std::string ae_path = out_dir + "/model.ae";
  ae::save_model(ae_path, art.autoencoder);
  outputs.add(ae_path);
  outputs.add(ae_path + ".meta.json");
  const std::string lstm_path = out_dir + "/model.lstm";
  reg::save_regressor(lstm_path, art.regressor);
  outputs.add(lstm_path);
  outputs.add(lstm_path + ".meta.json");
  const std::string rom_path = out_dir + "/rom.bin";
  rom::save_artifact(rom_path, art);
  outputs.add(rom_path);

  // Stage 3: evaluate out-of-sample.
  const rom::EvaluationReport rep =
      rom::evaluate(art, ds, cfg.regressor.horizon, out_dir + "/plots");
  const std::string report_path = out_dir + "/report.json";
  write_text(report_path, rom::report_json(rep) + "\n");
  outputs.add(report_path);
  for (const std::string& p : rep.plot_files) outputs.add(p);

  outputs.write_manifest(out_dir + "/manifest.json");
  fs::remove(partial_marker);

  std::printf("full run complete: eval window [%zu, %zu), aggregate nmse %.4f\n",
              rep.eval_start, rep.eval_start + rep.horizon, rep.aggregate_nmse);
  std::printf("artifact digest %s\n", digest_hex(digest_file(rom_path)).c_str());
  std::printf("manifest %s\n", (out_dir + "/manifest.json").c_str());
  return kExitOk;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"Data-driven reduced order modelling of a nonlinear chain: "
               "simulate, extract latent coordinates, regress, reconstruct."};
  app.require_subcommand(1);

  SeedOverride seed;
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>(
        "--seed",
        [&](const std::uint64_t& v) {
          seed.flag_set = true;
          seed.flag_value = v;
        },
        "Override the global seed (also via NNMROM_SEED)");
  };

  // simulate
  std::string sim_config, sim_out;
  bool sim_vel = false;
  double sim_discard = 0.0, sim_duration = 0.0;
  CLI::App* c_sim = app.add_subcommand("simulate", "Generate forcing and integrate the chain");
  c_sim->add_option("--config", sim_config, "Experiment config JSON");
  c_sim->add_option("--out", sim_out, "Output directory (default: config output_dir)");
  c_sim->add_flag("--velocities", sim_vel, "Record velocity channels");
  c_sim->add_option("--discard", sim_discard, "Drop this many leading seconds");
  c_sim->add_option("--duration", sim_duration, "Override forcing duration [s]");
  add_seed(c_sim);

  // train-ae
  std::string ta_data, ta_out = "model.ae";
  std::size_t ta_latent = 10, ta_epochs = 200, ta_batch = 256, ta_patience = 20;
  double ta_split = 0.5, ta_lr = 1e-3;
  bool ta_verbose = false;
  CLI::App* c_ta = app.add_subcommand("train-ae", "Train the autoencoder");
  c_ta->add_option("--data", ta_data, "Dataset CSV")->required();
  c_ta->add_option("--latent", ta_latent, "Bottleneck width");
  c_ta->add_option("--split", ta_split, "Training fraction (time-ordered)");
  c_ta->add_option("--out", ta_out, "Model output path");
  c_ta->add_option("--epochs", ta_epochs, "Max epochs");
  c_ta->add_option("--batch", ta_batch, "Mini-batch size");
  c_ta->add_option("--lr", ta_lr, "Adam learning rate");
  c_ta->add_option("--patience", ta_patience, "Early-stopping patience");
  c_ta->add_flag("--verbose", ta_verbose, "Per-epoch progress");
  add_seed(c_ta);

  // train-lstm
  std::string tl_data, tl_ae, tl_out = "model.lstm";
  std::size_t tl_lag = 100, tl_hidden = 64, tl_epochs = 60, tl_window = 200,
              tl_lanes = 16, tl_patience = 8;
  double tl_frac = 0.6, tl_lr = 1e-3;
  bool tl_verbose = false;
  CLI::App* c_tl = app.add_subcommand("train-lstm", "Train the latent regressor");
  c_tl->add_option("--data", tl_data, "Dataset CSV")->required();
  c_tl->add_option("--ae", tl_ae, "Trained autoencoder model")->required();
  c_tl->add_option("--lag", tl_lag, "History window length");
  c_tl->add_option("--hidden", tl_hidden, "LSTM hidden width");
  c_tl->add_option("--train-frac", tl_frac, "Training fraction");
  c_tl->add_option("--out", tl_out, "Model output path");
  c_tl->add_option("--epochs", tl_epochs, "Max epochs");
  c_tl->add_option("--window", tl_window, "Truncated-BPTT window");
  c_tl->add_option("--lanes", tl_lanes, "Lockstep sequence chunks");
  c_tl->add_option("--lr", tl_lr, "Adam learning rate");
  c_tl->add_option("--patience", tl_patience, "Early-stopping patience");
  c_tl->add_flag("--verbose", tl_verbose, "Per-epoch progress");
  add_seed(c_tl);

  // fit
  std::string fit_config, fit_data, fit_out = "rom.bin";
  CLI::App* c_fit = app.add_subcommand("fit", "Train autoencoder + regressor into one artifact");
  c_fit->add_option("--config", fit_config, "Experiment config JSON");
  c_fit->add_option("--data", fit_data, "Dataset CSV")->required();
  c_fit->add_option("--out", fit_out, "Artifact output path");
  add_seed(c_fit);

  // predict
  std::string pr_rom, pr_forcing, pr_out = "pred.csv", pr_latent;
  std::size_t pr_horizon = 0, pr_start = 0;
  CLI::App* c_pr = app.add_subcommand("predict", "Free-run prediction from an artifact");
  c_pr->add_option("--rom", pr_rom, "Artifact file")->required();
  c_pr->add_option("--forcing", pr_forcing, "Dataset CSV with forcing (+ warmup displacement)")->required();
  c_pr->add_option("--horizon", pr_horizon, "Steps to predict (default: model horizon)");
  c_pr->add_option("--start", pr_start, "Prediction start row (default: 2x lag)");
  c_pr->add_option("--out", pr_out, "Prediction CSV path");
  c_pr->add_option("--latent-out", pr_latent, "Also write the latent prediction CSV");

  // evaluate
  std::string ev_rom, ev_data, ev_report = "report.json", ev_plots;
  std::size_t ev_horizon = 0;
  CLI::App* c_ev = app.add_subcommand("evaluate", "Out-of-sample evaluation report");
  c_ev->add_option("--rom", ev_rom, "Artifact file")->required();
  c_ev->add_option("--data", ev_data, "Truth dataset CSV")->required();
  c_ev->add_option("--report", ev_report, "Report output path");
  c_ev->add_option("--horizon", ev_horizon, "Evaluation horizon (default: model horizon)");
  c_ev->add_option("--plots", ev_plots, "Directory for plot-data CSVs");

  // analyze
  std::string an_data, an_config, an_ae, an_out = ".", an_window = "hann";
  bool an_linear = false, an_latent = false, an_calibrate = false;
  std::size_t an_force_dof = 0, an_segment = 4096;
  double an_overlap = 0.5;
  CLI::App* c_an = app.add_subcommand("analyze", "Spectral and force diagnostics");
  c_an->add_option("--data", an_data, "Dataset CSV")->required();
  c_an->add_option("--config", an_config, "Config (for the linear twin / forces)");
  c_an->add_flag("--linear-baseline", an_linear, "Also analyze the k_nl=0 twin");
  c_an->add_option("--force-dof", an_force_dof, "Emit element forces at this 1-based DOF");
  c_an->add_flag("--latent-corr", an_latent, "Emit latent correlation matrix (needs --ae)");
  c_an->add_option("--ae", an_ae, "Trained autoencoder model");
  c_an->add_option("--out", an_out, "Output directory");
  c_an->add_option("--segment", an_segment, "Welch segment length");
  c_an->add_option("--overlap", an_overlap, "Welch overlap fraction");
  c_an->add_option("--window", an_window, "Welch window (hann|hamming|rect)");
  c_an->add_flag("--calibrate", an_calibrate, "Calibrate the forcing amplitude and exit");
  add_seed(c_an);

  // full-run
  std::string fr_config, fr_out;
  CLI::App* c_fr = app.add_subcommand("full-run", "simulate + fit + evaluate with a manifest");
  c_fr->add_option("--config", fr_config, "Experiment config JSON");
  c_fr->add_option("--out", fr_out, "Output directory (default: config output_dir)");
  add_seed(c_fr);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // exits 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (c_sim->parsed())
    return cmd_simulate(sim_config, seed, sim_out, sim_vel, sim_discard, sim_duration);
  if (c_ta->parsed())
    return cmd_train_ae(ta_data, ta_latent, ta_split, ta_out, ta_epochs, ta_batch,
                        ta_lr, ta_patience, seed, ta_verbose);
  if (c_tl->parsed())
    return cmd_train_lstm(tl_data, tl_ae, tl_lag, tl_hidden, tl_frac, tl_out,
                          tl_epochs, tl_window, tl_lanes, tl_lr, tl_patience,
                          seed, tl_verbose);
  if (c_fit->parsed()) return cmd_fit(fit_config, seed, fit_data, fit_out);
  if (c_pr->parsed())
    return cmd_predict(pr_rom, pr_forcing, pr_horizon, pr_start, pr_out, pr_latent);
  if (c_ev->parsed())
    return cmd_evaluate(ev_rom, ev_data, ev_report, ev_horizon, ev_plots);
  if (c_an->parsed())
    return cmd_analyze(an_data, an_config, seed, an_linear, an_force_dof,
                       an_latent, an_ae, an_out, an_segment, an_overlap,
                       an_window, an_calibrate);
  if (c_fr->parsed()) return cmd_full_run(fr_config, seed, fr_out);
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const NonFiniteState& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const NonFiniteLoss& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const NonFinitePrediction& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kExitIo;
  } catch (const CorruptFile& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kExitIo;
  } catch (const VersionMismatch& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kExitIo;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
}
