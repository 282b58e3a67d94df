#include "nnmrom/rom.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "nnmrom/errors.hpp"
#include "nnmrom/signal.hpp"

namespace nnmrom::rom {

using nlohmann::json;

void RomArtifact::validate() const {
  if (autoencoder.arch.bottleneck != regressor.config.n_latent)
    throw ConfigInconsistent("artifact: bottleneck != regressor latent width");
  regressor.validate();
  if (provenance.config_digest.empty() || provenance.data_digest.empty())
    throw ConfigInconsistent("artifact: provenance digests must be non-empty");
}

RomArtifact fit_rom(const Dataset& ds, const FitConfig& cfg) {
  ds.validate();
  cfg.arch.validate(true);
  cfg.reg_cfg.validate();
  if (cfg.arch.input_dim != ds.response.channels)
    throw ConfigInconsistent("fit: architecture input_dim != response channels");
  if (cfg.arch.bottleneck != cfg.reg_cfg.n_latent)
    throw ConfigInconsistent("fit: bottleneck != regressor latent width");
  if (cfg.reg_cfg.n_forcing != ds.forcing.channels)
    throw ConfigInconsistent("fit: regressor forcing width != dataset forcing");

  RomArtifact art;
  art.autoencoder = ae::ae_train(ds.response, cfg.arch, cfg.ae_split, cfg.ae_train);

  const MultiChannelSeries latents = ae::encode(art.autoencoder, ds.response);
  const std::size_t n = latents.steps();
  const auto n_reg = static_cast<std::size_t>(static_cast<double>(n) *
                                              cfg.reg_cfg.train_fraction);
  if (n_reg <= cfg.reg_cfg.lag + 1)
    throw SeriesTooShort("fit: regressor training span not longer than lag");

  const reg::FeatureDataset features =
      reg::build_features(ds.forcing.slice(0, n_reg), latents.slice(0, n_reg),
                          cfg.reg_cfg.lag);
  art.regressor = reg::train_teacher_forced(features, cfg.reg_cfg, cfg.reg_train);

  art.provenance.config_digest = cfg.config_digest;
  art.provenance.data_digest = cfg.data_digest;
  art.provenance.seed = cfg.seed;
  art.provenance.ae_seed = cfg.ae_train.seed;
  art.provenance.reg_seed = cfg.reg_train.seed;
  art.provenance.ae_split = cfg.ae_split;
  art.validate();
  return art;
}

MultiChannelSeries rom_predict(const RomArtifact& art,
                               const MultiChannelSeries& forcing_future,
                               const WarmupData& warmup, std::size_t horizon,
                               reg::FreeRunResult* latent_out) {
  if (warmup.forcing.steps() != warmup.displacement.steps())
    throw DimensionMismatch("rom_predict: warmup forcing/displacement lengths differ");

  reg::Warmup w;
  w.forcing = warmup.forcing;
  w.latents = ae::encode(art.autoencoder, warmup.displacement);
  reg::FreeRunResult run =
      reg::free_run_predict(art.regressor, forcing_future, w, horizon);

  MultiChannelSeries pred =
      run.latents.steps() > 0
          ? ae::decode(art.autoencoder, run.latents)
          : MultiChannelSeries(warmup.displacement.dt, art.autoencoder.arch.input_dim,
                               0, make_labels('x', art.autoencoder.arch.input_dim));
  if (latent_out) *latent_out = std::move(run);
  return pred;
}

EvaluationReport evaluate(const RomArtifact& art, const Dataset& truth,
                          std::size_t horizon, const std::string& plot_dir,
                          std::size_t eval_start) {
  truth.validate();
  const std::size_t n = truth.response.steps();
  const std::size_t lag = art.regressor.config.lag;

  const auto ae_end = static_cast<std::size_t>(
      static_cast<double>(n) * art.provenance.ae_split);
  const auto reg_end = static_cast<std::size_t>(
      static_cast<double>(n) * art.regressor.config.train_fraction);
  const std::size_t train_end = std::max(ae_end, reg_end);

  EvaluationReport rep;
  rep.eval_start = eval_start == 0 ? train_end : eval_start;
  rep.horizon = horizon;
  rep.in_sample = rep.eval_start < train_end;
  if (rep.eval_start + horizon > n)
    throw SeriesTooShort("evaluate: dataset does not cover the horizon");
  if (rep.eval_start < 2 * lag)
    throw SeriesTooShort("evaluate: not enough history before the window");

  // Warm-up: the lag window plus the same span again for teacher-forced
  // state initialization from the final true values.
  const std::size_t w0 = rep.eval_start - 2 * lag;
  WarmupData warm;
  warm.forcing = truth.forcing.slice(w0, rep.eval_start);
  warm.displacement = truth.response.slice(w0, rep.eval_start);

  reg::FreeRunResult latent_run;
  MultiChannelSeries pred = rom_predict(
      art, truth.forcing.slice(rep.eval_start, rep.eval_start + horizon), warm,
      horizon, &latent_run);
  rep.complete = latent_run.complete;

  const std::size_t got = pred.steps();
  MultiChannelSeries truth_win =
      truth.response.slice(rep.eval_start, rep.eval_start + got);
  pred.labels = truth_win.labels;

  if (got > 0) {
    const signal::MseResult e = signal::mse(pred, truth_win);
    rep.per_dof_mse = e.per_channel;
    rep.aggregate_mse = e.aggregate;
    rep.per_dof_nmse.assign(truth_win.channels, 0.0);
    double agg = 0.0;
    for (std::size_t ch = 0; ch < truth_win.channels; ++ch) {
      const double sd = truth_win.channel_std(ch);
      rep.per_dof_nmse[ch] = sd > 0.0 ? e.per_channel[ch] / (sd * sd) : 0.0;
      agg += rep.per_dof_nmse[ch];
    }
    rep.aggregate_nmse = agg / static_cast<double>(truth_win.channels);

    // Boundedness against 5x the RMS of the whole truth record.
    for (std::size_t ch = 0; ch < truth.response.channels && rep.bounded; ++ch) {
      double rms = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        rms += truth.response.at(i, ch) * truth.response.at(i, ch);
      rms = std::sqrt(rms / static_cast<double>(n));
      const double bound = 5.0 * rms;
      for (std::size_t i = 0; i < got; ++i) {
        if (std::abs(pred.at(i, ch)) > bound) {
          rep.bounded = false;
          break;
        }
      }
    }

    // Latent-space quality against the encoder's view of the truth.
    MultiChannelSeries latent_truth =
        ae::encode(art.autoencoder,
                   truth.response.slice(rep.eval_start, rep.eval_start + got));
    const signal::MseResult ln = signal::nmse(latent_run.latents, latent_truth);
    rep.latent_nmse = ln.aggregate;

    if (!plot_dir.empty()) {
      // Full prediction export plus per-figure overlay files.
      MultiChannelSeries latent_export(latent_truth.dt, 2 * latent_truth.channels, got);
      for (std::size_t ch = 0; ch < latent_truth.channels; ++ch) {
        latent_export.labels.push_back("y" + std::to_string(ch + 1) + "_pred");
      }
      for (std::size_t ch = 0; ch < latent_truth.channels; ++ch)
        latent_export.labels.push_back("y" + std::to_string(ch + 1) + "_true");
      for (std::size_t i = 0; i < got; ++i) {
        for (std::size_t ch = 0; ch < latent_truth.channels; ++ch) {
          latent_export.at(i, ch) = latent_run.latents.at(i, ch);
          latent_export.at(i, latent_truth.channels + ch) = latent_truth.at(i, ch);
        }
      }
      const std::string latent_path = plot_dir + "/latent_prediction.csv";
      write_series_csv(latent_path, latent_export);
      rep.plot_files.push_back(latent_path);

      const std::size_t dofs[2] = {
          0, truth.response.channels >= 2 ? truth.response.channels / 2 - 1 : 0};
      for (std::size_t k = 0; k < 2; ++k) {
        const std::size_t dof = dofs[k];
        MultiChannelSeries overlay(pred.dt, 2, got);
        overlay.labels = {"x" + std::to_string(dof + 1) + "_pred",
                          "x" + std::to_string(dof + 1) + "_true"};
        for (std::size_t i = 0; i < got; ++i) {
          overlay.at(i, 0) = pred.at(i, dof);
          overlay.at(i, 1) = truth_win.at(i, dof);
        }
        const std::string p =
            plot_dir + "/prediction_dof" + std::to_string(dof + 1) + ".csv";
        write_series_csv(p, overlay);
        rep.plot_files.push_back(p);
      }
    }
  }
  return rep;
}

std::string report_json(const EvaluationReport& rep) {
  json j;
  j["eval_start"] = rep.eval_start;
  j["horizon"] = rep.horizon;
  j["in_sample"] = rep.in_sample;
  j["complete"] = rep.complete;
  j["bounded"] = rep.bounded;
  j["per_dof_mse"] = rep.per_dof_mse;
  j["per_dof_nmse"] = rep.per_dof_nmse;
  j["aggregate_mse"] = rep.aggregate_mse;
  j["aggregate_nmse"] = rep.aggregate_nmse;
  j["latent_nmse"] = rep.latent_nmse;
  j["plot_files"] = rep.plot_files;
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Artifact container
// ---------------------------------------------------------------------------

namespace {

constexpr char kArtifactMagic[8] = {'N', 'R', 'O', 'M', 'A', 'R', 'T', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

void put_u64(std::string& out, std::uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.append(b, 8);
}

json provenance_to_json(const Provenance& p) {
  return json{{"config_digest", p.config_digest},
              {"data_digest", p.data_digest},
              {"seed", p.seed},
              {"ae_seed", p.ae_seed},
              {"reg_seed", p.reg_seed},
              {"ae_split", p.ae_split},
              {"schema_version", p.schema_version},
              {"note", p.note}};
}

Provenance provenance_from_json(const json& j) {
  Provenance p;
  p.config_digest = j.at("config_digest").get<std::string>();
  p.data_digest = j.at("data_digest").get<std::string>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.ae_seed = j.at("ae_seed").get<std::uint64_t>();
  p.reg_seed = j.at("reg_seed").get<std::uint64_t>();
  p.ae_split = j.at("ae_split").get<double>();
  p.schema_version = j.at("schema_version").get<std::uint32_t>();
  p.note = j.at("note").get<std::string>();
  return p;
}

}  // namespace

void save_artifact(const std::string& path, const RomArtifact& art) {
  art.validate();
  std::string out;
  out.append(kArtifactMagic, sizeof kArtifactMagic);
  put_u32(out, art.provenance.schema_version);

  const std::string meta = provenance_to_json(art.provenance).dump();
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out.append(meta);

  const std::string ae_blob = ae::serialize_model(art.autoencoder);
  put_u64(out, ae_blob.size());
  out.append(ae_blob);
  const std::string reg_blob = reg::serialize_regressor(art.regressor);
  put_u64(out, reg_blob.size());
  out.append(reg_blob);

  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(out.data()),
            static_cast<uInt>(out.size())));
  put_u32(out, crc);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write '" + path + "'");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to '" + path + "'");
}

RomArtifact load_artifact(const std::string& path, std::uint32_t max_supported) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kArtifactMagic) + 12)
    throw CorruptFile("artifact file too small");

  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + body, 4);
  const auto crc = static_cast<std::uint32_t>(crc32(
      0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(body)));
  if (crc != stored_crc) throw CorruptFile("artifact checksum mismatch");

  std::size_t pos = 0;
  auto need = [&](std::size_t nbytes) {
    if (pos + nbytes > body) throw CorruptFile("artifact truncated");
  };
  need(sizeof kArtifactMagic);
  if (std::memcmp(bytes.data(), kArtifactMagic, sizeof kArtifactMagic) != 0)
    throw CorruptFile("artifact has wrong magic bytes");
  pos += sizeof kArtifactMagic;

  std::uint32_t version;
  need(4);
  std::memcpy(&version, bytes.data() + pos, 4);
  pos += 4;
  if (version < 1 || version > max_supported)
    throw VersionMismatch("artifact schema version " + std::to_string(version) +
                          " outside supported range [1, " +
                          std::to_string(max_supported) + "]");

  std::uint32_t meta_len;
  need(4);
  std::memcpy(&meta_len, bytes.data() + pos, 4);
  pos += 4;
  need(meta_len);
  const std::string meta = bytes.substr(pos, meta_len);
  pos += meta_len;

  auto read_blob = [&]() {
    std::uint64_t len;
    need(8);
    std::memcpy(&len, bytes.data() + pos, 8);
    pos += 8;
    need(len);
    std::string blob = bytes.substr(pos, len);
    pos += len;
    return blob;
  };
  const std::string ae_blob = read_blob();
  const std::string reg_blob = read_blob();

  RomArtifact art;
  art.provenance = provenance_from_json(json::parse(meta));
  art.autoencoder = ae::deserialize_model(ae_blob);
  art.regressor = reg::deserialize_regressor(reg_blob);
  if (version < max_supported) {
    art.provenance.note = "loaded schema version " + std::to_string(version) +
                          " with loader supporting up to " +
                          std::to_string(max_supported);
  }
  art.validate();
  return art;
}

}  // namespace nnmrom::rom
