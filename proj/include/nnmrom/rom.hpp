#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nnmrom/autoencoder.hpp"
#include "nnmrom/csv.hpp"
#include "nnmrom/regressor.hpp"

namespace nnmrom::rom {

struct Provenance {
  std::string config_digest;  // hex FNV-1a64 of the canonical config text
  std::string data_digest;    // hex FNV-1a64 of the dataset file bytes
  std::uint64_t seed = 0;     // global seed
  std::uint64_t ae_seed = 0;
  std::uint64_t reg_seed = 0;
  double ae_split = 0.5;      // AE train fraction, for leakage bookkeeping
  std::uint32_t schema_version = 1;
  std::string note;
};

struct RomArtifact {
  ae::AutoencoderModel autoencoder;
  reg::LatentRegressor regressor;
  Provenance provenance;

  void validate() const;
};

struct FitConfig {
  double ae_split = 0.5;
  ae::AeArchitecture arch = ae::AeArchitecture::standard(20, 10);
  ae::AeTrainConfig ae_train;
  reg::RegressorConfig reg_cfg;
  reg::RegTrainConfig reg_train;
  std::string config_digest = "unspecified";
  std::string data_digest = "unspecified";
  std::uint64_t seed = 0;
};

// The three-step pipeline: train the autoencoder on the leading ae_split of
// the response, encode the whole dataset, then teacher-force the regressor on
// the leading train_fraction of the latents.
RomArtifact fit_rom(const Dataset& ds, const FitConfig& cfg);

// True forcing + displacement history immediately preceding the prediction
// start; displacements are encoded internally to seed the latent lag window.
struct WarmupData {
  MultiChannelSeries forcing;
  MultiChannelSeries displacement;
};

// decode(free_run(...)): full-field prediction over `horizon` steps.
// latent_out, when non-null, receives the latent rollout including the
// completeness flag.
MultiChannelSeries rom_predict(const RomArtifact& art,
                               const MultiChannelSeries& forcing_future,
                               const WarmupData& warmup, std::size_t horizon,
                               reg::FreeRunResult* latent_out = nullptr);

struct EvaluationReport {
  std::size_t eval_start = 0;
  std::size_t horizon = 0;
  bool in_sample = false;  // true when the window overlaps a training span
  bool complete = true;    // free run stayed finite
  bool bounded = true;     // |pred| within 5x true RMS at every step and DOF
  std::vector<double> per_dof_mse;
  std::vector<double> per_dof_nmse;
  double aggregate_mse = 0.0;
  double aggregate_nmse = 0.0;
  double latent_nmse = 0.0;
  std::vector<std::string> plot_files;
};

// Selects the first window that is out-of-sample for BOTH training stages
// (when eval_start == 0), runs rom_predict, and computes per-DOF metrics.
// Plot-data CSVs are written when plot_dir is non-empty.
EvaluationReport evaluate(const RomArtifact& art, const Dataset& truth,
                          std::size_t horizon, const std::string& plot_dir = "",
                          std::size_t eval_start = 0);

std::string report_json(const EvaluationReport& rep);

// Single-container artifact file: versioned header, embedded component
// blobs, CRC-32 trailer. load_artifact accepts schema versions in
// [1, max_supported] and records a provenance note when loading an older one.
void save_artifact(const std::string& path, const RomArtifact& art);
RomArtifact load_artifact(const std::string& path,
                          std::uint32_t max_supported = 1);

}  // namespace nnmrom::rom
