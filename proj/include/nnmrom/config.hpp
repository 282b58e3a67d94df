#pragma once

#include <cstdint>
#include <string>

#include "nnmrom/autoencoder.hpp"
#include "nnmrom/chain.hpp"
#include "nnmrom/regressor.hpp"
#include "nnmrom/rom.hpp"
#include "nnmrom/signal.hpp"

namespace nnmrom::config {

// Aggregated experiment settings. Component seeds derive from the global
// seed unless pinned explicitly in the config file; explicit seeds survive a
// global-seed override.
struct ExperimentConfig {
  std::uint64_t seed = 20260810;
  std::string output_dir = "out";

  sim::ChainParams system;
  sim::ForcingSpec forcing;

  std::size_t ae_latent = 10;
  double ae_split = 0.5;
  ae::AeTrainConfig ae_train;

  reg::RegressorConfig regressor;
  reg::RegTrainConfig reg_train;

  signal::WelchParams analysis;

  bool forcing_seed_explicit = false;
  bool ae_seed_explicit = false;
  bool reg_seed_explicit = false;

  void validate() const;
  // Re-derives non-explicit component seeds from the new global seed.
  void override_seed(std::uint64_t new_seed);

  rom::FitConfig fit_config() const;
};

// Paper-scale settings with the calibrated forcing amplitude.
ExperimentConfig default_config();
// 100 s dataset with reduced epochs, for smoke runs.
ExperimentConfig smoke_config();

// Strict JSON parsing: unknown keys are errors; every key is optional and
// falls back to default_config() values.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

// Canonical serialized form (sorted keys, derived seeds materialized);
// parse(serialize(c)) == c.
std::string serialize_config(const ExperimentConfig& c);
std::string config_digest_hex(const ExperimentConfig& c);

}  // namespace nnmrom::config
