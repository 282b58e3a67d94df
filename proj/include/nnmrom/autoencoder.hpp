#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nnmrom/matrix.hpp"
#include "nnmrom/nn.hpp"
#include "nnmrom/series.hpp"

namespace nnmrom::ae {

// Symmetric encoder/decoder stack. The encoder list ends with the bottleneck
// layer; the decoder list ends with the output layer.
struct AeArchitecture {
  std::size_t input_dim = 20;
  std::size_t bottleneck = 10;
  std::vector<nn::LayerSpec> encoder;
  std::vector<nn::LayerSpec> decoder;

  // The reference shape: linear(d) -> tanh(d) -> linear bottleneck for the
  // encoder, mirrored tanh(d) -> linear(d) for the decoder.
  static AeArchitecture standard(std::size_t input_dim, std::size_t bottleneck);

  // strict_reduction additionally demands bottleneck < input_dim (the ROM
  // setting); relaxed mode admits capacity-sanity configurations.
  void validate(bool strict_reduction = true) const;
};

struct AeTrainConfig {
  std::size_t epochs = 200;
  std::size_t batch = 256;
  double lr = 1e-3;
  bool cosine_lr = true;      // anneal lr to ~2% of the base over the budget
  std::size_t patience = 20;  // early stopping on test loss
  std::uint64_t seed = 1;
  bool verbose = false;
};

struct EpochStats {
  double train_mse_std = 0.0;  // standardized space (training objective)
  double test_mse_std = 0.0;
  double train_mse_raw = 0.0;  // physical units, Eq.-style reconstruction MSE
  double test_mse_raw = 0.0;
};

struct AutoencoderModel {
  AeArchitecture arch;
  nn::Mlp net;                     // encoder layers then decoder layers
  std::vector<double> mean, std;   // per-channel standardization (train split)
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;

  std::size_t encoder_layers() const { return arch.encoder.size(); }

  // Stateless per-sample maps over raw batches.
  void encode_batch(const double* X, std::size_t B, double* Z) const;
  void decode_batch(const double* Z, std::size_t B, double* Y) const;
};

// Trains on the first `split` fraction of rows (time-ordered), standardizing
// with train-split statistics only, and returns the parameters of the best
// test-loss epoch.
AutoencoderModel ae_train(const MultiChannelSeries& data,
                          const AeArchitecture& arch, double split,
                          const AeTrainConfig& cfg);

// Latent coordinates of a physical series (channels = bottleneck, labels y<k>).
MultiChannelSeries encode(const AutoencoderModel& m, const MultiChannelSeries& s);

// Physical reconstruction of a latent series.
MultiChannelSeries decode(const AutoencoderModel& m, const MultiChannelSeries& z);

struct ReconstructionReport {
  std::vector<double> per_channel_mse;
  std::vector<double> per_channel_nmse;
  double aggregate_mse = 0.0;
  double aggregate_nmse = 0.0;
  Matrix latent_correlation;
};

ReconstructionReport reconstruction_report(const AutoencoderModel& m,
                                           const MultiChannelSeries& data);

// Model file: parameter blob + architecture descriptor + normalization
// vectors (plus a human-readable sidecar). Bit-exact round trip.
void save_model(const std::string& path, const AutoencoderModel& m);
AutoencoderModel load_model(const std::string& path);

// In-memory blob forms, used by the ROM artifact container.
std::string serialize_model(const AutoencoderModel& m);
AutoencoderModel deserialize_model(std::string_view bytes);

}  // namespace nnmrom::ae
