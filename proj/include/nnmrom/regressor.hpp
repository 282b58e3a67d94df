#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nnmrom/nn.hpp"
#include "nnmrom/series.hpp"

namespace nnmrom::reg {

struct RegressorConfig {
  std::size_t lag = 100;
  std::size_t hidden = 64;
  std::size_t n_forcing = 2;
  std::size_t n_latent = 10;
  double train_fraction = 0.6;
  std::size_t horizon = 1000;

  // Flattened feature width: current + lagged forcing plus lagged outputs.
  std::size_t input_width() const { return n_forcing * (lag + 1) + n_latent * lag; }
  void validate() const;
};

struct RegTrainConfig {
  std::size_t epochs = 80;
  std::size_t window = 200;  // truncated-BPTT window; state carries between
                             // consecutive windows within an epoch
  std::size_t lanes = 16;    // contiguous sequence chunks advanced in lockstep
  double lr = 1e-3;
  bool cosine_lr = true;      // anneal lr to ~2% of the base over the budget
  std::size_t patience = 8;   // early stopping on validation loss
  double val_fraction = 0.1;  // tail of the training span held out
  std::uint64_t seed = 1;
  std::size_t threads = 0;  // 0 = auto (two lane groups when available)
  bool verbose = false;
};

// Per-channel standardization. Channels with zero spread pass through
// unscaled (all-zero forcing is a legitimate input).
struct ChannelNorm {
  std::vector<double> mean, std;

  static ChannelNorm fit(const MultiChannelSeries& s, std::size_t rows);
  double apply(double v, std::size_t ch) const { return (v - mean[ch]) / std[ch]; }
  double invert(double v, std::size_t ch) const { return v * std[ch] + mean[ch]; }
};

// Standardized (input, target) sequences assembled from a forcing/latent
// pair. For an absolute step t in [lag, n_steps) the input is the flattened
// concatenation of forcing rows [t-lag, t] and latent rows [t-lag, t); the
// target is the standardized latent row at t. Aligned-sequence row i maps to
// t = lag + i. Rows are packed on demand from pre-standardized storage, so
// the full [size x input_width] matrix is never materialized.
class FeatureDataset {
 public:
  FeatureDataset(const MultiChannelSeries& forcing,
                 const MultiChannelSeries& latents, std::size_t lag,
                 ChannelNorm forcing_norm, ChannelNorm latent_norm);

  std::size_t lag() const { return lag_; }
  std::size_t size() const { return n_steps_ - lag_; }
  std::size_t n_steps() const { return n_steps_; }
  std::size_t n_forcing() const { return nf_; }
  std::size_t n_latent() const { return nl_; }
  std::size_t input_width() const { return nf_ * (lag_ + 1) + nl_ * lag_; }

  void input_row(std::size_t i, double* out) const { input_row_at(lag_ + i, out); }
  void target_row(std::size_t i, double* out) const { target_row_at(lag_ + i, out); }

  void input_row_at(std::size_t t, double* out) const;
  void target_row_at(std::size_t t, double* out) const;

  const ChannelNorm& forcing_norm() const { return fnorm_; }
  const ChannelNorm& latent_norm() const { return lnorm_; }

 private:
  std::size_t lag_, n_steps_, nf_, nl_;
  ChannelNorm fnorm_, lnorm_;
  std::vector<double> fstd_, ystd_;  // standardized copies, row-major
};

// Standardization statistics are fitted on the first norm_rows rows (0 = all
// rows). Throws SeriesTooShort unless both series exceed the lag.
FeatureDataset build_features(const MultiChannelSeries& forcing,
                              const MultiChannelSeries& latents,
                              std::size_t lag, std::size_t norm_rows = 0);

struct LatentRegressor {
  RegressorConfig config;
  nn::LstmCell cell;
  nn::DenseLayer readout;  // hidden -> n_latent, linear
  ChannelNorm forcing_norm, latent_norm;
  std::vector<std::pair<double, double>> history;  // (train, val) MSE per epoch
  std::size_t best_epoch = 0;

  void validate() const;
};

// Minimizes one-step-ahead latent MSE with truncated BPTT over the feature
// range excluding the validation tail; returns the best-validation snapshot.
LatentRegressor train_teacher_forced(const FeatureDataset& features,
                                     const RegressorConfig& cfg,
                                     const RegTrainConfig& tcfg);

// True history immediately preceding the prediction start. Must be at least
// lag steps long; any surplus beyond the lag window is consumed as
// teacher-forced warm-up of the LSTM state.
struct Warmup {
  MultiChannelSeries forcing;
  MultiChannelSeries latents;
};

struct FreeRunResult {
  MultiChannelSeries latents;  // predicted, labels y<k>
  bool complete = true;
  std::size_t failed_step = 0;  // first non-finite step when !complete
};

// Simulation-error rollout: each step's prediction is fed back into the lag
// window. Returns partial output with a flag instead of throwing when the
// prediction leaves the finite range.
FreeRunResult free_run_predict(const LatentRegressor& model,
                               const MultiChannelSeries& forcing_future,
                               const Warmup& warmup, std::size_t horizon);

// Teacher-forced mean squared error (standardized space) over feature rows
// [from, to), evaluated in `lanes` lockstep chunks. Each lane starts from a
// zero state; burn_in extra leading steps (clipped at the series head) are
// run but not scored, which removes the cold-start bias on short spans.
double teacher_forced_mse(const LatentRegressor& model,
                          const FeatureDataset& features, std::size_t from,
                          std::size_t to, std::size_t lanes = 16,
                          std::size_t burn_in = 0);

void save_regressor(const std::string& path, const LatentRegressor& m);
LatentRegressor load_regressor(const std::string& path);
std::string serialize_regressor(const LatentRegressor& m);
LatentRegressor deserialize_regressor(std::string_view bytes);

}  // namespace nnmrom::reg
