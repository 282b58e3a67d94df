#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nnmrom/matrix.hpp"
#include "nnmrom/series.hpp"

namespace nnmrom::signal {

// Linear-phase type-I FIR low-pass (odd tap count, unit DC gain).
struct FirFilter {
  std::vector<double> coefficients;
  double fs = 0.0;
  double cutoff_hz = 0.0;

  std::size_t taps() const { return coefficients.size(); }
};

// Hamming windowed-sinc design; -6 dB point sits at cutoff_hz.
FirFilter design_lowpass(double cutoff_hz, double fs, std::size_t n_taps);

// Evaluate |H(f)| of the filter at one frequency.
double frequency_response_mag(const FirFilter& f, double freq_hz);

// Causal single-pass convolution (zero initial history); output length equals
// input length, delayed by the filter's group delay.
std::vector<double> filter(const FirFilter& f, std::span<const double> x);

// Zero-phase filtering: forward pass, time-reverse, second pass, reverse.
// Throws SeriesTooShort unless the series is longer than 3x the filter.
std::vector<double> filtfilt(const FirFilter& f, std::span<const double> x);

struct WelchParams {
  std::size_t segment = 4096;
  double overlap = 0.5;          // fraction of segment
  std::string window = "hann";   // "hann" | "hamming" | "rect"
};

// One-sided spectral estimate on [0, fs/2]. `valid` marks bins that carry
// enough power to be meaningful (used by the coherence estimators).
struct SpectralEstimate {
  std::vector<double> frequencies;
  std::vector<double> values;
  std::vector<std::uint8_t> valid;  // empty means all bins valid
  std::size_t segment = 0;
  double overlap = 0.0;
  std::string window;
};

struct WelchSpectra {
  std::vector<double> frequencies;
  std::vector<double> sxx;
  std::vector<double> syy;
  std::vector<std::complex<double>> sxy;
  std::size_t n_segments = 0;
};

// Welch averaged periodograms with per-segment mean removal. S_xy is the
// cross spectrum between x and y (S_yx = conj(S_xy)). One-sided density
// scaling: the integral of sxx over frequency approximates var(x).
WelchSpectra welch_spectra(std::span<const double> x, std::span<const double> y,
                           double fs, const WelchParams& p = {});

SpectralEstimate welch_psd(std::span<const double> x, double fs,
                           const WelchParams& p = {});

// Multiple coherence of `output` against two input channels:
//   g2(f) = s_yx(f) Sxx(f)^-1 s_yx(f)^H / s_yy(f), clipped to [0, 1].
// Bins where the output power falls below 1e-12 x max or where the input CSD
// matrix is numerically singular are flagged invalid instead of reported.
SpectralEstimate multicoherence(std::span<const double> input0,
                                std::span<const double> input1,
                                std::span<const double> output, double fs,
                                const WelchParams& p = {});

// Mean of estimate values over [f_lo, f_hi], valid bins only.
double band_mean(const SpectralEstimate& e, double f_lo, double f_hi);

// Pearson correlation matrix across channels. Throws ZeroVariance with the
// offending channel index.
Matrix correlation_matrix(const MultiChannelSeries& s);

struct MseResult {
  std::vector<double> per_channel;
  double aggregate = 0.0;
};

// (1/N) sum (a-b)^2 per channel; aggregate = mean over channels.
MseResult mse(const MultiChannelSeries& a, const MultiChannelSeries& b);

// MSE normalized by the per-channel variance of `reference` (usually b).
MseResult nmse(const MultiChannelSeries& a, const MultiChannelSeries& b);

// CSV export: "freq_hz,value[,valid]".
void export_spectral_csv(const std::string& path, const SpectralEstimate& e);

}  // namespace nnmrom::signal
