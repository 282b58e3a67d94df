#include "nnmrom/signal.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>

#include "nnmrom/errors.hpp"
#include "nnmrom/kernels.hpp"

namespace nnmrom::signal {

namespace {

constexpr double kPi = std::numbers::pi;

// Cached FFTW real-to-complex plans, one per length. Plans are created with
// FFTW_ESTIMATE (deterministic) and FFTW_UNALIGNED so they can execute on
// plain vector storage via the new-array interface.
class RfftPlans {
 public:
  static RfftPlans& instance() {
    static RfftPlans p;
    return p;
  }

  void execute(double* in, std::complex<double>* out, std::size_t n) {
    fftw_plan plan;
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = plans_.find(n);
      if (it == plans_.end()) {
        plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in,
                                    reinterpret_cast<fftw_complex*>(out),
                                    FFTW_ESTIMATE | FFTW_UNALIGNED);
        plans_.emplace(n, plan);
      } else {
        plan = it->second;
      }
    }
    fftw_execute_dft_r2c(plan, in, reinterpret_cast<fftw_complex*>(out));
  }

 private:
  RfftPlans() = default;
  std::mutex mu_;
  std::map<std::size_t, fftw_plan> plans_;
};

std::vector<double> make_window(const std::string& name, std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (name == "rect") return w;
  if (name == "hann") {
    for (std::size_t i = 0; i < n; ++i)
      w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) /
                                  static_cast<double>(n - 1));
    return w;
  }
  if (name == "hamming") {
    for (std::size_t i = 0; i < n; ++i)
      w[i] = 0.54 - 0.46 * std::cos(2.0 * kPi * static_cast<double>(i) /
                                    static_cast<double>(n - 1));
    return w;
  }
  throw InvalidParams("unknown window '" + name + "'");
}

}  // namespace

FirFilter design_lowpass(double cutoff_hz, double fs, std::size_t n_taps) {
  if (!(fs > 0.0) || !(cutoff_hz > 0.0) || cutoff_hz >= 0.5 * fs)
    throw InvalidParams("design_lowpass: need 0 < cutoff < fs/2");
  if (n_taps < 3 || n_taps % 2 == 0)
    throw InvalidParams("design_lowpass: tap count must be odd and >= 3");

  FirFilter f;
  f.fs = fs;
  f.cutoff_hz = cutoff_hz;
  f.coefficients.resize(n_taps);
  const double fc = cutoff_hz / fs;  // normalized to sampling rate
  const auto mid = static_cast<std::ptrdiff_t>((n_taps - 1) / 2);
  double sum = 0.0;
  for (std::size_t i = 0; i < n_taps; ++i) {
    const auto k = static_cast<std::ptrdiff_t>(i) - mid;
    const double x = 2.0 * fc * static_cast<double>(k);
    const double sinc = k == 0 ? 1.0 : std::sin(kPi * x) / (kPi * x);
    const double ham = 0.54 - 0.46 * std::cos(2.0 * kPi * static_cast<double>(i) /
                                              static_cast<double>(n_taps - 1));
    f.coefficients[i] = 2.0 * fc * sinc * ham;
    sum += f.coefficients[i];
  }
  for (double& c : f.coefficients) c /= sum;  // exact unit DC gain
  return f;
}

double frequency_response_mag(const FirFilter& f, double freq_hz) {
  const double w = 2.0 * kPi * freq_hz / f.fs;
  double re = 0.0, im = 0.0;
  for (std::size_t k = 0; k < f.coefficients.size(); ++k) {
    re += f.coefficients[k] * std::cos(w * static_cast<double>(k));
    im -= f.coefficients[k] * std::sin(w * static_cast<double>(k));
  }
  return std::hypot(re, im);
}

std::vector<double> filter(const FirFilter& f, std::span<const double> x) {
  const std::size_t nt = f.taps();
  const std::size_t n = x.size();
  // Reversed coefficients turn the convolution into a contiguous dot product.
  std::vector<double> hr(f.coefficients.rbegin(), f.coefficients.rend());
  std::vector<double> y(n, 0.0);
  const auto& K = kernels::active();
  for (std::size_t t = 0; t < n; ++t) {
    if (t + 1 >= nt) {
      y[t] = K.dot(hr.data(), x.data() + (t + 1 - nt), nt);
    } else {
      // Startup: window truncated at the series head (zero initial history).
      const std::size_t m = t + 1;
      y[t] = K.dot(hr.data() + (nt - m), x.data(), m);
    }
  }
  return y;
}

std::vector<double> filtfilt(const FirFilter& f, std::span<const double> x) {
  if (x.size() <= 3 * f.taps())
    throw SeriesTooShort("filtfilt: series must exceed 3x filter length");
  std::vector<double> y = filter(f, x);
  std::reverse(y.begin(), y.end());
  y = filter(f, y);
  std::reverse(y.begin(), y.end());
  return y;
}

WelchSpectra welch_spectra(std::span<const double> x, std::span<const double> y,
                           double fs, const WelchParams& p) {
  if (x.size() != y.size()) throw DimensionMismatch("welch: unequal series lengths");
  if (!(fs > 0.0)) throw InvalidParams("welch: fs must be positive");
  const std::size_t nseg = p.segment;
  if (nseg < 8) throw InvalidParams("welch: segment too small");
  if (nseg % 2 != 0)
    throw InvalidParams("welch: segment must be even so the grid ends at fs/2");
  if (x.size() < nseg) throw SeriesTooShort("welch: series shorter than one segment");
  if (!(p.overlap >= 0.0 && p.overlap < 1.0))
    throw InvalidParams("welch: overlap must lie in [0, 1)");

  const std::size_t hop = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(static_cast<double>(nseg) * (1.0 - p.overlap))));
  const std::vector<double> w = make_window(p.window, nseg);
  double wss = 0.0;
  for (double v : w) wss += v * v;

  const std::size_t nbins = nseg / 2 + 1;
  WelchSpectra out;
  out.frequencies.resize(nbins);
  for (std::size_t k = 0; k < nbins; ++k)
    out.frequencies[k] = fs * static_cast<double>(k) / static_cast<double>(nseg);
  out.sxx.assign(nbins, 0.0);
  out.syy.assign(nbins, 0.0);
  out.sxy.assign(nbins, {0.0, 0.0});

  std::vector<double> bufx(nseg), bufy(nseg);
  std::vector<std::complex<double>> fx(nbins), fy(nbins);
  auto& plans = RfftPlans::instance();

  std::size_t count = 0;
  for (std::size_t start = 0; start + nseg <= x.size(); start += hop) {
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < nseg; ++i) {
      mx += x[start + i];
      my += y[start + i];
    }
    mx /= static_cast<double>(nseg);
    my /= static_cast<double>(nseg);
    for (std::size_t i = 0; i < nseg; ++i) {
      bufx[i] = (x[start + i] - mx) * w[i];
      bufy[i] = (y[start + i] - my) * w[i];
    }
    plans.execute(bufx.data(), fx.data(), nseg);
    plans.execute(bufy.data(), fy.data(), nseg);
    for (std::size_t k = 0; k < nbins; ++k) {
      out.sxx[k] += std::norm(fx[k]);
      out.syy[k] += std::norm(fy[k]);
      out.sxy[k] += fx[k] * std::conj(fy[k]);
    }
    ++count;
  }
  out.n_segments = count;

  // One-sided density scaling; interior bins fold in the negative halves.
  const double scale = 1.0 / (fs * wss * static_cast<double>(count));
  for (std::size_t k = 0; k < nbins; ++k) {
    const double fold = (k == 0 || k + 1 == nbins) ? 1.0 : 2.0;
    out.sxx[k] *= fold * scale;
    out.syy[k] *= fold * scale;
    out.sxy[k] *= fold * scale;
  }
  return out;
}

SpectralEstimate welch_psd(std::span<const double> x, double fs,
                           const WelchParams& p) {
  WelchSpectra s = welch_spectra(x, x, fs, p);
  SpectralEstimate e;
  e.frequencies = std::move(s.frequencies);
  e.values = std::move(s.sxx);
  e.segment = p.segment;
  e.overlap = p.overlap;
  e.window = p.window;
  return e;
}

SpectralEstimate multicoherence(std::span<const double> input0,
                                std::span<const double> input1,
                                std::span<const double> output, double fs,
                                const WelchParams& p) {
  if (input0.size() != input1.size() || input0.size() != output.size())
    throw DimensionMismatch("multicoherence: series lengths differ");

  // Input CSD matrix entries and output cross terms, all from one estimator
  // pass so the segmenting is identical.
  const WelchSpectra s00 = welch_spectra(input0, input0, fs, p);
  const WelchSpectra s11 = welch_spectra(input1, input1, fs, p);
  const WelchSpectra s01 = welch_spectra(input0, input1, fs, p);
  const WelchSpectra sy0 = welch_spectra(output, input0, fs, p);
  const WelchSpectra sy1 = welch_spectra(output, input1, fs, p);
  const WelchSpectra syy = welch_spectra(output, output, fs, p);

  const std::size_t nbins = syy.frequencies.size();
  SpectralEstimate e;
  e.frequencies = syy.frequencies;
  e.values.assign(nbins, 0.0);
  e.valid.assign(nbins, 1);
  e.segment = p.segment;
  e.overlap = p.overlap;
  e.window = p.window;

  const double syy_max = *std::max_element(syy.sxx.begin(), syy.sxx.end());
  const double out_floor = 1e-12 * syy_max;

  for (std::size_t k = 0; k < nbins; ++k) {
    const double a = s00.sxx[k];
    const double d = s11.sxx[k];
    const std::complex<double> b = s01.sxy[k];  // S_x0x1
    const double det = a * d - std::norm(b);
    const double pyy = syy.sxx[k];
    if (pyy <= out_floor) {
      e.valid[k] = 0;
      continue;
    }
    const double scale = a * d;
    if (!(det > 1e-12 * std::max(scale, 1e-300))) {
      // Numerically singular input spectrum at this bin.
      e.valid[k] = 0;
      continue;
    }
    const std::complex<double> v0 = sy0.sxy[k];  // S_y,x0
    const std::complex<double> v1 = sy1.sxy[k];  // S_y,x1
    // v Sxx^{-1} v^H with v the row [S_yx0, S_yx1] and
    // Sxx^{-1} = [d, -b; -conj(b), a] / det, which expands to
    // (d|v0|^2 + a|v1|^2 - 2 Re(v0 b conj(v1))) / det.
    const double num = d * std::norm(v0) + a * std::norm(v1) -
                       2.0 * (v0 * b * std::conj(v1)).real();
    double g2 = num / (det * pyy);
    g2 = std::clamp(g2, 0.0, 1.0);
    e.values[k] = g2;
  }
  return e;
}

double band_mean(const SpectralEstimate& e, double f_lo, double f_hi) {
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < e.frequencies.size(); ++k) {
    if (e.frequencies[k] < f_lo || e.frequencies[k] > f_hi) continue;
    if (!e.valid.empty() && !e.valid[k]) continue;
    acc += e.values[k];
    ++n;
  }
  if (n == 0) throw InvalidParams("band_mean: no valid bins in band");
  return acc / static_cast<double>(n);
}

Matrix correlation_matrix(const MultiChannelSeries& s) {
  const std::size_t c = s.channels;
  const std::size_t n = s.steps();
  if (n < 2) throw SeriesTooShort("correlation_matrix: need at least 2 samples");

  std::vector<double> mean(c, 0.0), sd(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) mean[ch] = s.channel_mean(ch);
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = s.row(i);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double d = r[ch] - mean[ch];
      sd[ch] += d * d;
    }
  }
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (!(sd[ch] > 0.0)) throw ZeroVariance(ch);
    sd[ch] = std::sqrt(sd[ch]);
  }

  Matrix m(c, c);
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = s.row(i);
    for (std::size_t p = 0; p < c; ++p) {
      const double dp = r[p] - mean[p];
      for (std::size_t q = p; q < c; ++q) {
        m.at(p, q) += dp * (r[q] - mean[q]);
      }
    }
  }
  for (std::size_t p = 0; p < c; ++p) {
    for (std::size_t q = p; q < c; ++q) {
      const double r = m.at(p, q) / (sd[p] * sd[q]);
      m.at(p, q) = r;
      m.at(q, p) = r;
    }
    m.at(p, p) = 1.0;
  }
  return m;
}

MseResult mse(const MultiChannelSeries& a, const MultiChannelSeries& b) {
  if (a.channels != b.channels || a.steps() != b.steps())
    throw DimensionMismatch("mse: shapes differ");
  const std::size_t c = a.channels;
  const std::size_t n = a.steps();
  if (n == 0) throw SeriesTooShort("mse: empty series");
  MseResult r;
  r.per_channel.assign(c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* ra = a.row(i);
    const double* rb = b.row(i);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double d = ra[ch] - rb[ch];
      r.per_channel[ch] += d * d;
    }
  }
  for (std::size_t ch = 0; ch < c; ++ch) {
    r.per_channel[ch] /= static_cast<double>(n);
    r.aggregate += r.per_channel[ch];
  }
  r.aggregate /= static_cast<double>(c);
  return r;
}

MseResult nmse(const MultiChannelSeries& a, const MultiChannelSeries& b) {
  MseResult r = mse(a, b);
  double agg = 0.0;
  for (std::size_t ch = 0; ch < a.channels; ++ch) {
    const double sd = b.channel_std(ch);
    if (!(sd > 0.0)) throw ZeroVariance(ch);
    r.per_channel[ch] /= sd * sd;
    agg += r.per_channel[ch];
  }
  r.aggregate = agg / static_cast<double>(a.channels);
  return r;
}

void export_spectral_csv(const std::string& path, const SpectralEstimate& e) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  const bool with_valid = !e.valid.empty();
  out << (with_valid ? "freq_hz,value,valid\n" : "freq_hz,value\n");
  char buf[96];
  for (std::size_t k = 0; k < e.frequencies.size(); ++k) {
    if (with_valid) {
      std::snprintf(buf, sizeof buf, "%.12e,%.12e,%d\n", e.frequencies[k],
                    e.values[k], static_cast<int>(e.valid[k]));
    } else {
      std::snprintf(buf, sizeof buf, "%.12e,%.12e\n", e.frequencies[k], e.values[k]);
    }
    out << buf;
  }
}

}  // namespace nnmrom::signal
