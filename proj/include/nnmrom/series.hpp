#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace nnmrom {

// Uniformly sampled multichannel time series, the universal data carrier.
// Values are row-major [n_steps x channels]; labels name the channels
// ("f3" = forcing at the 1-based DOF 3, "x12"/"v12" = displacement/velocity,
// "y5" = latent coordinate).
struct MultiChannelSeries {
  double dt = 0.0;
  std::size_t channels = 0;
  std::vector<double> values;
  std::vector<std::string> labels;

  MultiChannelSeries() = default;
  MultiChannelSeries(double dt_, std::size_t channels_, std::size_t n_steps,
                     std::vector<std::string> labels_ = {});

  std::size_t steps() const { return channels ? values.size() / channels : 0; }

  double* row(std::size_t i) { return values.data() + i * channels; }
  const double* row(std::size_t i) const { return values.data() + i * channels; }

  double& at(std::size_t step, std::size_t ch) { return values[step * channels + ch]; }
  double at(std::size_t step, std::size_t ch) const { return values[step * channels + ch]; }

  // Copy of a single channel (signal routines work on contiguous channels).
  std::vector<double> channel(std::size_t ch) const;

  // Rows [from, to) as a new series.
  MultiChannelSeries slice(std::size_t from, std::size_t to) const;

  double channel_mean(std::size_t ch) const;
  // Population standard deviation about the channel mean.
  double channel_std(std::size_t ch) const;

  // Throws InvalidParams on non-finite values, dt <= 0, empty data, or a
  // label count that does not match the channel count.
  void validate() const;
};

// Parses labels of the form <prefix><k> with 1-based k, e.g. "f1", "f20".
// Returns 0-based indices. Throws InvalidParams on malformed labels.
std::vector<std::size_t> parse_indexed_labels(const MultiChannelSeries& s,
                                              char prefix);

std::vector<std::string> make_labels(char prefix, std::size_t n);
std::vector<std::string> make_labels(char prefix,
                                     std::span<const std::size_t> dofs);

}  // namespace nnmrom
