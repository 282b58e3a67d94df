#include "nnmrom/series.hpp"

#include <cmath>
#include <cstdio>

#include "nnmrom/errors.hpp"

namespace nnmrom {

MultiChannelSeries::MultiChannelSeries(double dt_, std::size_t channels_,
                                       std::size_t n_steps,
                                       std::vector<std::string> labels_)
    : dt(dt_), channels(channels_), values(n_steps * channels_, 0.0),
      labels(std::move(labels_)) {}

std::vector<double> MultiChannelSeries::channel(std::size_t ch) const {
  if (ch >= channels) throw IndexOutOfRange("channel index out of range");
  std::vector<double> out(steps());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(i, ch);
  return out;
}

MultiChannelSeries MultiChannelSeries::slice(std::size_t from, std::size_t to) const {
  if (from > to || to > steps()) throw IndexOutOfRange("slice out of range");
  MultiChannelSeries out(dt, channels, to - from, labels);
  std::copy(values.begin() + static_cast<std::ptrdiff_t>(from * channels),
            values.begin() + static_cast<std::ptrdiff_t>(to * channels),
            out.values.begin());
  return out;
}

double MultiChannelSeries::channel_mean(std::size_t ch) const {
  const std::size_t n = steps();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += at(i, ch);
  return n ? s / static_cast<double>(n) : 0.0;
}

double MultiChannelSeries::channel_std(std::size_t ch) const {
  const std::size_t n = steps();
  const double m = channel_mean(ch);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = at(i, ch) - m;
    s += d * d;
  }
  return n ? std::sqrt(s / static_cast<double>(n)) : 0.0;
}

void MultiChannelSeries::validate() const {
  if (dt <= 0.0) throw InvalidParams("series dt must be positive");
  if (channels == 0 || values.empty()) throw InvalidParams("series is empty");
  if (values.size() % channels != 0)
    throw InvalidParams("series value count is not a multiple of channels");
  if (!labels.empty() && labels.size() != channels)
    throw InvalidParams("series label count does not match channels");
  for (double v : values) {
    if (!std::isfinite(v)) throw InvalidParams("series contains non-finite values");
  }
}

std::vector<std::size_t> parse_indexed_labels(const MultiChannelSeries& s,
                                              char prefix) {
  std::vector<std::size_t> out;
  out.reserve(s.labels.size());
  for (const std::string& l : s.labels) {
    if (l.size() < 2 || l[0] != prefix)
      throw InvalidParams("label '" + l + "' does not match prefix '" +
                          std::string(1, prefix) + "<k>'");
    char* end = nullptr;
    const unsigned long k = std::strtoul(l.c_str() + 1, &end, 10);
    if (!end || *end != '\0' || k == 0)
      throw InvalidParams("label '" + l + "' has no valid 1-based index");
    out.push_back(static_cast<std::size_t>(k - 1));
  }
  return out;
}

std::vector<std::string> make_labels(char prefix, std::size_t n) {
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(std::string(1, prefix) + std::to_string(i + 1));
  return out;
}

std::vector<std::string> make_labels(char prefix,
                                     std::span<const std::size_t> dofs) {
  std::vector<std::string> out;
  out.reserve(dofs.size());
  for (std::size_t d : dofs)
    out.push_back(std::string(1, prefix) + std::to_string(d + 1));
  return out;
}

}  // namespace nnmrom
