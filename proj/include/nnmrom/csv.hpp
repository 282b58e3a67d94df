#pragma once

#include <string>
#include <vector>

#include "nnmrom/series.hpp"

namespace nnmrom {

// A simulated experiment: forcing channels (f<k>) plus full-field response
// (x<k>) and optionally velocities (v<k>), sharing one time base.
struct Dataset {
  MultiChannelSeries forcing;
  MultiChannelSeries response;
  MultiChannelSeries velocity;  // zero channels when not recorded

  std::vector<std::size_t> drive_dofs() const;
  void validate() const;
};

// Dataset CSV: header "t,f<i>...,x<j>...[,v<j>...]", one row per step,
// %.12e formatting throughout. Byte-deterministic for identical data.
void write_dataset_csv(const std::string& path, const Dataset& ds);
Dataset read_dataset_csv(const std::string& path);

// Generic time-series CSV: "t,<label>..." with the same formatting rules.
void write_series_csv(const std::string& path, const MultiChannelSeries& s);
MultiChannelSeries read_series_csv(const std::string& path);

}  // namespace nnmrom
