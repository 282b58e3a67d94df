#pragma once

#include <cstddef>
#include <vector>

namespace nnmrom {

// Small dense row-major matrix used for reports (correlation matrices etc.).
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> v;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}

  double& at(std::size_t i, std::size_t j) { return v[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
};

}  // namespace nnmrom
