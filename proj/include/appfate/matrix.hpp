#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "appfate/error.hpp"

namespace appfate {

// Row-major dense matrix of feature values.
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }

  void push_row(std::span<const double> values) {
    if (rows == 0 && cols == 0) cols = values.size();
    if (values.size() != cols) throw DataError("row width mismatch");
    data.insert(data.end(), values.begin(), values.end());
    ++rows;
  }
};

}  // namespace appfate
