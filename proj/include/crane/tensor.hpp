#pragma once
// Minimal dense row-major f64 tensor. Training math runs in f64 end to end;
// only serialized sketch state is quantized to f32 (see io.hpp).

#include <cassert>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <vector>

namespace crane {

struct Tensor {
  std::size_t rows = 0, cols = 0;  // vectors are rows x 1 or 1 x cols
  std::vector<double> v;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  Tensor(std::size_t r, std::size_t c, std::initializer_list<double> init)
      : rows(r), cols(c), v(init) {
    if (v.size() != r * c) throw std::invalid_argument("tensor: bad init size");
  }

  std::size_t numel() const { return rows * cols; }
  double& at(std::size_t i, std::size_t j) { return v[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
  double* data() { return v.data(); }
  const double* data() const { return v.data(); }

  bool same_shape(const Tensor& o) const {
    return rows == o.rows && cols == o.cols;
  }

  double sum() const {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }

  static Tensor full(std::size_t r, std::size_t c, double value) {
    Tensor t(r, c);
    for (auto& x : t.v) x = value;
    return t;
  }
};

}  // namespace crane
