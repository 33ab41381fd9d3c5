#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace scalseg {

// Row-major: one row per point.
using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// y = x W^T + b. Weight is (out x in), bias is (1 x out).
struct Dense {
  Matrix weight;
  Matrix bias;

  Dense() = default;
  Dense(Eigen::Index in, Eigen::Index out)
      : weight(Matrix::Zero(out, in)), bias(Matrix::Zero(1, out)) {}

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }

  Matrix forward(const Matrix& x) const;

  // Accumulates dW and db into `grad` and returns dL/dx.
  Matrix backward(const Matrix& x, const Matrix& dy, Dense& grad) const;
  // Same, without the input gradient.
  void accumulate(const Matrix& x, const Matrix& dy, Dense& grad) const;

  // Uniform(-1/sqrt(in), 1/sqrt(in)) weights, zero bias.
  void init_uniform(std::mt19937_64& rng);

  friend bool operator==(const Dense& a, const Dense& b) {
    return a.weight == b.weight && a.bias == b.bias;
  }
};

inline Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

// dy masked by (activation > 0).
inline Matrix relu_backward(const Matrix& activation, const Matrix& dy) {
  return (activation.array() > 0.0).select(dy, 0.0);
}

// Gathers rows `ids` of `src` into a new matrix.
Matrix gather_rows(const Matrix& src, std::span<const std::uint32_t> ids);

// dst.row(ids[r]) += src.row(r).
void scatter_add_rows(const Matrix& src, std::span<const std::uint32_t> ids,
                      Matrix& dst);

}  // namespace scalseg
