#include "scalseg/layers.hpp"

#include <cmath>

namespace scalseg {

Matrix Dense::forward(const Matrix& x) const {
  Matrix y = x * weight.transpose();
  y.rowwise() += bias.row(0);
  return y;
}

Matrix Dense::backward(const Matrix& x, const Matrix& dy, Dense& grad) const {
  accumulate(x, dy, grad);
  return dy * weight;
}

void Dense::accumulate(const Matrix& x, const Matrix& dy, Dense& grad) const {
  grad.weight.noalias() += dy.transpose() * x;
  grad.bias += dy.colwise().sum();
}

void Dense::init_uniform(std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim()));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < weight.size(); ++i) weight.data()[i] = dist(rng);
  bias.setZero();
}

Matrix gather_rows(const Matrix& src, std::span<const std::uint32_t> ids) {
  Matrix out(static_cast<Eigen::Index>(ids.size()), src.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = src.row(ids[r]);
  }
  return out;
}

void scatter_add_rows(const Matrix& src, std::span<const std::uint32_t> ids,
                      Matrix& dst) {
  for (std::size_t r = 0; r < ids.size(); ++r) {
    dst.row(ids[r]) += src.row(static_cast<Eigen::Index>(r));
  }
}

}  // namespace scalseg
