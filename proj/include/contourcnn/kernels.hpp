#pragma once

// Tape-free numeric kernels shared by the differentiable layers. All of them
// accept any Eigen expression and are templated on the scalar type.

#include <Eigen/Core>

#include <cmath>

#include "contourcnn/tensor.hpp"

namespace contourcnn::kernels {

/// Circular patch matrix: row i holds x[(i - (M-1)/2 + j) mod N] for j = 0..M-1,
/// concatenated along depth (column j*D + d).
template <typename Derived>
MatrixX<typename Derived::Scalar> circular_patches(const Eigen::MatrixBase<Derived>& x,
                                                   Index kernel_size) {
  const Index n = x.rows();
  const Index d = x.cols();
  const Index half = (kernel_size - 1) / 2;
  MatrixX<typename Derived::Scalar> patches(n, kernel_size * d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < kernel_size; ++j) {
      const Index src = (((i - half + j) % n) + n) % n;
      patches.block(i, j * d, 1, d) = x.row(src);
    }
  }
  return patches;
}

/// Circular 1D convolution. weights is K x (M*D) laid out like circular_patches;
/// biases is 1 x K. Output is N x K.
template <typename DX, typename DW, typename DB>
MatrixX<typename DX::Scalar> circular_conv(const Eigen::MatrixBase<DX>& x,
                                           const Eigen::MatrixBase<DW>& weights,
                                           const Eigen::MatrixBase<DB>& biases, Index kernel_size) {
  MatrixX<typename DX::Scalar> out = circular_patches(x, kernel_size) * weights.transpose();
  out.rowwise() += biases.row(0);
  return out;
}

/// L2 norm of every row.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> vertex_magnitudes(
    const Eigen::MatrixBase<Derived>& x) {
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> out(x.rows());
  for (Index i = 0; i < x.rows(); ++i) out(i) = std::sqrt(x.row(i).squaredNorm());
  return out;
}

/// Per-column mean over rows, as a 1 x D row.
template <typename Derived>
RowVectorX<typename Derived::Scalar> column_mean(const Eigen::MatrixBase<Derived>& x) {
  return x.colwise().sum() / static_cast<typename Derived::Scalar>(x.rows());
}

/// Numerically stable softmax of a single row.
template <typename Derived>
RowVectorX<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  const Scalar top = logits.maxCoeff();
  RowVectorX<Scalar> e = (logits.row(0).array() - top).exp().matrix();
  return e / e.sum();
}

}  // namespace contourcnn::kernels
