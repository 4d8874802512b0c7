#pragma once

// Dense rank-2 tensors with reverse-mode automatic differentiation.
//
// A Tensor is an immutable N x D value grid (rows are contour positions,
// columns are features). Tensors created through a Tape are recorded as
// nodes; every operation whose inputs live on a tape records its output on
// the same tape together with a backward rule. Tensors without a tape are
// constants: operations on them only compute forward values.

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "contourcnn/errors.hpp"

namespace contourcnn {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrix = MatrixX<double>;
using RowVector = RowVectorX<double>;
using Vector = Eigen::VectorXd;

class Tape;

class Tensor {
 public:
  Tensor() : value_(std::make_shared<const Matrix>()) {}
  explicit Tensor(Matrix value) : value_(std::make_shared<const Matrix>(std::move(value))) {}

  const Matrix& value() const { return *value_; }
  Index length() const { return value_->rows(); }
  Index depth() const { return value_->cols(); }

  Tape* tape() const { return tape_; }
  std::size_t node() const { return node_; }
  bool recorded() const { return tape_ != nullptr; }

  /// Shorthand for the single entry of a 1x1 tensor.
  double item() const;

 private:
  friend class Tape;
  Tensor(std::shared_ptr<const Matrix> value, Tape* tape, std::size_t node)
      : value_(std::move(value)), tape_(tape), node_(node) {}

  std::shared_ptr<const Matrix> value_;
  Tape* tape_ = nullptr;
  std::size_t node_ = 0;
};

/// Gradient accumulators handed to a backward rule, one per recorded input.
/// at(i) is null when input i is a constant, so its gradient can be skipped.
class GradSink {
 public:
  explicit GradSink(std::span<Matrix* const> slots) : slots_(slots) {}
  Matrix* at(std::size_t i) const { return slots_[i]; }
  std::size_t size() const { return slots_.size(); }

 private:
  std::span<Matrix* const> slots_;
};

/// Accumulates the input gradients given the gradient of the node output.
/// Backward rules must add into the sinks, never assign.
using BackwardFn = std::function<void(const Matrix& out_grad, const GradSink& sink)>;
using ForwardFn = std::function<Matrix(std::span<const Matrix* const> inputs)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers a differentiable leaf (a parameter or an input under test).
  Tensor variable(Matrix value);

  /// Appends an operation node. Inputs that are constants are allowed;
  /// inputs recorded on another tape are a usage error.
  Tensor record(std::string_view kind, std::span<const Tensor> inputs, Matrix value,
                BackwardFn backward);

  /// Reverse sweep from a 1x1 loss. Gradients of previous sweeps are discarded.
  void backward(const Tensor& loss);

  /// Gradient of the last backward() with respect to t; zero if unreachable.
  const Matrix& grad(const Tensor& t) const;

  std::size_t size() const { return nodes_.size(); }
  std::string_view kind(std::size_t node) const { return nodes_.at(node).kind; }
  std::span<const std::size_t> inputs(std::size_t node) const { return nodes_.at(node).inputs; }

 private:
  struct Node {
    std::string_view kind;
    std::vector<std::size_t> inputs;
    std::vector<bool> input_recorded;
    std::shared_ptr<const Matrix> value;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::vector<Matrix> grads_;
};

/// Generic operation entry point. If any input is recorded, the result is
/// recorded on that tape; otherwise forward runs alone and a constant is returned.
/// kind must outlive the tape (string literals).
Tensor record(std::string_view kind, std::span<const Tensor> inputs, const ForwardFn& forward,
              BackwardFn backward);

/// Same as record() but with the forward value already computed.
Tensor record_value(std::string_view kind, std::span<const Tensor> inputs, Matrix value,
                    BackwardFn backward);

// Elementary operations.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor mul_scalar(const Tensor& a, double s);
/// Sum of all entries as a 1x1 tensor.
Tensor sum(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return mul_scalar(a, s); }

/// Cyclic shift along the length axis: row i of the result is row (i - shift) mod N.
template <typename Derived>
MatrixX<typename Derived::Scalar> roll(const Eigen::MatrixBase<Derived>& x, Index shift) {
  const Index n = x.rows();
  MatrixX<typename Derived::Scalar> out(n, x.cols());
  if (n == 0) return out;
  const Index s = ((shift % n) + n) % n;
  for (Index i = 0; i < n; ++i) out.row((i + s) % n) = x.row(i);
  return out;
}

}  // namespace contourcnn
