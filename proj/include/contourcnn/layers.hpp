#pragma once

// Differentiable layers over N x D tensors.

#include <random>
#include <string_view>

#include "contourcnn/pooling.hpp"
#include "contourcnn/tensor.hpp"

namespace contourcnn {

/// Uniform draw in [lo, hi) built directly from 53 random bits, so parameter
/// initialization does not depend on the standard library's distributions.
double uniform_draw(std::mt19937_64& rng, double lo, double hi);

/// K kernels of odd size M and depth D. weights is K x (M*D), column j*D + d
/// holding tap j of channel d; biases is 1 x K.
struct ConvKernelSet {
  Index kernel_size = 3;
  Matrix weights;
  Matrix biases;

  Index kernel_count() const { return weights.rows(); }
  Index in_depth() const { return kernel_size > 0 ? weights.cols() / kernel_size : 0; }
  void validate() const;

  /// Uniform(+-1/sqrt(M*D)) weights, zero biases.
  static ConvKernelSet init(Index in_depth, Index kernel_count, Index kernel_size,
                            std::mt19937_64& rng);
};

/// weights is out x in; biases is 1 x out.
struct DenseParams {
  Matrix weights;
  Matrix biases;

  Index in_features() const { return weights.cols(); }
  Index out_features() const { return weights.rows(); }
  void validate() const;

  /// Uniform(+-1/sqrt(in)) weights, zero biases.
  static DenseParams init(Index in_features, Index out_features, std::mt19937_64& rng);
};

enum class Activation { ReLU, Sigmoid, TanH };

std::string_view to_string(Activation a);
/// Accepts "relu", "sigmoid", "tanh".
Activation parse_activation(std::string_view s);

/// u[i,k] = sum_j <k_j, x[(i - (M-1)/2 + j) mod N]> + b_k. Output length equals input length.
Tensor circular_conv(const Tensor& x, const Tensor& weights, const Tensor& biases,
                     Index kernel_size);
Tensor circular_conv(const Tensor& x, const ConvKernelSet& params);

/// Per-row L2 norm. Selection input only, not differentiable.
Vector vertex_magnitudes(const Tensor& x);

struct PoolResult {
  Tensor output;
  PoolTrace trace;
};

/// Deletes lowest-magnitude vertices until `target` remain. trace.anchors are
/// the kept input indices.
PoolResult remove_one_pool(const Tensor& x, Index target);
PoolResult max_priority_pool(const Tensor& x, Index target, Index window = 3);
PoolResult avg_priority_pool(const Tensor& x, Index target, Index window = 3);
PoolResult priority_pool(const Tensor& x, const PoolingSpec& spec);

/// 1 x D mean over positions.
Tensor global_avg_pool(const Tensor& x);

/// x is 1 x in; returns 1 x out.
Tensor dense(const Tensor& x, const Tensor& weights, const Tensor& biases);
Tensor dense(const Tensor& x, const DenseParams& params);

Tensor activation(const Tensor& x, Activation kind);

/// Per-sample normalization along the length axis; gamma, beta are 1 x D.
/// Statistics always come from the sample itself, in training and inference alike.
Tensor length_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// -log softmax(logits)[label] as a 1x1 tensor. logits is 1 x C.
Tensor softmax_cross_entropy(const Tensor& logits, Index label);

}  // namespace contourcnn
