#pragma once

// The contour classifier: blocks of circular convolution, per-sample length
// normalization, activation and priority pooling, followed by global average
// pooling and a two-layer fully connected head.

#include <cstdint>
#include <string>
#include <vector>

#include "contourcnn/layers.hpp"
#include "contourcnn/pooling.hpp"
#include "contourcnn/tensor.hpp"

namespace contourcnn {

struct ModelConfig {
  Index f_in = 2;
  Index f_out = 10;
  std::vector<Index> conv_channels{32, 64, 128};
  Index conv_kernel_size = 3;
  std::vector<Index> pooling_targets{40, 30, 20};
  PoolingVariant pooling_variant = PoolingVariant::RemoveOne;
  Index pooling_window = 3;
  Activation activation = Activation::ReLU;
  Index hidden_fc = 80;
  bool use_length_norm = true;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct Parameter {
  std::string name;
  Matrix value;
};

/// What one pooling block saw and produced.
struct StageRecord {
  Matrix pre_pool;  // activation entering the pooling layer
  Matrix pooled;
  PoolTrace trace;
};

struct ForwardResult {
  Tensor logits;
  /// Parameter tensors in parameters() order; recorded when a tape was given.
  std::vector<Tensor> params;
  std::vector<StageRecord> stages;
};

class Network {
 public:
  /// Fan-in scaled uniform weights, zero biases, unit gamma, zero beta.
  Network(ModelConfig config, std::uint64_t seed);
  /// Adopts existing parameters; names and shapes must match the config.
  Network(ModelConfig config, std::vector<Parameter> parameters);

  const ModelConfig& config() const { return config_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<Parameter>& parameters() { return params_; }
  Index parameter_count() const;

  /// Forward pass on one N x f_in sample. With a tape, parameters are
  /// registered as variables so their gradients can be read after backward().
  ForwardResult forward(const Matrix& input, Tape* tape = nullptr, bool keep_stages = false) const;
  /// As above; a recorded input must live on `tape`.
  ForwardResult forward(const Tensor& input, Tape* tape = nullptr, bool keep_stages = false) const;
  Matrix logits(const Matrix& input) const;

 private:
  ModelConfig config_;
  std::vector<Parameter> params_;
};

/// Names and shapes the parameters of `config` must have, in order.
std::vector<std::pair<std::string, std::pair<Index, Index>>> parameter_layout(const ModelConfig& config);

}  // namespace contourcnn
