#include "contourcnn/network.hpp"

#include <random>

namespace contourcnn {

void ModelConfig::validate() const {
  if (f_in < 1 || f_out < 1) throw UsageError("model: f_in and f_out must be positive");
  if (conv_channels.empty()) throw UsageError("model: at least one convolution block is required");
  if (conv_channels.size() != pooling_targets.size()) {
    throw UsageError("model: conv_channels and pooling_targets must have the same length");
  }
  for (Index c : conv_channels) {
    if (c < 1) throw UsageError("model: convolution channel counts must be positive");
  }
  for (std::size_t i = 0; i < pooling_targets.size(); ++i) {
    if (pooling_targets[i] < 1) throw UsageError("model: pooling targets must be >= 1");
    if (i > 0 && pooling_targets[i] >= pooling_targets[i - 1]) {
      throw UsageError("model: pooling targets must be strictly decreasing");
    }
  }
  if (conv_kernel_size < 1 || conv_kernel_size % 2 == 0) {
    throw UsageError("model: convolution kernel size must be odd");
  }
  if (pooling_window < 2) throw UsageError("model: pooling window must be >= 2");
  if (hidden_fc < 1) throw UsageError("model: hidden_fc must be positive");
}

std::vector<std::pair<std::string, std::pair<Index, Index>>> parameter_layout(const ModelConfig& c) {
  std::vector<std::pair<std::string, std::pair<Index, Index>>> out;
  Index depth = c.f_in;
  for (std::size_t b = 0; b < c.conv_channels.size(); ++b) {
    const std::string s = std::to_string(b);
    const Index k = c.conv_channels[b];
    out.push_back({"conv" + s + ".weight", {k, c.conv_kernel_size * depth}});
    out.push_back({"conv" + s + ".bias", {1, k}});
    if (c.use_length_norm) {
      out.push_back({"norm" + s + ".gamma", {1, k}});
      out.push_back({"norm" + s + ".beta", {1, k}});
    }
    depth = k;
  }
  out.push_back({"fc0.weight", {c.hidden_fc, depth}});
  out.push_back({"fc0.bias", {1, c.hidden_fc}});
  out.push_back({"fc1.weight", {c.f_out, c.hidden_fc}});
  out.push_back({"fc1.bias", {1, c.f_out}});
  return out;
}

Network::Network(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  Index depth = config_.f_in;
  for (std::size_t b = 0; b < config_.conv_channels.size(); ++b) {
    const std::string s = std::to_string(b);
    const Index k = config_.conv_channels[b];
    ConvKernelSet conv = ConvKernelSet::init(depth, k, config_.conv_kernel_size, rng);
    params_.push_back({"conv" + s + ".weight", std::move(conv.weights)});
    params_.push_back({"conv" + s + ".bias", std::move(conv.biases)});
    if (config_.use_length_norm) {
      params_.push_back({"norm" + s + ".gamma", Matrix::Ones(1, k)});
      params_.push_back({"norm" + s + ".beta", Matrix::Zero(1, k)});
    }
    depth = k;
  }
  DenseParams fc0 = DenseParams::init(depth, config_.hidden_fc, rng);
  DenseParams fc1 = DenseParams::init(config_.hidden_fc, config_.f_out, rng);
  params_.push_back({"fc0.weight", std::move(fc0.weights)});
  params_.push_back({"fc0.bias", std::move(fc0.biases)});
  params_.push_back({"fc1.weight", std::move(fc1.weights)});
  params_.push_back({"fc1.bias", std::move(fc1.biases)});
}

Network::Network(ModelConfig config, std::vector<Parameter> parameters)
    : config_(std::move(config)), params_(std::move(parameters)) {
  config_.validate();
  const auto layout = parameter_layout(config_);
  if (layout.size() != params_.size()) {
    throw UsageError("network: expected " + std::to_string(layout.size()) + " parameters, got " +
                     std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& [name, shape] = layout[i];
    if (params_[i].name != name || params_[i].value.rows() != shape.first ||
        params_[i].value.cols() != shape.second) {
      throw UsageError("network: parameter '" + params_[i].name + "' does not match '" + name + "' " +
                       std::to_string(shape.first) + "x" + std::to_string(shape.second));
    }
  }
}

Index Network::parameter_count() const {
  Index n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

ForwardResult Network::forward(const Matrix& input, Tape* tape, bool keep_stages) const {
  return forward(Tensor(input), tape, keep_stages);
}

ForwardResult Network::forward(const Tensor& input, Tape* tape, bool keep_stages) const {
  if (input.depth() != config_.f_in) {
    throw UsageError("network: input depth " + std::to_string(input.depth()) + " != f_in " +
                     std::to_string(config_.f_in));
  }
  if (input.length() < 1) throw UsageError("network: empty input");

  ForwardResult out;
  out.params.reserve(params_.size());
  for (const auto& p : params_) out.params.push_back(tape ? tape->variable(p.value) : Tensor(p.value));

  std::size_t next = 0;
  auto take = [&]() -> const Tensor& { return out.params[next++]; };

  Tensor x = input;
  for (std::size_t b = 0; b < config_.conv_channels.size(); ++b) {
    const Tensor& w = take();
    const Tensor& bias = take();
    x = circular_conv(x, w, bias, config_.conv_kernel_size);
    if (config_.use_length_norm) {
      const Tensor& gamma = take();
      const Tensor& beta = take();
      x = length_norm(x, gamma, beta);
    }
    x = activation(x, config_.activation);
    const PoolingSpec spec{config_.pooling_variant, config_.pooling_targets[b], config_.pooling_window};
    PoolResult pooled = priority_pool(x, spec);
    if (keep_stages) out.stages.push_back({x.value(), pooled.output.value(), std::move(pooled.trace)});
    x = std::move(pooled.output);
  }
  x = global_avg_pool(x);
  {
    const Tensor& w = take();
    const Tensor& bias = take();
    x = activation(dense(x, w, bias), config_.activation);
  }
  const Tensor& w = take();
  const Tensor& bias = take();
  out.logits = dense(x, w, bias);
  return out;
}

Matrix Network::logits(const Matrix& input) const { return forward(input).logits.value(); }

}  // namespace contourcnn
