#include "contourcnn/layers.hpp"

#include <cmath>
#include <string>

#include "contourcnn/kernels.hpp"

namespace contourcnn {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

double uniform_draw(std::mt19937_64& rng, double lo, double hi) {
  const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * unit;
}

void ConvKernelSet::validate() const {
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw UsageError("conv kernel size must be odd and positive, got " +
                     std::to_string(kernel_size));
  }
  if (weights.rows() < 1 || weights.cols() < kernel_size || weights.cols() % kernel_size != 0) {
    throw UsageError("conv weights have shape " + shape_str(weights) + ", not K x (M*D) for M=" +
                     std::to_string(kernel_size));
  }
  if (biases.rows() != 1 || biases.cols() != weights.rows()) {
    throw UsageError("conv biases have shape " + shape_str(biases) + ", expected 1x" +
                     std::to_string(weights.rows()));
  }
  if (!weights.allFinite() || !biases.allFinite()) throw UsageError("conv parameters not finite");
}

ConvKernelSet ConvKernelSet::init(Index in_depth, Index kernel_count, Index kernel_size,
                                  std::mt19937_64& rng) {
  ConvKernelSet p;
  p.kernel_size = kernel_size;
  const double bound = 1.0 / std::sqrt(static_cast<double>(kernel_size * in_depth));
  p.weights.resize(kernel_count, kernel_size * in_depth);
  for (Index r = 0; r < p.weights.rows(); ++r) {
    for (Index c = 0; c < p.weights.cols(); ++c) p.weights(r, c) = uniform_draw(rng, -bound, bound);
  }
  p.biases = Matrix::Zero(1, kernel_count);
  p.validate();
  return p;
}

void DenseParams::validate() const {
  if (weights.rows() < 1 || weights.cols() < 1) throw UsageError("dense weights are empty");
  if (biases.rows() != 1 || biases.cols() != weights.rows()) {
    throw UsageError("dense biases have shape " + shape_str(biases) + ", expected 1x" +
                     std::to_string(weights.rows()));
  }
  if (!weights.allFinite() || !biases.allFinite()) throw UsageError("dense parameters not finite");
}

DenseParams DenseParams::init(Index in_features, Index out_features, std::mt19937_64& rng) {
  DenseParams p;
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
  p.weights.resize(out_features, in_features);
  for (Index r = 0; r < p.weights.rows(); ++r) {
    for (Index c = 0; c < p.weights.cols(); ++c) p.weights(r, c) = uniform_draw(rng, -bound, bound);
  }
  p.biases = Matrix::Zero(1, out_features);
  p.validate();
  return p;
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::ReLU: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::TanH: return "tanh";
  }
  return "unknown";
}

Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "tanh") return Activation::TanH;
  throw UsageError("unknown activation '" + std::string(s) + "'");
}

Tensor circular_conv(const Tensor& x, const Tensor& weights, const Tensor& biases,
                     Index kernel_size) {
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw UsageError("circular_conv: kernel size must be odd, got " + std::to_string(kernel_size));
  }
  if (x.length() < 1) throw UsageError("circular_conv: empty input");
  const Index depth = x.depth();
  if (weights.depth() != kernel_size * depth) {
    throw UsageError("circular_conv: kernel depth " +
                     std::to_string(weights.depth() / kernel_size) + " does not match input depth " +
                     std::to_string(depth));
  }
  if (biases.length() != 1 || biases.depth() != weights.length()) {
    throw UsageError("circular_conv: bias shape mismatch");
  }

  Matrix patches = kernels::circular_patches(x.value(), kernel_size);
  Matrix out = patches * weights.value().transpose();
  out.rowwise() += biases.value().row(0);

  const Tensor in[] = {x, weights, biases};
  return record_value(
      "circular_conv", in, std::move(out),
      [patches = std::move(patches), w = weights, kernel_size, depth](const Matrix& g,
                                                                        const GradSink& sink) {
        if (Matrix* gx = sink.at(0)) {
          const Matrix dpatches = g * w.value();
          const Index n = g.rows();
          const Index half = (kernel_size - 1) / 2;
          for (Index i = 0; i < n; ++i) {
            for (Index j = 0; j < kernel_size; ++j) {
              const Index src = (((i - half + j) % n) + n) % n;
              gx->row(src) += dpatches.block(i, j * depth, 1, depth);
            }
          }
        }
        if (Matrix* gw = sink.at(1)) gw->noalias() += g.transpose() * patches;
        if (Matrix* gb = sink.at(2)) *gb += g.colwise().sum();
      });
}

Tensor circular_conv(const Tensor& x, const ConvKernelSet& params) {
  params.validate();
  return circular_conv(x, Tensor(params.weights), Tensor(params.biases), params.kernel_size);
}

Vector vertex_magnitudes(const Tensor& x) { return kernels::vertex_magnitudes(x.value()); }

PoolResult priority_pool(const Tensor& x, const PoolingSpec& spec) {
  PoolOutput pooled = priority_pool_values(x.value(), spec);
  auto trace = std::make_shared<const PoolTrace>(pooled.trace);
  const Tensor in[] = {x};
  Tensor out = record_value("priority_pool", in, std::move(pooled.values),
                            [trace](const Matrix& g, const GradSink& sink) {
                              if (Matrix* gx = sink.at(0)) *gx += priority_pool_backward(*trace, g);
                            });
  return {std::move(out), std::move(pooled.trace)};
}

PoolResult remove_one_pool(const Tensor& x, Index target) {
  return priority_pool(x, {PoolingVariant::RemoveOne, target, 3});
}

PoolResult max_priority_pool(const Tensor& x, Index target, Index window) {
  return priority_pool(x, {PoolingVariant::Max, target, window});
}

PoolResult avg_priority_pool(const Tensor& x, Index target, Index window) {
  return priority_pool(x, {PoolingVariant::Average, target, window});
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.length() < 1) throw UsageError("global_avg_pool: empty input");
  const Tensor in[] = {x};
  const double n = static_cast<double>(x.length());
  return record_value("global_avg_pool", in, kernels::column_mean(x.value()),
                      [n](const Matrix& g, const GradSink& sink) {
                        if (Matrix* gx = sink.at(0)) gx->rowwise() += g.row(0) / n;
                      });
}

Tensor dense(const Tensor& x, const Tensor& weights, const Tensor& biases) {
  if (x.length() != 1 || x.depth() != weights.depth()) {
    throw UsageError("dense: input " + shape_str(x.value()) + " does not match weights " +
                     shape_str(weights.value()));
  }
  if (biases.length() != 1 || biases.depth() != weights.length()) {
    throw UsageError("dense: bias shape mismatch");
  }
  Matrix out = x.value() * weights.value().transpose() + biases.value();
  const Tensor in[] = {x, weights, biases};
  return record_value("dense", in, std::move(out),
                      [xv = x, w = weights](const Matrix& g, const GradSink& sink) {
                        if (Matrix* gx = sink.at(0)) gx->noalias() += g * w.value();
                        if (Matrix* gw = sink.at(1)) gw->noalias() += g.transpose() * xv.value();
                        if (Matrix* gb = sink.at(2)) *gb += g;
                      });
}

Tensor dense(const Tensor& x, const DenseParams& params) {
  params.validate();
  return dense(x, Tensor(params.weights), Tensor(params.biases));
}

Tensor activation(const Tensor& x, Activation kind) {
  const Tensor in[] = {x};
  switch (kind) {
    case Activation::ReLU:
      return record_value("relu", in, x.value().cwiseMax(0.0),
                          [xv = x](const Matrix& g, const GradSink& sink) {
                            if (Matrix* gx = sink.at(0)) {
                              *gx += (xv.value().array() > 0.0).select(g, 0.0).matrix();
                            }
                          });
    case Activation::Sigmoid: {
      Matrix y = (1.0 / (1.0 + (-x.value().array()).exp())).matrix();
      Tensor out = record_value("sigmoid", in, y, [y](const Matrix& g, const GradSink& sink) {
        if (Matrix* gx = sink.at(0)) *gx += (g.array() * y.array() * (1.0 - y.array())).matrix();
      });
      return out;
    }
    case Activation::TanH: {
      Matrix y = x.value().array().tanh().matrix();
      return record_value("tanh", in, y, [y](const Matrix& g, const GradSink& sink) {
        if (Matrix* gx = sink.at(0)) *gx += (g.array() * (1.0 - y.array().square())).matrix();
      });
    }
  }
  throw UsageError("activation: unknown kind");
}

Tensor length_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const Index n = x.length();
  const Index depth = x.depth();
  if (n < 1) throw UsageError("length_norm: empty input");
  if (gamma.length() != 1 || gamma.depth() != depth || beta.length() != 1 ||
      beta.depth() != depth) {
    throw UsageError("length_norm: gamma/beta must be 1x" + std::to_string(depth));
  }
  const RowVector mean = kernels::column_mean(x.value());
  Matrix centred = x.value().rowwise() - mean;
  const RowVector inv_std =
      ((centred.array().square().colwise().sum() / static_cast<double>(n)) + eps).rsqrt().matrix();
  Matrix normed = (centred.array().rowwise() * inv_std.array()).matrix();
  Matrix out = (normed.array().rowwise() * gamma.value().row(0).array()).matrix();
  out.rowwise() += beta.value().row(0);

  const Tensor in[] = {x, gamma, beta};
  return record_value(
      "length_norm", in, std::move(out),
      [normed = std::move(normed), inv_std, g_param = gamma, n](const Matrix& g,
                                                                 const GradSink& sink) {
        if (Matrix* gx = sink.at(0)) {
          const Matrix dnorm = (g.array().rowwise() * g_param.value().row(0).array()).matrix();
          const RowVector sum_d = dnorm.colwise().sum();
          const RowVector sum_dx = dnorm.cwiseProduct(normed).colwise().sum();
          const double nd = static_cast<double>(n);
          Matrix dx = (dnorm * nd).rowwise() - sum_d;
          dx -= (normed.array().rowwise() * sum_dx.array()).matrix();
          *gx += (dx.array().rowwise() * (inv_std.array() / nd)).matrix();
        }
        if (Matrix* gg = sink.at(1)) *gg += g.cwiseProduct(normed).colwise().sum();
        if (Matrix* gb = sink.at(2)) *gb += g.colwise().sum();
      });
}

Tensor softmax_cross_entropy(const Tensor& logits, Index label) {
  if (logits.length() != 1 || logits.depth() < 1) {
    throw UsageError("softmax_cross_entropy: logits must be 1xC, got " +
                     shape_str(logits.value()));
  }
  if (label < 0 || label >= logits.depth()) {
    throw UsageError("softmax_cross_entropy: label " + std::to_string(label) +
                     " out of range for " + std::to_string(logits.depth()) + " classes");
  }
  const RowVector row = logits.value().row(0);
  const double top = row.maxCoeff();
  const double log_z = top + std::log((row.array() - top).exp().sum());
  Matrix out(1, 1);
  out(0, 0) = log_z - row(label);
  RowVector probs = (row.array() - log_z).exp().matrix();

  const Tensor in[] = {logits};
  return record_value("softmax_cross_entropy", in, std::move(out),
                      [probs = std::move(probs), label](const Matrix& g, const GradSink& sink) {
                        if (Matrix* gl = sink.at(0)) {
                          RowVector d = probs;
                          d(label) -= 1.0;
                          *gl += d * g(0, 0);
                        }
                      });
}

}  // namespace contourcnn
