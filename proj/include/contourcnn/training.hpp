#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "contourcnn/dataset.hpp"
#include "contourcnn/network.hpp"

namespace contourcnn {

enum class OptimizerKind { SGD, Adam };

std::string_view to_string(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view s);

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  Index effective_batch = 32;
  Index epochs = 20;
  std::uint64_t seed = 1;
  bool shuffle = true;
  /// Gradient workers. Per-sample gradients are summed in sample order, so
  /// the result does not depend on this value.
  unsigned workers = 1;

  void validate() const;
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update of a single parameter block. `step` is the
/// 1-based update count after this call.
template <typename DP, typename DG, typename DM, typename DV>
void adam_update(Eigen::MatrixBase<DP>& param, const Eigen::MatrixBase<DG>& grad,
                 Eigen::MatrixBase<DM>& m, Eigen::MatrixBase<DV>& v, long long step, double lr,
                 const AdamHyper& h = {}) {
  m = h.beta1 * m + (1.0 - h.beta1) * grad;
  v = h.beta2 * v + (1.0 - h.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(step));
  param -= (lr * (m / c1).array() / ((v / c2).array().sqrt() + h.eps)).matrix();
}

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long long step = 0;
};

/// Applies one Adam step to every parameter. State is lazily sized on first use.
void adam_step(std::vector<Parameter>& params, const std::vector<Matrix>& grads, AdamState& state,
               double lr, const AdamHyper& hyper = {});
void sgd_step(std::vector<Parameter>& params, const std::vector<Matrix>& grads, double lr);

/// Summed per-sample losses and parameter gradients over a group of samples.
struct GradientSum {
  double loss = 0.0;
  std::vector<Matrix> grads;
  Index count = 0;
};

/// Forward + backward for every sample; throws NumericError naming the first
/// sample (by source_id) whose loss is not finite.
GradientSum compute_gradients(const Network& net, std::span<const ContourSample> samples,
                              unsigned workers = 1);

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(Index class_count = 0)
      : counts_(Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic>::Zero(class_count, class_count)) {}

  void add(Index truth, Index predicted) { ++counts_(truth, predicted); }
  Index class_count() const { return counts_.rows(); }
  long long total() const { return counts_.sum(); }
  long long correct() const { return counts_.trace(); }
  double accuracy() const { return total() == 0 ? 0.0 : static_cast<double>(correct()) / static_cast<double>(total()); }
  long long at(Index truth, Index predicted) const { return counts_(truth, predicted); }
  /// Per-class sample counts (row sums).
  std::vector<long long> row_sums() const;

  /// Header row and first column carry the class names.
  std::string to_csv(const std::vector<std::string>& names) const;

 private:
  Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic> counts_;
};

struct Evaluation {
  double accuracy = 0.0;
  ConfusionMatrix confusion;
};

/// Argmax prediction, ties to the lowest class index.
Index predict(const Network& net, const Matrix& features);
Evaluation evaluate(const Network& net, std::span<const ContourSample> samples, unsigned workers = 1);

struct EpochMetrics {
  Index epoch = 0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
};

std::string metrics_csv(const std::vector<EpochMetrics>& history);

struct Checkpoint {
  ModelConfig model;
  Representation representation = Representation::Cartesian;
  std::vector<Parameter> parameters;
  std::optional<AdamState> optimizer;
  Index epoch = 0;
  std::vector<EpochMetrics> history;

  Network network() const { return Network(model, parameters); }
};

/// Structured-text header followed by named little-endian f64 blobs and a CRC32.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void checkpoint_save(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint checkpoint_load(const std::filesystem::path& path);

/// Evaluates a checkpoint on a cache after checking representation and class count.
Evaluation evaluate(const Checkpoint& ckpt, const SampleCache& data, unsigned workers = 1);

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Per-sample training with gradient accumulation over effective_batch
/// samples (the tail group of an epoch averages over its own size).
/// test may be empty, in which case test_accuracy is NaN.
Checkpoint train(Network& net, std::span<const ContourSample> train_set,
                 std::span<const ContourSample> test_set, const TrainConfig& config,
                 const EpochCallback& on_epoch = {});

/// Surviving contour vertices after every pooling stage. Stage 0 is the full
/// input; indices refer to rows of the input contour and magnitudes are the L2
/// norms of the activations carried by each survivor.
struct SimplificationStage {
  std::vector<Index> indices;
  std::vector<double> magnitudes;
};

std::vector<SimplificationStage> simplification_trace(const Network& net, const Matrix& features);

}  // namespace contourcnn
