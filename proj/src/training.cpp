#include "contourcnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "contourcnn/errors.hpp"

namespace contourcnn {

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::SGD ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "sgd") return OptimizerKind::SGD;
  if (s == "adam") return OptimizerKind::Adam;
  throw UsageError("unknown optimizer '" + std::string(s) + "' (expected sgd or adam)");
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw UsageError("train: learning rate must be a finite value >= 0");
  }
  if (effective_batch < 1) throw UsageError("train: effective batch must be >= 1");
  if (epochs < 0) throw UsageError("train: epochs must be >= 0");
}

void adam_step(std::vector<Parameter>& params, const std::vector<Matrix>& grads, AdamState& state,
               double lr, const AdamHyper& hyper) {
  if (grads.size() != params.size()) throw UsageError("adam_step: gradient count mismatch");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      state.v.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    }
  }
  if (state.m.size() != params.size()) throw UsageError("adam_step: optimizer state does not match parameters");
  ++state.step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    adam_update(params[i].value, grads[i], state.m[i], state.v[i], state.step, lr, hyper);
  }
}

void sgd_step(std::vector<Parameter>& params, const std::vector<Matrix>& grads, double lr) {
  if (grads.size() != params.size()) throw UsageError("sgd_step: gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) params[i].value -= lr * grads[i];
}

namespace {

// Runs body(i) for i in [0, n) on up to `workers` threads; rethrows the
// exception of the lowest failing index.
template <typename Body>
void parallel_for(std::size_t n, unsigned workers, Body body) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::mutex mu;
  std::size_t failed_at = n;
  std::exception_ptr error;
  auto work = [&](unsigned w) {
    for (std::size_t i = w; i < n; i += workers) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < failed_at) {
          failed_at = i;
          error = std::current_exception();
        }
        return;
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }
  if (error) std::rethrow_exception(error);
}

struct SampleGrad {
  double loss = 0.0;
  std::vector<Matrix> grads;
};

SampleGrad sample_gradient(const Network& net, const ContourSample& s) {
  if (s.label < 0 || s.label >= net.config().f_out) {
    throw UsageError("sample " + std::to_string(s.source_id) + ": label " + std::to_string(s.label) +
                     " outside [0, " + std::to_string(net.config().f_out) + ")");
  }
  Tape tape;
  ForwardResult fwd;
  Tensor loss;
  SampleGrad out;
  try {
    fwd = net.forward(s.features, &tape);
    loss = softmax_cross_entropy(fwd.logits, s.label);
    out.loss = loss.item();
  } catch (const NumericError& e) {
    throw NumericError("sample " + std::to_string(s.source_id) + ": " + e.what());
  }
  if (!std::isfinite(out.loss)) {
    throw NumericError("non-finite loss at sample " + std::to_string(s.source_id));
  }
  tape.backward(loss);
  out.grads.reserve(fwd.params.size());
  for (const Tensor& p : fwd.params) out.grads.push_back(tape.grad(p));
  return out;
}

GradientSum gradients_of(const Network& net, const std::vector<const ContourSample*>& batch, unsigned workers) {
  GradientSum sum;
  for (const auto& p : net.parameters()) sum.grads.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  auto accumulate = [&](SampleGrad&& g) {
    sum.loss += g.loss;
    for (std::size_t k = 0; k < g.grads.size(); ++k) sum.grads[k] += g.grads[k];
    ++sum.count;
  };
  if (workers <= 1 || batch.size() < 2) {
    for (const ContourSample* s : batch) accumulate(sample_gradient(net, *s));
    return sum;
  }
  std::vector<SampleGrad> slots(batch.size());
  parallel_for(batch.size(), workers, [&](std::size_t i) { slots[i] = sample_gradient(net, *batch[i]); });
  for (auto& g : slots) accumulate(std::move(g));
  return sum;
}

std::vector<const ContourSample*> pointers(std::span<const ContourSample> samples) {
  std::vector<const ContourSample*> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(&s);
  return out;
}

}  // namespace

GradientSum compute_gradients(const Network& net, std::span<const ContourSample> samples, unsigned workers) {
  return gradients_of(net, pointers(samples), workers);
}

std::vector<long long> ConfusionMatrix::row_sums() const {
  std::vector<long long> out(static_cast<std::size_t>(counts_.rows()));
  for (Index r = 0; r < counts_.rows(); ++r) out[static_cast<std::size_t>(r)] = counts_.row(r).sum();
  return out;
}

std::string ConfusionMatrix::to_csv(const std::vector<std::string>& names) const {
  if (static_cast<Index>(names.size()) != class_count()) {
    throw UsageError("confusion: expected " + std::to_string(class_count()) + " class names");
  }
  std::ostringstream os;
  os << "true\\predicted";
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  for (Index r = 0; r < class_count(); ++r) {
    os << names[static_cast<std::size_t>(r)];
    for (Index c = 0; c < class_count(); ++c) os << ',' << counts_(r, c);
    os << '\n';
  }
  return os.str();
}

Index predict(const Network& net, const Matrix& features) {
  const Matrix z = net.logits(features);
  Index best = 0;
  for (Index j = 1; j < z.cols(); ++j) {
    if (z(0, j) > z(0, best)) best = j;
  }
  return best;
}

Evaluation evaluate(const Network& net, std::span<const ContourSample> samples, unsigned workers) {
  const Index classes = net.config().f_out;
  std::vector<Index> predicted(samples.size());
  parallel_for(samples.size(), workers, [&](std::size_t i) {
    const ContourSample& s = samples[i];
    if (s.label < 0 || s.label >= classes) {
      throw UsageError("sample " + std::to_string(s.source_id) + ": label outside the model's classes");
    }
    predicted[i] = predict(net, s.features);
  });
  Evaluation ev{0.0, ConfusionMatrix(classes)};
  for (std::size_t i = 0; i < samples.size(); ++i) ev.confusion.add(samples[i].label, predicted[i]);
  ev.accuracy = ev.confusion.accuracy();
  return ev;
}

Evaluation evaluate(const Checkpoint& ckpt, const SampleCache& data, unsigned workers) {
  if (data.representation != ckpt.representation) {
    throw UsageError("checkpoint was trained on " + std::string(to_string(ckpt.representation)) +
                     " contours but the data is " + std::string(to_string(data.representation)));
  }
  if (data.class_count != ckpt.model.f_out) {
    throw UsageError("checkpoint has " + std::to_string(ckpt.model.f_out) + " classes but the data has " +
                     std::to_string(data.class_count));
  }
  return evaluate(ckpt.network(), data.samples, workers);
}

std::string metrics_csv(const std::vector<EpochMetrics>& history) {
  std::ostringstream os;
  os << "epoch,train_loss,test_accuracy\n" << std::setprecision(10);
  for (const auto& m : history) os << m.epoch << ',' << m.train_loss << ',' << m.test_accuracy << '\n';
  return os.str();
}

Checkpoint train(Network& net, std::span<const ContourSample> train_set, std::span<const ContourSample> test_set,
                 const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty()) throw UsageError("train: training set is empty");
  const Representation rep = train_set.front().representation;
  for (const auto* set : {&train_set, &test_set}) {
    for (const auto& s : *set) {
      if (s.representation != rep) throw UsageError("train: samples mix cartesian and polar representations");
      if (s.features.cols() != net.config().f_in) {
        throw UsageError("train: sample " + std::to_string(s.source_id) + " depth does not match f_in");
      }
    }
  }

  std::mt19937_64 rng(config.seed);
  std::vector<const ContourSample*> order = pointers(train_set);
  Checkpoint ckpt;
  ckpt.model = net.config();
  ckpt.representation = rep;
  AdamState adam;
  const std::size_t batch = static_cast<std::size_t>(config.effective_batch);

  for (Index epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.shuffle) {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    }
    double loss_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::vector<const ContourSample*> group(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                    order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + batch)));
      GradientSum g;
      try {
        g = gradients_of(net, group, config.workers);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + ": " + e.what());
      }
      const double scale = 1.0 / static_cast<double>(g.count);
      for (auto& m : g.grads) m *= scale;
      loss_total += g.loss;
      if (config.optimizer == OptimizerKind::Adam) {
        adam_step(net.parameters(), g.grads, adam, config.learning_rate);
      } else {
        sgd_step(net.parameters(), g.grads, config.learning_rate);
      }
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_total / static_cast<double>(order.size());
    m.test_accuracy = test_set.empty() ? std::numeric_limits<double>::quiet_NaN()
                                       : evaluate(net, test_set, config.workers).accuracy;
    ckpt.history.push_back(m);
    if (on_epoch) on_epoch(m);
  }

  ckpt.parameters = net.parameters();
  ckpt.epoch = config.epochs;
  if (config.optimizer == OptimizerKind::Adam && adam.step > 0) ckpt.optimizer = std::move(adam);
  return ckpt;
}

std::vector<SimplificationStage> simplification_trace(const Network& net, const Matrix& features) {
  const ForwardResult fwd = net.forward(features, nullptr, true);
  std::vector<SimplificationStage> out;
  if (fwd.stages.empty()) return out;

  SimplificationStage first;
  const Matrix& x0 = fwd.stages.front().pre_pool;
  std::vector<Index> map(static_cast<std::size_t>(x0.rows()));
  std::iota(map.begin(), map.end(), Index{0});
  first.indices = map;
  for (Index r = 0; r < x0.rows(); ++r) first.magnitudes.push_back(x0.row(r).norm());
  out.push_back(std::move(first));

  for (const StageRecord& st : fwd.stages) {
    SimplificationStage s;
    std::vector<Index> next;
    next.reserve(st.trace.anchors.size());
    for (Index a : st.trace.anchors) next.push_back(map[static_cast<std::size_t>(a)]);
    s.indices = next;
    for (Index r = 0; r < st.pooled.rows(); ++r) s.magnitudes.push_back(st.pooled.row(r).norm());
    map = std::move(next);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace contourcnn
