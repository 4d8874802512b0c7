#include "contourcnn/tensor.hpp"

#include <string>

namespace contourcnn {

double Tensor::item() const {
  if (value_->rows() != 1 || value_->cols() != 1) {
    throw UsageError("item() requires a 1x1 tensor, got " + std::to_string(value_->rows()) + "x" +
                     std::to_string(value_->cols()));
  }
  return (*value_)(0, 0);
}

Tensor Tape::variable(Matrix value) {
  Node node;
  node.kind = "variable";
  node.value = std::make_shared<const Matrix>(std::move(value));
  nodes_.push_back(std::move(node));
  return Tensor(nodes_.back().value, this, nodes_.size() - 1);
}

Tensor Tape::record(std::string_view kind, std::span<const Tensor> inputs, Matrix value,
                    BackwardFn backward) {
  Node node;
  node.kind = kind;
  node.inputs.reserve(inputs.size());
  node.input_recorded.reserve(inputs.size());
  for (const Tensor& in : inputs) {
    if (in.tape() != nullptr && in.tape() != this) {
      throw UsageError(std::string(kind) + ": inputs recorded on different tapes");
    }
    node.inputs.push_back(in.recorded() ? in.node() : 0);
    node.input_recorded.push_back(in.recorded());
  }
  node.value = std::make_shared<const Matrix>(std::move(value));
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Tensor(nodes_.back().value, this, nodes_.size() - 1);
}

void Tape::backward(const Tensor& loss) {
  if (loss.tape() != this) throw UsageError("backward: loss is not recorded on this tape");
  if (loss.length() != 1 || loss.depth() != 1) {
    throw UsageError("backward: loss must be 1x1, got " + std::to_string(loss.length()) + "x" +
                     std::to_string(loss.depth()));
  }
  grads_.clear();
  grads_.resize(nodes_.size());
  std::vector<bool> touched(nodes_.size(), false);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    grads_[i] = Matrix::Zero(nodes_[i].value->rows(), nodes_[i].value->cols());
  }
  grads_[loss.node()](0, 0) = 1.0;
  touched[loss.node()] = true;

  std::vector<Matrix*> slots;
  for (std::size_t id = loss.node() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!touched[id] || !node.backward) continue;
    slots.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      if (!node.input_recorded[k]) continue;
      slots[k] = &grads_[node.inputs[k]];
      touched[node.inputs[k]] = true;
    }
    node.backward(grads_[id], GradSink(slots));
  }
}

const Matrix& Tape::grad(const Tensor& t) const {
  if (t.tape() != this) throw UsageError("grad: tensor is not recorded on this tape");
  if (t.node() >= grads_.size()) throw UsageError("grad: backward() has not reached this node");
  return grads_[t.node()];
}

namespace {

Tape* common_tape(std::string_view kind, std::span<const Tensor> inputs) {
  Tape* tape = nullptr;
  for (const Tensor& in : inputs) {
    if (in.tape() == nullptr) continue;
    if (tape != nullptr && in.tape() != tape) {
      throw UsageError(std::string(kind) + ": inputs recorded on different tapes");
    }
    tape = in.tape();
  }
  return tape;
}

void require_same_shape(std::string_view kind, const Tensor& a, const Tensor& b) {
  if (a.length() != b.length() || a.depth() != b.depth()) {
    throw UsageError(std::string(kind) + ": shape mismatch " + std::to_string(a.length()) + "x" +
                     std::to_string(a.depth()) + " vs " + std::to_string(b.length()) + "x" +
                     std::to_string(b.depth()));
  }
}

}  // namespace

Tensor record_value(std::string_view kind, std::span<const Tensor> inputs, Matrix value,
                    BackwardFn backward) {
  Tape* tape = common_tape(kind, inputs);
  if (tape == nullptr) return Tensor(std::move(value));
  return tape->record(kind, inputs, std::move(value), std::move(backward));
}

Tensor record(std::string_view kind, std::span<const Tensor> inputs, const ForwardFn& forward,
              BackwardFn backward) {
  std::vector<const Matrix*> values;
  values.reserve(inputs.size());
  for (const Tensor& in : inputs) values.push_back(&in.value());
  return record_value(kind, inputs, forward(values), std::move(backward));
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  const Tensor in[] = {a, b};
  return record_value("add", in, a.value() + b.value(), [](const Matrix& g, const GradSink& sink) {
    if (Matrix* ga = sink.at(0)) *ga += g;
    if (Matrix* gb = sink.at(1)) *gb += g;
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  const Tensor in[] = {a, b};
  return record_value("sub", in, a.value() - b.value(), [](const Matrix& g, const GradSink& sink) {
    if (Matrix* ga = sink.at(0)) *ga += g;
    if (Matrix* gb = sink.at(1)) *gb -= g;
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  const Tensor in[] = {a, b};
  return record_value("mul", in, a.value().cwiseProduct(b.value()),
                      [av = a, bv = b](const Matrix& g, const GradSink& sink) {
                        if (Matrix* ga = sink.at(0)) *ga += g.cwiseProduct(bv.value());
                        if (Matrix* gb = sink.at(1)) *gb += g.cwiseProduct(av.value());
                      });
}

Tensor mul_scalar(const Tensor& a, double s) {
  const Tensor in[] = {a};
  return record_value("mul_scalar", in, a.value() * s, [s](const Matrix& g, const GradSink& sink) {
    if (Matrix* ga = sink.at(0)) *ga += g * s;
  });
}

Tensor sum(const Tensor& a) {
  const Tensor in[] = {a};
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return record_value("sum", in, std::move(out), [](const Matrix& g, const GradSink& sink) {
    if (Matrix* ga = sink.at(0)) ga->array() += g(0, 0);
  });
}

}  // namespace contourcnn
