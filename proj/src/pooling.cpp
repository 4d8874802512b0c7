#include "contourcnn/pooling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>
#include <utility>

namespace contourcnn {

std::string_view to_string(PoolingVariant v) {
  switch (v) {
    case PoolingVariant::RemoveOne: return "remove-one";
    case PoolingVariant::Max: return "max";
    case PoolingVariant::Average: return "avg";
  }
  return "unknown";
}

PoolingVariant parse_pooling_variant(std::string_view s) {
  if (s == "remove-one" || s == "removeone") return PoolingVariant::RemoveOne;
  if (s == "max") return PoolingVariant::Max;
  if (s == "avg" || s == "average") return PoolingVariant::Average;
  throw UsageError("unknown pooling variant '" + std::string(s) + "'");
}

void PoolingSpec::validate() const {
  if (target_length < 1) {
    throw UsageError("pooling target length must be >= 1, got " + std::to_string(target_length));
  }
  if (window < 2) throw UsageError("pooling window must be >= 2, got " + std::to_string(window));
}

Index PoolTrace::merge_count() const {
  return std::count_if(steps.begin(), steps.end(),
                       [](const PoolStep& s) { return s.kind == PoolStep::Kind::Merge; });
}

Index PoolTrace::remove_count() const {
  return static_cast<Index>(steps.size()) - merge_count();
}

PoolOutput priority_pool_values(const Matrix& x, const PoolingSpec& spec) {
  spec.validate();
  const Index n = x.rows();
  const Index depth = x.cols();

  PoolOutput out;
  out.trace.spec = spec;
  out.trace.input_length = n;
  if (n <= spec.target_length) {
    out.values = x;
    out.trace.survivors.resize(n);
    std::iota(out.trace.survivors.begin(), out.trace.survivors.end(), Index{0});
    out.trace.anchors = out.trace.survivors;
    return out;
  }

  const Index step_shrink = spec.window - 1;
  const bool merging = spec.variant != PoolingVariant::RemoveOne;
  const Index merges = merging ? (n - spec.target_length) / step_shrink : 0;
  const Index capacity = n + merges;

  Matrix values(capacity, depth);
  values.topRows(n) = x;
  std::vector<Index> prev(capacity), next(capacity), anchor(capacity);
  std::vector<double> magnitude(capacity);
  std::vector<bool> alive(capacity, false);
  std::vector<Index> id_at_anchor(n);

  // (magnitude, anchor): begin() is the lowest magnitude, ties to the lowest position.
  std::set<std::pair<double, Index>> queue;
  auto enqueue = [&](Index id) {
    magnitude[id] = std::sqrt(values.row(id).squaredNorm());
    if (!std::isfinite(magnitude[id])) throw NumericError("priority pooling: non-finite input");
    queue.emplace(magnitude[id], anchor[id]);
    id_at_anchor[anchor[id]] = id;
    alive[id] = true;
  };
  auto dequeue = [&](Index id) {
    queue.erase({magnitude[id], anchor[id]});
    alive[id] = false;
  };

  for (Index i = 0; i < n; ++i) {
    prev[i] = (i + n - 1) % n;
    next[i] = (i + 1) % n;
    anchor[i] = i;
    enqueue(i);
  }

  Index length = n;
  Index next_id = n;
  while (length > spec.target_length) {
    auto best = queue.begin();
    if (auto runner = std::next(best); runner != queue.end()) {
      out.trace.min_margin = std::min(out.trace.min_margin, runner->first - best->first);
    }
    const Index centre = id_at_anchor[best->second];
    const Index remaining = length - spec.target_length;

    PoolStep step;
    step.centre = centre;
    if (!merging || remaining < step_shrink) {
      step.kind = PoolStep::Kind::Remove;
      step.members = {centre};
      dequeue(centre);
      next[prev[centre]] = next[centre];
      prev[next[centre]] = prev[centre];
      --length;
      out.trace.steps.push_back(std::move(step));
      continue;
    }

    step.kind = PoolStep::Kind::Merge;
    const Index before_count = (spec.window - 1) / 2;
    Index first = centre;
    for (Index k = 0; k < before_count; ++k) first = prev[first];
    step.members.reserve(spec.window);
    for (Index k = 0, id = first; k < spec.window; ++k, id = next[id]) step.members.push_back(id);

    const Index merged = next_id++;
    step.merged = merged;
    anchor[merged] = anchor[centre];

    if (spec.variant == PoolingVariant::Max) {
      step.argmax_slot.assign(depth, 0);
      for (Index d = 0; d < depth; ++d) {
        Index slot = 0;
        for (Index s = 1; s < spec.window; ++s) {
          const double cand = values(step.members[s], d);
          const double cur = values(step.members[slot], d);
          if (cand > cur ||
              (cand == cur && anchor[step.members[s]] < anchor[step.members[slot]])) {
            slot = s;
          }
        }
        step.argmax_slot[d] = slot;
        values(merged, d) = values(step.members[slot], d);
      }
    } else {
      RowVector acc = values.row(step.members[0]);
      for (Index s = 1; s < spec.window; ++s) acc += values.row(step.members[s]);
      values.row(merged) = acc / static_cast<double>(spec.window);
    }

    const Index before = prev[step.members.front()];
    const Index after = next[step.members.back()];
    for (Index id : step.members) dequeue(id);
    length -= step_shrink;
    if (before == step.members.back()) {
      prev[merged] = next[merged] = merged;
    } else {
      prev[merged] = before;
      next[before] = merged;
      next[merged] = after;
      prev[after] = merged;
    }
    enqueue(merged);
    out.trace.steps.push_back(std::move(step));
  }

  for (Index a = 0; a < n; ++a) {
    const Index id = id_at_anchor[a];
    if (alive[id] && anchor[id] == a) {
      out.trace.survivors.push_back(id);
      out.trace.anchors.push_back(a);
    }
  }
  out.values.resize(static_cast<Index>(out.trace.survivors.size()), depth);
  for (std::size_t r = 0; r < out.trace.survivors.size(); ++r) {
    out.values.row(static_cast<Index>(r)) = values.row(out.trace.survivors[r]);
  }
  return out;
}

Matrix priority_pool_backward(const PoolTrace& trace, const Matrix& out_grad) {
  const Index n = trace.input_length;
  const Index capacity = n + trace.merge_count();
  Matrix grads = Matrix::Zero(capacity, out_grad.cols());
  for (std::size_t r = 0; r < trace.survivors.size(); ++r) {
    grads.row(trace.survivors[r]) = out_grad.row(static_cast<Index>(r));
  }
  const double share = 1.0 / static_cast<double>(trace.spec.window);
  for (auto it = trace.steps.rbegin(); it != trace.steps.rend(); ++it) {
    if (it->kind != PoolStep::Kind::Merge) continue;
    if (trace.spec.variant == PoolingVariant::Max) {
      for (Index d = 0; d < grads.cols(); ++d) {
        grads(it->members[it->argmax_slot[d]], d) += grads(it->merged, d);
      }
    } else {
      const RowVector g = grads.row(it->merged) * share;
      for (Index id : it->members) grads.row(id) += g;
    }
  }
  return grads.topRows(n);
}

}  // namespace contourcnn
