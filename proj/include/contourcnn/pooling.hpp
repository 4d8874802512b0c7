#pragma once

// Priority pooling: iterative length reduction driven by per-vertex L2
// magnitudes over a circular sequence.
//
// Vertices are identified by ids. Ids 0..N-1 are the input rows; every merge
// creates a fresh id N, N+1, ... Each live vertex also has an anchor, the input
// position it occupies: the anchor of a merged vertex is that of the window
// centre. Because survivors keep their relative circular order, anchor order
// equals current sequence order, so "lowest index" tie-breaking compares anchors.

#include <limits>
#include <string_view>
#include <vector>

#include "contourcnn/tensor.hpp"

namespace contourcnn {

enum class PoolingVariant { RemoveOne, Max, Average };

std::string_view to_string(PoolingVariant v);
/// Accepts "remove-one", "max", "avg" (and "average").
PoolingVariant parse_pooling_variant(std::string_view s);

struct PoolingSpec {
  PoolingVariant variant = PoolingVariant::RemoveOne;
  Index target_length = 1;
  Index window = 3;

  void validate() const;
};

struct PoolStep {
  enum class Kind { Remove, Merge };
  Kind kind = Kind::Remove;
  /// Vertex with the lowest magnitude at this step.
  Index centre = 0;
  /// Remove: {centre}. Merge: the window in circular order, centre in the middle.
  std::vector<Index> members;
  /// Merge only: id of the new vertex.
  Index merged = -1;
  /// Max merge only: per channel, the member slot holding the maximum.
  std::vector<Index> argmax_slot;
};

struct PoolTrace {
  PoolingSpec spec;
  Index input_length = 0;
  std::vector<PoolStep> steps;
  /// Output rows as vertex ids, in sequence order.
  std::vector<Index> survivors;
  /// Input position of each output row (strictly increasing).
  std::vector<Index> anchors;
  /// Smallest gap between the chosen and the runner-up magnitude over all
  /// steps; +inf when no selection was made. Small values flag near-ties.
  double min_margin = std::numeric_limits<double>::infinity();

  Index merge_count() const;
  Index remove_count() const;
};

struct PoolOutput {
  Matrix values;
  PoolTrace trace;
};

/// Runs the pooling schedule on a plain matrix. If N <= target the output is
/// the input and the trace has no steps. Merges shrink the sequence by
/// window - 1; once the remaining reduction is smaller than that, Remove One
/// steps finish the job so the target is met exactly.
PoolOutput priority_pool_values(const Matrix& x, const PoolingSpec& spec);

/// Routes an output gradient back to the input rows through a trace.
/// Removed vertices get zero, Max routes per channel to the argmax member,
/// Average splits evenly across the window.
Matrix priority_pool_backward(const PoolTrace& trace, const Matrix& out_grad);

}  // namespace contourcnn
