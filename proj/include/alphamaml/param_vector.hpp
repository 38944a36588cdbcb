#pragma once

#include <vector>

#include "alphamaml/graph.hpp"
#include "alphamaml/ops.hpp"
#include "alphamaml/tensor.hpp"

namespace alphamaml {

/// Flat view over a model's parameters: an ordered list of tensors,
/// treated as one long vector by dot/axpy. Segments may be plain values
/// or graph-resident tensors.
struct ParamVector {
  std::vector<ad::Tensor> segments;

  ParamVector() = default;
  explicit ParamVector(std::vector<ad::Tensor> segs) : segments(std::move(segs)) {}

  long total_len() const {
    long n = 0;
    for (const auto& t : segments) n += t.numel();
    return n;
  }
  size_t size() const { return segments.size(); }
  bool empty() const { return segments.empty(); }
  bool all_finite() const {
    for (const auto& t : segments)
      if (!t.all_finite()) return false;
    return true;
  }

  /// Values only, no graph membership.
  ParamVector detached() const {
    ParamVector out;
    out.segments.reserve(segments.size());
    for (const auto& t : segments) out.segments.push_back(t.detached());
    return out;
  }

  /// Registers every segment as a leaf of `g` (buffers shared).
  ParamVector as_leaves_of(ad::Graph& g) const {
    ParamVector out;
    out.segments.reserve(segments.size());
    for (const auto& t : segments) out.segments.push_back(g.leaf(t));
    return out;
  }
};

void check_compatible(const char* what, const ParamVector& a, const ParamVector& b);

/// Sum of elementwise products over all segments (plain values).
double dot(const ParamVector& a, const ParamVector& b);

/// y + a*x on plain values; result is detached.
ParamVector axpy(double a, const ParamVector& x, const ParamVector& y);

/// y + a*x recorded on `g` (when g is recording), so the result is
/// differentiable w.r.t. both x and y.
ParamVector axpy(ad::Graph& g, double a, const ParamVector& x, const ParamVector& y);

ParamVector zeros_like(const ParamVector& v);

}  // namespace alphamaml
