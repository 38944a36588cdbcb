#include "alphamaml/param_vector.hpp"

namespace alphamaml {

void check_compatible(const char* what, const ParamVector& a, const ParamVector& b) {
  if (a.size() != b.size())
    throw ad::ShapeError(std::string(what) + ": segment counts differ (" +
                         std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  for (size_t i = 0; i < a.size(); ++i)
    if (!a.segments[i].same_shape(b.segments[i]))
      throw ad::ShapeError(std::string(what) + ": segment " + std::to_string(i) +
                           " shape mismatch " + ad::shape_str(a.segments[i].shape()) + " vs " +
                           ad::shape_str(b.segments[i].shape()));
}

double dot(const ParamVector& a, const ParamVector& b) {
  check_compatible("dot", a, b);
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double* pa = a.segments[i].data();
    const double* pb = b.segments[i].data();
    for (long j = 0; j < a.segments[i].numel(); ++j) acc += pa[j] * pb[j];
  }
  return acc;
}

ParamVector axpy(double a, const ParamVector& x, const ParamVector& y) {
  check_compatible("axpy", x, y);
  ParamVector out;
  out.segments.reserve(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    ad::Tensor t(x.segments[i].shape());
    const double* px = x.segments[i].data();
    const double* py = y.segments[i].data();
    double* po = t.data();
    for (long j = 0; j < t.numel(); ++j) po[j] = py[j] + a * px[j];
    out.segments.push_back(std::move(t));
  }
  return out;
}

ParamVector axpy(ad::Graph& g, double a, const ParamVector& x, const ParamVector& y) {
  check_compatible("axpy", x, y);
  ParamVector out;
  out.segments.reserve(x.size());
  for (size_t i = 0; i < x.size(); ++i)
    out.segments.push_back(ad::add(g, y.segments[i], ad::scale(g, x.segments[i], a)));
  return out;
}

ParamVector zeros_like(const ParamVector& v) {
  ParamVector out;
  out.segments.reserve(v.size());
  for (const auto& t : v.segments) out.segments.push_back(ad::Tensor(t.shape()));
  return out;
}

}  // namespace alphamaml
