#include "alphamaml/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace alphamaml::ad {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

[[noreturn]] void fail(const char* op, const std::string& msg) {
  throw ShapeError(std::string(op) + ": " + msg);
}

void check_owner(const char* op, Graph& g, const Tensor& t) {
  if (t.in_graph() && t.owner() != &g)
    fail(op, "input tensor belongs to a different graph");
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    fail(op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

Tensor unary_map(Graph& g, Op op, const Tensor& a, double (*f)(double)) {
  check_owner(op_name(op), g, a);
  Tensor out(a.shape());
  const double* src = a.data();
  double* dst = out.data();
  for (long i = 0; i < a.numel(); ++i) dst[i] = f(src[i]);
  Node n;
  n.op = op;
  n.a = a;
  return g.emit(std::move(n), std::move(out));
}

// conv helper geometry
struct ConvDims {
  long n, ci, h, w;      // input
  long co, kh, kw;       // kernel
  long ho, wo;           // output
  long stride, pad;
};

ConvDims conv_dims(const char* op, const Shape& xs, const Shape& ws, long stride, long pad) {
  if (xs.size() != 4 || ws.size() != 4)
    fail(op, "expected 4-d input and kernel, got " + shape_str(xs) + " and " + shape_str(ws));
  ConvDims d;
  d.n = xs[0], d.ci = xs[1], d.h = xs[2], d.w = xs[3];
  d.co = ws[0], d.kh = ws[2], d.kw = ws[3];
  d.stride = stride;
  d.pad = pad;
  if (ws[1] != d.ci)
    fail(op, "kernel channels " + shape_str(ws) + " do not match input " + shape_str(xs));
  if (stride < 1) fail(op, "stride must be >= 1");
  d.ho = (d.h + 2 * pad - d.kh) / stride + 1;
  d.wo = (d.w + 2 * pad - d.kw) / stride + 1;
  if (d.ho < 1 || d.wo < 1) fail(op, "kernel larger than padded input");
  return d;
}

// cols layout: [ci*kh*kw, ho*wo] for one sample
void im2col(const double* x, const ConvDims& d, double* cols) {
  const long hw = d.h * d.w;
  for (long c = 0; c < d.ci; ++c) {
    for (long u = 0; u < d.kh; ++u) {
      for (long v = 0; v < d.kw; ++v) {
        double* row = cols + ((c * d.kh + u) * d.kw + v) * (d.ho * d.wo);
        for (long i = 0; i < d.ho; ++i) {
          const long si = i * d.stride - d.pad + u;
          if (si < 0 || si >= d.h) {
            std::fill(row + i * d.wo, row + (i + 1) * d.wo, 0.0);
            continue;
          }
          const double* src = x + c * hw + si * d.w;
          for (long j = 0; j < d.wo; ++j) {
            const long sj = j * d.stride - d.pad + v;
            row[i * d.wo + j] = (sj >= 0 && sj < d.w) ? src[sj] : 0.0;
          }
        }
      }
    }
  }
}

// scatter-add inverse of im2col
void col2im_add(const double* cols, const ConvDims& d, double* x) {
  const long hw = d.h * d.w;
  for (long c = 0; c < d.ci; ++c) {
    for (long u = 0; u < d.kh; ++u) {
      for (long v = 0; v < d.kw; ++v) {
        const double* row = cols + ((c * d.kh + u) * d.kw + v) * (d.ho * d.wo);
        for (long i = 0; i < d.ho; ++i) {
          const long si = i * d.stride - d.pad + u;
          if (si < 0 || si >= d.h) continue;
          double* dst = x + c * hw + si * d.w;
          for (long j = 0; j < d.wo; ++j) {
            const long sj = j * d.stride - d.pad + v;
            if (sj >= 0 && sj < d.w) dst[sj] += row[i * d.wo + j];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  check_owner("add", g, a);
  check_owner("add", g, b);
  check_same_shape("add", a, b);
  Tensor out(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (long i = 0; i < a.numel(); ++i) po[i] = pa[i] + pb[i];
  Node n;
  n.op = Op::Add;
  n.a = a;
  n.b = b;
  return g.emit(std::move(n), std::move(out));
}

Tensor sub(Graph& g, const Tensor& a, const Tensor& b) {
  check_owner("sub", g, a);
  check_owner("sub", g, b);
  check_same_shape("sub", a, b);
  Tensor out(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (long i = 0; i < a.numel(); ++i) po[i] = pa[i] - pb[i];
  Node n;
  n.op = Op::Sub;
  n.a = a;
  n.b = b;
  return g.emit(std::move(n), std::move(out));
}

Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
  check_owner("mul", g, a);
  check_owner("mul", g, b);
  check_same_shape("mul", a, b);
  Tensor out(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (long i = 0; i < a.numel(); ++i) po[i] = pa[i] * pb[i];
  Node n;
  n.op = Op::Mul;
  n.a = a;
  n.b = b;
  return g.emit(std::move(n), std::move(out));
}

Tensor scale(Graph& g, const Tensor& a, double c) {
  check_owner("scale", g, a);
  Tensor out(a.shape());
  const double* pa = a.data();
  double* po = out.data();
  for (long i = 0; i < a.numel(); ++i) po[i] = pa[i] * c;
  Node n;
  n.op = Op::Scale;
  n.a = a;
  n.c = c;
  return g.emit(std::move(n), std::move(out));
}

Tensor add_scalar(Graph& g, const Tensor& a, double c) {
  check_owner("add_scalar", g, a);
  Tensor out(a.shape());
  const double* pa = a.data();
  double* po = out.data();
  for (long i = 0; i < a.numel(); ++i) po[i] = pa[i] + c;
  Node n;
  n.op = Op::AddScalar;
  n.a = a;
  n.c = c;
  return g.emit(std::move(n), std::move(out));
}

Tensor relu(Graph& g, const Tensor& a) {
  return unary_map(g, Op::Relu, a, [](double v) { return v > 0.0 ? v : 0.0; });
}

Tensor tanh(Graph& g, const Tensor& a) {
  return unary_map(g, Op::Tanh, a, [](double v) { return std::tanh(v); });
}

Tensor exp(Graph& g, const Tensor& a) {
  return unary_map(g, Op::Exp, a, [](double v) { return std::exp(v); });
}

Tensor rsqrt(Graph& g, const Tensor& a) {
  return unary_map(g, Op::Rsqrt, a, [](double v) { return 1.0 / std::sqrt(v); });
}

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  check_owner("matmul", g, a);
  check_owner("matmul", g, b);
  if (a.ndim() != 2 || b.ndim() != 2)
    fail("matmul", "expected 2-d operands, got " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()));
  const long m = trans_a ? a.dim(1) : a.dim(0);
  const long k = trans_a ? a.dim(0) : a.dim(1);
  const long kb = trans_b ? b.dim(1) : b.dim(0);
  const long n = trans_b ? b.dim(0) : b.dim(1);
  if (k != kb)
    fail("matmul", "inner dimensions disagree: " + shape_str(a.shape()) +
                       (trans_a ? "^T" : "") + " vs " + shape_str(b.shape()) +
                       (trans_b ? "^T" : ""));
  Tensor out(Shape{m, n});
  CMap ma(a.data(), a.dim(0), a.dim(1));
  CMap mb(b.data(), b.dim(0), b.dim(1));
  MMap mo(out.data(), m, n);
  if (!trans_a && !trans_b)
    mo.noalias() = ma * mb;
  else if (!trans_a && trans_b)
    mo.noalias() = ma * mb.transpose();
  else if (trans_a && !trans_b)
    mo.noalias() = ma.transpose() * mb;
  else
    mo.noalias() = ma.transpose() * mb.transpose();
  Node nd;
  nd.op = Op::MatMul;
  nd.a = a;
  nd.b = b;
  nd.attrs = {trans_a ? 1L : 0L, trans_b ? 1L : 0L};
  return g.emit(std::move(nd), std::move(out));
}

Tensor conv2d(Graph& g, const Tensor& x, const Tensor& w, long stride, long pad) {
  check_owner("conv2d", g, x);
  check_owner("conv2d", g, w);
  ConvDims d = conv_dims("conv2d", x.shape(), w.shape(), stride, pad);
  Tensor out(Shape{d.n, d.co, d.ho, d.wo});
  const long kdim = d.ci * d.kh * d.kw;
  const long pdim = d.ho * d.wo;
  std::vector<double> cols(static_cast<size_t>(kdim * pdim));
  CMap mw(w.data(), d.co, kdim);
  for (long s = 0; s < d.n; ++s) {
    im2col(x.data() + s * d.ci * d.h * d.w, d, cols.data());
    CMap mc(cols.data(), kdim, pdim);
    MMap mo(out.data() + s * d.co * pdim, d.co, pdim);
    mo.noalias() = mw * mc;
  }
  Node nd;
  nd.op = Op::Conv2d;
  nd.a = x;
  nd.b = w;
  nd.attrs = {stride, pad};
  return g.emit(std::move(nd), std::move(out));
}

Tensor conv2d_input_grad(Graph& g, const Tensor& gy, const Tensor& w, long stride, long pad,
                         const Shape& x_shape) {
  check_owner("conv2d_input_grad", g, gy);
  check_owner("conv2d_input_grad", g, w);
  ConvDims d = conv_dims("conv2d_input_grad", x_shape, w.shape(), stride, pad);
  if (gy.shape() != Shape{d.n, d.co, d.ho, d.wo})
    fail("conv2d_input_grad", "output-gradient shape " + shape_str(gy.shape()) +
                                  " does not match expected " +
                                  shape_str({d.n, d.co, d.ho, d.wo}));
  Tensor out(x_shape);  // zero-filled
  const long kdim = d.ci * d.kh * d.kw;
  const long pdim = d.ho * d.wo;
  std::vector<double> cols(static_cast<size_t>(kdim * pdim));
  CMap mw(w.data(), d.co, kdim);
  for (long s = 0; s < d.n; ++s) {
    CMap mg(gy.data() + s * d.co * pdim, d.co, pdim);
    MMap mc(cols.data(), kdim, pdim);
    mc.noalias() = mw.transpose() * mg;
    col2im_add(cols.data(), d, out.data() + s * d.ci * d.h * d.w);
  }
  Node nd;
  nd.op = Op::Conv2dIGrad;
  nd.a = gy;
  nd.b = w;
  nd.attrs = {stride, pad};
  return g.emit(std::move(nd), std::move(out));
}

Tensor conv2d_weight_grad(Graph& g, const Tensor& gy, const Tensor& x, long stride, long pad,
                          const Shape& w_shape) {
  check_owner("conv2d_weight_grad", g, gy);
  check_owner("conv2d_weight_grad", g, x);
  ConvDims d = conv_dims("conv2d_weight_grad", x.shape(), w_shape, stride, pad);
  if (gy.shape() != Shape{d.n, d.co, d.ho, d.wo})
    fail("conv2d_weight_grad", "output-gradient shape " + shape_str(gy.shape()) +
                                   " does not match expected " +
                                   shape_str({d.n, d.co, d.ho, d.wo}));
  Tensor out(w_shape);
  const long kdim = d.ci * d.kh * d.kw;
  const long pdim = d.ho * d.wo;
  std::vector<double> cols(static_cast<size_t>(kdim * pdim));
  MMap mo(out.data(), d.co, kdim);
  for (long s = 0; s < d.n; ++s) {
    im2col(x.data() + s * d.ci * d.h * d.w, d, cols.data());
    CMap mc(cols.data(), kdim, pdim);
    CMap mg(gy.data() + s * d.co * pdim, d.co, pdim);
    mo.noalias() += mg * mc.transpose();
  }
  Node nd;
  nd.op = Op::Conv2dWGrad;
  nd.a = gy;
  nd.b = x;
  nd.attrs = {stride, pad};
  return g.emit(std::move(nd), std::move(out));
}

Tensor bcast_row_vec(Graph& g, const Tensor& v, long rows) {
  check_owner("bcast_row_vec", g, v);
  if (v.ndim() != 1) fail("bcast_row_vec", "expected 1-d vector, got " + shape_str(v.shape()));
  const long c = v.dim(0);
  Tensor out(Shape{rows, c});
  for (long r = 0; r < rows; ++r) std::memcpy(out.data() + r * c, v.data(), sizeof(double) * c);
  Node n;
  n.op = Op::BcastRowVec;
  n.a = v;
  return g.emit(std::move(n), std::move(out));
}

Tensor bcast_col_vec(Graph& g, const Tensor& v, long cols) {
  check_owner("bcast_col_vec", g, v);
  if (v.ndim() != 1) fail("bcast_col_vec", "expected 1-d vector, got " + shape_str(v.shape()));
  const long b = v.dim(0);
  Tensor out(Shape{b, cols});
  for (long r = 0; r < b; ++r) std::fill_n(out.data() + r * cols, cols, v[r]);
  Node n;
  n.op = Op::BcastColVec;
  n.a = v;
  return g.emit(std::move(n), std::move(out));
}

Tensor sum_over_rows(Graph& g, const Tensor& m) {
  check_owner("sum_over_rows", g, m);
  if (m.ndim() != 2) fail("sum_over_rows", "expected 2-d matrix, got " + shape_str(m.shape()));
  const long b = m.dim(0), c = m.dim(1);
  Tensor out(Shape{c});
  for (long r = 0; r < b; ++r)
    for (long j = 0; j < c; ++j) out.data()[j] += m.data()[r * c + j];
  Node n;
  n.op = Op::SumOverRows;
  n.a = m;
  return g.emit(std::move(n), std::move(out));
}

Tensor sum_over_cols(Graph& g, const Tensor& m) {
  check_owner("sum_over_cols", g, m);
  if (m.ndim() != 2) fail("sum_over_cols", "expected 2-d matrix, got " + shape_str(m.shape()));
  const long b = m.dim(0), c = m.dim(1);
  Tensor out(Shape{b});
  for (long r = 0; r < b; ++r) {
    double s = 0.0;
    for (long j = 0; j < c; ++j) s += m.data()[r * c + j];
    out.data()[r] = s;
  }
  Node n;
  n.op = Op::SumOverCols;
  n.a = m;
  return g.emit(std::move(n), std::move(out));
}

Tensor bcast_channel(Graph& g, const Tensor& v, const Shape& like) {
  check_owner("bcast_channel", g, v);
  if (v.ndim() != 1 || like.size() != 4 || v.dim(0) != like[1])
    fail("bcast_channel", "cannot broadcast " + shape_str(v.shape()) + " to " + shape_str(like));
  Tensor out(like);
  const long n = like[0], c = like[1], hw = like[2] * like[3];
  for (long s = 0; s < n; ++s)
    for (long ch = 0; ch < c; ++ch) std::fill_n(out.data() + (s * c + ch) * hw, hw, v[ch]);
  Node nd;
  nd.op = Op::BcastChannel;
  nd.a = v;
  return g.emit(std::move(nd), std::move(out));
}

Tensor sum_channel(Graph& g, const Tensor& x) {
  check_owner("sum_channel", g, x);
  if (x.ndim() != 4) fail("sum_channel", "expected 4-d input, got " + shape_str(x.shape()));
  const long n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out(Shape{c});
  for (long s = 0; s < n; ++s)
    for (long ch = 0; ch < c; ++ch) {
      const double* src = x.data() + (s * c + ch) * hw;
      double acc = 0.0;
      for (long i = 0; i < hw; ++i) acc += src[i];
      out.data()[ch] += acc;
    }
  Node nd;
  nd.op = Op::SumChannel;
  nd.a = x;
  return g.emit(std::move(nd), std::move(out));
}

Tensor bcast_spatial(Graph& g, const Tensor& v, const Shape& like) {
  check_owner("bcast_spatial", g, v);
  if (v.ndim() != 2 || like.size() != 4 || v.dim(0) != like[0] || v.dim(1) != like[1])
    fail("bcast_spatial", "cannot broadcast " + shape_str(v.shape()) + " to " + shape_str(like));
  Tensor out(like);
  const long nc = like[0] * like[1], hw = like[2] * like[3];
  for (long i = 0; i < nc; ++i) std::fill_n(out.data() + i * hw, hw, v[i]);
  Node nd;
  nd.op = Op::BcastSpatial;
  nd.a = v;
  return g.emit(std::move(nd), std::move(out));
}

Tensor sum_spatial(Graph& g, const Tensor& x) {
  check_owner("sum_spatial", g, x);
  if (x.ndim() != 4) fail("sum_spatial", "expected 4-d input, got " + shape_str(x.shape()));
  const long nc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out(Shape{x.dim(0), x.dim(1)});
  for (long i = 0; i < nc; ++i) {
    const double* src = x.data() + i * hw;
    double acc = 0.0;
    for (long j = 0; j < hw; ++j) acc += src[j];
    out.data()[i] = acc;
  }
  Node nd;
  nd.op = Op::SumSpatial;
  nd.a = x;
  return g.emit(std::move(nd), std::move(out));
}

Tensor bcast_full(Graph& g, const Tensor& s, const Shape& like) {
  check_owner("bcast_full", g, s);
  if (s.numel() != 1) fail("bcast_full", "expected scalar, got " + shape_str(s.shape()));
  Tensor out = Tensor::full(like, s.value());
  Node nd;
  nd.op = Op::BcastFull;
  nd.a = s;
  return g.emit(std::move(nd), std::move(out));
}

Tensor sum_all(Graph& g, const Tensor& x) {
  check_owner("sum_all", g, x);
  double acc = 0.0;
  for (long i = 0; i < x.numel(); ++i) acc += x[i];
  Tensor out = Tensor::scalar(acc);
  Node nd;
  nd.op = Op::SumAll;
  nd.a = x;
  return g.emit(std::move(nd), std::move(out));
}

Tensor reshape(Graph& g, const Tensor& a, const Shape& shape) {
  check_owner("reshape", g, a);
  if (shape_numel(shape) != a.numel())
    fail("reshape", "cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
  Tensor out(shape, std::vector<double>(a.data(), a.data() + a.numel()));
  Node nd;
  nd.op = Op::Reshape;
  nd.a = a;
  return g.emit(std::move(nd), std::move(out));
}

Tensor logsumexp_rows(Graph& g, const Tensor& m) {
  check_owner("logsumexp_rows", g, m);
  if (m.ndim() != 2) fail("logsumexp_rows", "expected 2-d matrix, got " + shape_str(m.shape()));
  const long b = m.dim(0), c = m.dim(1);
  Tensor out(Shape{b});
  for (long r = 0; r < b; ++r) {
    const double* row = m.data() + r * c;
    double mx = row[0];
    for (long j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double acc = 0.0;
    for (long j = 0; j < c; ++j) acc += std::exp(row[j] - mx);
    out.data()[r] = mx + std::log(acc);
  }
  Node nd;
  nd.op = Op::LogSumExpRows;
  nd.a = m;
  return g.emit(std::move(nd), std::move(out));
}

Tensor select_index(Graph& g, const Tensor& m, const std::vector<long>& idx) {
  check_owner("select_index", g, m);
  if (m.ndim() != 2) fail("select_index", "expected 2-d matrix, got " + shape_str(m.shape()));
  const long b = m.dim(0), c = m.dim(1);
  if (static_cast<long>(idx.size()) != b)
    fail("select_index", "need one index per row: " + std::to_string(idx.size()) + " indices for " +
                             shape_str(m.shape()));
  Tensor out(Shape{b});
  for (long r = 0; r < b; ++r) {
    if (idx[static_cast<size_t>(r)] < 0 || idx[static_cast<size_t>(r)] >= c)
      fail("select_index", "index " + std::to_string(idx[static_cast<size_t>(r)]) +
                               " out of range for " + std::to_string(c) + " columns");
    out.data()[r] = m.data()[r * c + idx[static_cast<size_t>(r)]];
  }
  Node nd;
  nd.op = Op::SelectIndex;
  nd.a = m;
  nd.attrs = idx;
  return g.emit(std::move(nd), std::move(out));
}

Tensor scatter_index(Graph& g, const Tensor& v, const std::vector<long>& idx, long cols) {
  check_owner("scatter_index", g, v);
  if (v.ndim() != 1) fail("scatter_index", "expected 1-d vector, got " + shape_str(v.shape()));
  const long b = v.dim(0);
  if (static_cast<long>(idx.size()) != b)
    fail("scatter_index", "need one index per entry");
  Tensor out(Shape{b, cols});
  for (long r = 0; r < b; ++r) {
    if (idx[static_cast<size_t>(r)] < 0 || idx[static_cast<size_t>(r)] >= cols)
      fail("scatter_index", "index " + std::to_string(idx[static_cast<size_t>(r)]) +
                                " out of range for " + std::to_string(cols) + " columns");
    out.data()[r * cols + idx[static_cast<size_t>(r)]] = v[r];
  }
  Node nd;
  nd.op = Op::ScatterIndex;
  nd.a = v;
  nd.attrs = idx;
  return g.emit(std::move(nd), std::move(out));
}

Tensor mean_all(Graph& g, const Tensor& x) {
  if (x.numel() == 0) fail("mean_all", "empty tensor");
  return scale(g, sum_all(g, x), 1.0 / static_cast<double>(x.numel()));
}

Tensor batch_norm(Graph& g, const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.ndim() != 4) fail("batch_norm", "expected 4-d input, got " + shape_str(x.shape()));
  const double inv_count = 1.0 / static_cast<double>(x.dim(0) * x.dim(2) * x.dim(3));
  Tensor mu = scale(g, sum_channel(g, x), inv_count);
  Tensor xc = sub(g, x, bcast_channel(g, mu, x.shape()));
  Tensor var = scale(g, sum_channel(g, mul(g, xc, xc)), inv_count);
  Tensor rstd = rsqrt(g, add_scalar(g, var, eps));
  Tensor xhat = mul(g, xc, bcast_channel(g, rstd, x.shape()));
  return add(g, mul(g, xhat, bcast_channel(g, gamma, x.shape())),
             bcast_channel(g, beta, x.shape()));
}

namespace {

// Accumulates `contrib` into the adjoint slot of node `id`.
void acc(Graph& g, std::vector<Tensor>& adj, int id, const Tensor& contrib) {
  if (id < 0 || id >= static_cast<int>(adj.size())) return;
  auto& slot = adj[static_cast<size_t>(id)];
  slot = slot.defined() ? add(g, slot, contrib) : contrib;
}

Tensor relu_mask(const Tensor& x) {
  Tensor m(x.shape());
  const double* src = x.data();
  double* dst = m.data();
  for (long i = 0; i < x.numel(); ++i) dst[i] = src[i] > 0.0 ? 1.0 : 0.0;
  return m;
}

void node_backward(Graph& g, const Node& nd, const Tensor& gr, std::vector<Tensor>& adj) {
  switch (nd.op) {
    case Op::Leaf:
      break;
    case Op::Add:
      acc(g, adj, nd.a.node(), gr);
      acc(g, adj, nd.b.node(), gr);
      break;
    case Op::Sub:
      acc(g, adj, nd.a.node(), gr);
      acc(g, adj, nd.b.node(), scale(g, gr, -1.0));
      break;
    case Op::Mul:
      acc(g, adj, nd.a.node(), mul(g, gr, nd.b));
      acc(g, adj, nd.b.node(), mul(g, gr, nd.a));
      break;
    case Op::Scale:
      acc(g, adj, nd.a.node(), scale(g, gr, nd.c));
      break;
    case Op::AddScalar:
      acc(g, adj, nd.a.node(), gr);
      break;
    case Op::Relu:
      // slope change at 0 is measure-zero; the mask is a constant
      acc(g, adj, nd.a.node(), mul(g, gr, relu_mask(nd.a)));
      break;
    case Op::Tanh: {
      Tensor one_minus_y2 = add_scalar(g, scale(g, mul(g, nd.out, nd.out), -1.0), 1.0);
      acc(g, adj, nd.a.node(), mul(g, gr, one_minus_y2));
      break;
    }
    case Op::Exp:
      acc(g, adj, nd.a.node(), mul(g, gr, nd.out));
      break;
    case Op::Rsqrt: {
      Tensor r3 = mul(g, nd.out, mul(g, nd.out, nd.out));
      acc(g, adj, nd.a.node(), scale(g, mul(g, gr, r3), -0.5));
      break;
    }
    case Op::MatMul: {
      const bool ta = nd.attrs[0] != 0, tb = nd.attrs[1] != 0;
      Tensor da = ta ? matmul(g, nd.b, gr, tb, true) : matmul(g, gr, nd.b, false, !tb);
      Tensor db = tb ? matmul(g, gr, nd.a, true, ta) : matmul(g, nd.a, gr, !ta, false);
      acc(g, adj, nd.a.node(), da);
      acc(g, adj, nd.b.node(), db);
      break;
    }
    case Op::Conv2d: {
      const long s = nd.attrs[0], p = nd.attrs[1];
      acc(g, adj, nd.a.node(), conv2d_input_grad(g, gr, nd.b, s, p, nd.a.shape()));
      acc(g, adj, nd.b.node(), conv2d_weight_grad(g, gr, nd.a, s, p, nd.b.shape()));
      break;
    }
    case Op::Conv2dIGrad: {
      // out = C_w^T(gy) with a = gy, b = w; conv is bilinear, so both
      // partials stay inside the conv op family.
      const long s = nd.attrs[0], p = nd.attrs[1];
      acc(g, adj, nd.a.node(), conv2d(g, gr, nd.b, s, p));
      acc(g, adj, nd.b.node(), conv2d_weight_grad(g, nd.a, gr, s, p, nd.b.shape()));
      break;
    }
    case Op::Conv2dWGrad: {
      // out = D_x^T(gy) with a = gy, b = x.
      const long s = nd.attrs[0], p = nd.attrs[1];
      acc(g, adj, nd.a.node(), conv2d(g, nd.b, gr, s, p));
      acc(g, adj, nd.b.node(), conv2d_input_grad(g, nd.a, gr, s, p, nd.b.shape()));
      break;
    }
    case Op::BcastRowVec:
      acc(g, adj, nd.a.node(), sum_over_rows(g, gr));
      break;
    case Op::BcastColVec:
      acc(g, adj, nd.a.node(), sum_over_cols(g, gr));
      break;
    case Op::SumOverRows:
      acc(g, adj, nd.a.node(), bcast_row_vec(g, gr, nd.a.dim(0)));
      break;
    case Op::SumOverCols:
      acc(g, adj, nd.a.node(), bcast_col_vec(g, gr, nd.a.dim(1)));
      break;
    case Op::BcastChannel:
      acc(g, adj, nd.a.node(), sum_channel(g, gr));
      break;
    case Op::SumChannel:
      acc(g, adj, nd.a.node(), bcast_channel(g, gr, nd.a.shape()));
      break;
    case Op::BcastSpatial:
      acc(g, adj, nd.a.node(), sum_spatial(g, gr));
      break;
    case Op::SumSpatial:
      acc(g, adj, nd.a.node(), bcast_spatial(g, gr, nd.a.shape()));
      break;
    case Op::BcastFull:
      acc(g, adj, nd.a.node(), sum_all(g, gr));
      break;
    case Op::SumAll:
      acc(g, adj, nd.a.node(), bcast_full(g, gr, nd.a.shape()));
      break;
    case Op::Reshape:
      acc(g, adj, nd.a.node(), reshape(g, gr, nd.a.shape()));
      break;
    case Op::LogSumExpRows: {
      // d lse / dx = softmax(x), computed stably from the saved output
      Tensor softmax = exp(g, sub(g, nd.a, bcast_col_vec(g, nd.out, nd.a.dim(1))));
      acc(g, adj, nd.a.node(), mul(g, bcast_col_vec(g, gr, nd.a.dim(1)), softmax));
      break;
    }
    case Op::SelectIndex:
      acc(g, adj, nd.a.node(), scatter_index(g, gr, nd.attrs, nd.a.dim(1)));
      break;
    case Op::ScatterIndex:
      acc(g, adj, nd.a.node(), select_index(g, gr, nd.attrs));
      break;
  }
}

}  // namespace

std::vector<Tensor> backward(Graph& g, const Tensor& output, const std::vector<Tensor>& wrt,
                             bool create_graph) {
  if (!output.in_graph() || output.owner() != &g)
    throw ShapeError("backward: output is not part of this graph");
  if (output.numel() != 1)
    throw ShapeError("backward: output must be scalar, got shape " + shape_str(output.shape()));

  const int n_before = g.size();
  std::vector<Tensor> adj(static_cast<size_t>(n_before));
  adj[static_cast<size_t>(output.node())] = Tensor::scalar(1.0);

  Graph::RecordingGuard guard(g, create_graph);
  for (int id = output.node(); id >= 0; --id) {
    const Tensor gr = adj[static_cast<size_t>(id)];
    if (!gr.defined()) continue;
    // copy: recording new nodes may reallocate the tape
    const Node nd = g.node(id);
    node_backward(g, nd, gr, adj);
  }

  std::vector<Tensor> grads;
  grads.reserve(wrt.size());
  for (const Tensor& t : wrt) {
    if (t.in_graph() && t.owner() == &g && t.node() < n_before &&
        adj[static_cast<size_t>(t.node())].defined()) {
      grads.push_back(adj[static_cast<size_t>(t.node())]);
    } else {
      grads.push_back(Tensor(t.shape()));  // unreachable -> zeros
    }
  }
  return grads;
}

}  // namespace alphamaml::ad
