#pragma once

#include <vector>

#include "alphamaml/graph.hpp"
#include "alphamaml/tensor.hpp"

namespace alphamaml::ad {

// Elementwise binary ops require identical shapes.
Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor sub(Graph& g, const Tensor& a, const Tensor& b);
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);

Tensor scale(Graph& g, const Tensor& a, double c);
Tensor add_scalar(Graph& g, const Tensor& a, double c);

Tensor relu(Graph& g, const Tensor& a);
Tensor tanh(Graph& g, const Tensor& a);
Tensor exp(Graph& g, const Tensor& a);
Tensor rsqrt(Graph& g, const Tensor& a);

/// 2-d matrix product with optional operand transposes.
Tensor matmul(Graph& g, const Tensor& a, const Tensor& b, bool trans_a = false,
              bool trans_b = false);

/// x: [N,Cin,H,W], w: [Cout,Cin,kh,kw] -> [N,Cout,Ho,Wo] with
/// Ho = (H + 2*pad - kh)/stride + 1 (floor).
Tensor conv2d(Graph& g, const Tensor& x, const Tensor& w, long stride, long pad);
/// Adjoint of conv2d in its input: gy: [N,Cout,Ho,Wo] -> [N,Cin,H,W].
Tensor conv2d_input_grad(Graph& g, const Tensor& gy, const Tensor& w, long stride, long pad,
                         const Shape& x_shape);
/// Adjoint of conv2d in its weight: gy: [N,Cout,Ho,Wo] -> [Cout,Cin,kh,kw].
Tensor conv2d_weight_grad(Graph& g, const Tensor& gy, const Tensor& x, long stride, long pad,
                          const Shape& w_shape);

Tensor bcast_row_vec(Graph& g, const Tensor& v, long rows);
Tensor bcast_col_vec(Graph& g, const Tensor& v, long cols);
Tensor sum_over_rows(Graph& g, const Tensor& m);
Tensor sum_over_cols(Graph& g, const Tensor& m);
Tensor bcast_channel(Graph& g, const Tensor& v, const Shape& like);
Tensor sum_channel(Graph& g, const Tensor& x);
Tensor bcast_spatial(Graph& g, const Tensor& v, const Shape& like);
Tensor sum_spatial(Graph& g, const Tensor& x);
Tensor bcast_full(Graph& g, const Tensor& s, const Shape& like);
Tensor sum_all(Graph& g, const Tensor& x);

Tensor reshape(Graph& g, const Tensor& a, const Shape& shape);
Tensor logsumexp_rows(Graph& g, const Tensor& m);
Tensor select_index(Graph& g, const Tensor& m, const std::vector<long>& idx);
Tensor scatter_index(Graph& g, const Tensor& v, const std::vector<long>& idx, long cols);

// Composites.
Tensor mean_all(Graph& g, const Tensor& x);
/// Batch normalization over [N,C,H,W] with per-batch statistics (no
/// running averages); gamma/beta are per-channel scale and shift.
Tensor batch_norm(Graph& g, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

/// Reverse-mode sweep from a scalar `output`. Returns one gradient per
/// watched tensor, in order; a watched tensor the output does not reach
/// gets zeros. With `create_graph` the returned gradients are themselves
/// graph-resident, so a second backward yields second-order derivatives.
std::vector<Tensor> backward(Graph& g, const Tensor& output, const std::vector<Tensor>& wrt,
                             bool create_graph);

}  // namespace alphamaml::ad
