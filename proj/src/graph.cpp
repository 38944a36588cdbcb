#include "alphamaml/graph.hpp"

namespace alphamaml::ad {

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::Relu: return "relu";
    case Op::Tanh: return "tanh";
    case Op::Exp: return "exp";
    case Op::Rsqrt: return "rsqrt";
    case Op::MatMul: return "matmul";
    case Op::Conv2d: return "conv2d";
    case Op::Conv2dIGrad: return "conv2d_input_grad";
    case Op::Conv2dWGrad: return "conv2d_weight_grad";
    case Op::BcastRowVec: return "bcast_row_vec";
    case Op::BcastColVec: return "bcast_col_vec";
    case Op::SumOverRows: return "sum_over_rows";
    case Op::SumOverCols: return "sum_over_cols";
    case Op::BcastChannel: return "bcast_channel";
    case Op::SumChannel: return "sum_channel";
    case Op::BcastSpatial: return "bcast_spatial";
    case Op::SumSpatial: return "sum_spatial";
    case Op::BcastFull: return "bcast_full";
    case Op::SumAll: return "sum_all";
    case Op::Reshape: return "reshape";
    case Op::LogSumExpRows: return "logsumexp_rows";
    case Op::SelectIndex: return "select_index";
    case Op::ScatterIndex: return "scatter_index";
  }
  return "?";
}

std::atomic<long>& Graph::live_count() {
  static std::atomic<long> count{0};
  return count;
}

Tensor Graph::leaf(const Tensor& values) {
  Tensor t = values.detached();
  t.node_ = size();
  t.owner_ = this;
  Node n;
  n.op = Op::Leaf;
  n.out = t;
  nodes_.push_back(std::move(n));
  return t;
}

Tensor Graph::emit(Node&& n, Tensor result) {
  if (!recording_) return result;
  result.node_ = size();
  result.owner_ = this;
  n.out = result;
  nodes_.push_back(std::move(n));
  return result;
}

}  // namespace alphamaml::ad
