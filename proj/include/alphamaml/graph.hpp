#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <vector>

#include "alphamaml/tensor.hpp"

namespace alphamaml::ad {

enum class Op : uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Scale,      // x * c
  AddScalar,  // x + c
  Relu,
  Tanh,
  Exp,
  Rsqrt,
  MatMul,          // attrs = {trans_a, trans_b}
  Conv2d,          // attrs = {stride, pad}
  Conv2dIGrad,     // gradient of conv2d w.r.t. its input; attrs = {stride, pad}
  Conv2dWGrad,     // gradient of conv2d w.r.t. its weight; attrs = {stride, pad}
  BcastRowVec,     // [C] -> [B,C], every row equal
  BcastColVec,     // [B] -> [B,C], every column equal
  SumOverRows,     // [B,C] -> [C]
  SumOverCols,     // [B,C] -> [B]
  BcastChannel,    // [C] -> [N,C,H,W]
  SumChannel,      // [N,C,H,W] -> [C]
  BcastSpatial,    // [N,C] -> [N,C,H,W]
  SumSpatial,      // [N,C,H,W] -> [N,C]
  BcastFull,       // scalar -> any shape
  SumAll,          // any shape -> scalar
  Reshape,
  LogSumExpRows,   // [B,C] -> [B], numerically stable
  SelectIndex,     // [B,C] -> [B], one column index per row; attrs = indices
  ScatterIndex,    // [B] -> [B,C], adjoint of SelectIndex; attrs = indices
};

const char* op_name(Op op);

/// One recorded primitive application. Saved tensors keep their node
/// handles so backward rules recorded in create_graph mode stay
/// differentiable.
struct Node {
  Op op = Op::Leaf;
  Tensor a;    // first input (empty for Leaf)
  Tensor b;    // second input (empty for unary ops)
  Tensor out;  // forward result
  double c = 0.0;           // Scale / AddScalar constant
  std::vector<long> attrs;  // op-specific integers
};

/// Append-only tape of primitive applications. Single-threaded by
/// construction; independent graphs may live on independent threads.
class Graph {
 public:
  Graph() { live_count().fetch_add(1, std::memory_order_relaxed); }
  ~Graph() { live_count().fetch_sub(1, std::memory_order_relaxed); }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }

  int size() const { return static_cast<int>(nodes_.size()); }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }

  /// Registers `values` as a graph leaf (shares the buffer).
  Tensor leaf(const Tensor& values);

  /// Appends a node and returns `result` bound to it. When recording is
  /// off the result is returned detached and nothing is appended.
  Tensor emit(Node&& n, Tensor result);

  /// Number of Graph instances currently alive in the process; the
  /// trainers promise to hold no graph between iterations.
  static std::atomic<long>& live_count();

  /// RAII recording toggle.
  class RecordingGuard {
   public:
    RecordingGuard(Graph& g, bool on) : g_(g), prev_(g.recording()) { g_.set_recording(on); }
    ~RecordingGuard() { g_.set_recording(prev_); }

   private:
    Graph& g_;
    bool prev_;
  };

 private:
  std::vector<Node> nodes_;
  bool recording_ = true;
};

}  // namespace alphamaml::ad
