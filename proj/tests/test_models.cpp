#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "alphamaml/models.hpp"
#include "alphamaml/ops.hpp"
#include "alphamaml/rng.hpp"

using namespace alphamaml;
using ad::Graph;
using ad::Shape;
using ad::Tensor;

namespace {

// Plain-loop forward pass for convnet4, independent of the graph ops.
std::vector<double> reference_convnet_forward(const ParamVector& p,
                                              const std::vector<double>& image, long n_outputs) {
  const double eps = 1e-5;
  long side = 28, cin = 1;
  std::vector<double> x = image;  // [cin, side, side]
  for (int block = 0; block < 4; ++block) {
    const Tensor& w = p.segments[4 * block];
    const Tensor& bias = p.segments[4 * block + 1];
    const Tensor& gamma = p.segments[4 * block + 2];
    const Tensor& beta = p.segments[4 * block + 3];
    const long out_side = (side + 2 - 3) / 2 + 1;
    std::vector<double> y(64 * out_side * out_side, 0.0);
    for (long oc = 0; oc < 64; ++oc)
      for (long i = 0; i < out_side; ++i)
        for (long j = 0; j < out_side; ++j) {
          double acc = bias[oc];
          for (long c = 0; c < cin; ++c)
            for (long u = 0; u < 3; ++u)
              for (long v = 0; v < 3; ++v) {
                const long si = 2 * i - 1 + u, sj = 2 * j - 1 + v;
                if (si < 0 || si >= side || sj < 0 || sj >= side) continue;
                acc += x[(c * side + si) * side + sj] * w[((oc * cin + c) * 3 + u) * 3 + v];
              }
          y[(oc * out_side + i) * out_side + j] = acc;
        }
    // batch statistics over this single-image batch, then scale/shift/relu
    const long hw = out_side * out_side;
    for (long oc = 0; oc < 64; ++oc) {
      double mean = 0.0;
      for (long k = 0; k < hw; ++k) mean += y[oc * hw + k];
      mean /= static_cast<double>(hw);
      double var = 0.0;
      for (long k = 0; k < hw; ++k) {
        const double d = y[oc * hw + k] - mean;
        var += d * d;
      }
      var /= static_cast<double>(hw);
      const double rstd = 1.0 / std::sqrt(var + eps);
      for (long k = 0; k < hw; ++k) {
        double v = (y[oc * hw + k] - mean) * rstd * gamma[oc] + beta[oc];
        y[oc * hw + k] = v > 0.0 ? v : 0.0;
      }
    }
    x = std::move(y);
    side = out_side;
    cin = 64;
  }
  // global average over the remaining 2x2, then the linear head
  const long hw = side * side;
  std::vector<double> feats(64);
  for (long c = 0; c < 64; ++c) {
    double acc = 0.0;
    for (long k = 0; k < hw; ++k) acc += x[c * hw + k];
    feats[c] = acc / static_cast<double>(hw);
  }
  const Tensor& head_w = p.segments[16];
  const Tensor& head_b = p.segments[17];
  std::vector<double> logits(static_cast<size_t>(n_outputs));
  for (long o = 0; o < n_outputs; ++o) {
    double acc = head_b[o];
    for (long c = 0; c < 64; ++c) acc += feats[c] * head_w[c * n_outputs + o];
    logits[static_cast<size_t>(o)] = acc;
  }
  return logits;
}

}  // namespace

TEST_CASE("convnet4 init matches the published layout") {
  ModelSpec spec{ModelKind::convnet4, 5, {}, 1, 3};
  ParamVector p = init_params(spec);
  CHECK(p.segments[0].shape() == Shape{64, 1, 3, 3});  // 3x3 convs, 64 filters
  CHECK(p.segments[4].shape() == Shape{64, 64, 3, 3});
  CHECK(p.segments[16].shape() == Shape{64, 5});
  // bn scales start at one, shifts and biases at zero
  CHECK(p.segments[2][0] == 1.0);
  CHECK(p.segments[3][0] == 0.0);
  CHECK(p.segments[1][0] == 0.0);

  ParamVector again = init_params(spec);
  REQUIRE(p.size() == again.size());
  for (size_t i = 0; i < p.size(); ++i)
    for (long j = 0; j < p.segments[i].numel(); ++j)
      CHECK(p.segments[i][j] == again.segments[i][j]);
}

TEST_CASE("mlp parameter count follows the layer arithmetic") {
  ModelSpec spec{ModelKind::mlp, 1, {40, 40}, 1, 0};
  ParamVector p = init_params(spec);
  // 1*40+40 + 40*40+40 + 40*1+1
  CHECK(p.total_len() == 1761);
  CHECK_THROWS_AS(init_params(ModelSpec{ModelKind::mlp, 0, {}, 1, 0}), ad::ShapeError);
}

TEST_CASE("convnet4 forward shape and loop-oracle agreement") {
  ModelSpec spec{ModelKind::convnet4, 5, {}, 1, 17};
  ParamVector params = init_params(spec);
  Rng rng(99);
  Tensor batch({5, 1, 28, 28});
  for (long i = 0; i < batch.numel(); ++i) batch.data()[i] = rng.uniform(0.0, 1.0);

  Graph g;
  ParamVector leaves = params.as_leaves_of(g);
  Tensor logits = forward(g, spec, leaves, batch);
  REQUIRE(logits.shape() == Shape{5, 5});

  // single-image batch so the reference's per-image bn statistics apply
  Tensor one({1, 1, 28, 28});
  std::memcpy(one.data(), batch.data(), sizeof(double) * one.numel());
  Graph g1;
  Tensor single = forward(g1, spec, params.as_leaves_of(g1), one);
  auto ref = reference_convnet_forward(params, {one.data(), one.data() + one.numel()}, 5);
  for (long o = 0; o < 5; ++o)
    CHECK(single[o] == doctest::Approx(ref[static_cast<size_t>(o)]).epsilon(1e-10));

  CHECK_THROWS_AS(forward(g, spec, leaves, Tensor({5, 1, 27, 27})), ad::ShapeError);
}

TEST_CASE("mlp forward: zero parameters give zero output") {
  ModelSpec spec{ModelKind::mlp, 3, {8}, 2, 0};
  ParamVector zeros;
  zeros.segments = {Tensor({2, 8}), Tensor({8}), Tensor({8, 3}), Tensor({3})};
  Graph g;
  Tensor out = forward(g, spec, zeros.as_leaves_of(g), Tensor({4, 2}, std::vector<double>(8, 2.5)));
  for (long i = 0; i < out.numel(); ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("forward is pure") {
  ModelSpec spec{ModelKind::mlp, 2, {5}, 2, 4};
  ParamVector params = init_params(spec);
  ParamVector before;
  for (auto& s : params.segments) before.segments.push_back(s.clone());
  Tensor inputs({3, 2}, {1, 2, 3, 4, 5, 6});
  Tensor inputs_before = inputs.clone();
  Graph g;
  forward(g, spec, params.as_leaves_of(g), inputs);
  for (size_t i = 0; i < params.size(); ++i)
    for (long j = 0; j < params.segments[i].numel(); ++j)
      CHECK(params.segments[i][j] == before.segments[i][j]);
  for (long j = 0; j < inputs.numel(); ++j) CHECK(inputs[j] == inputs_before[j]);
}

TEST_CASE("loss values for the canonical cases") {
  Graph g;
  Tensor uniform20 = g.leaf(Tensor({4, 20}));
  Tensor t20({4}, {0, 7, 13, 19});
  CHECK(loss(g, LossKind::cross_entropy, uniform20, t20).value() ==
        doctest::Approx(std::log(20.0)));

  Tensor uniform5 = g.leaf(Tensor({3, 5}));
  Tensor t5({3}, {0, 2, 4});
  CHECK(loss(g, LossKind::cross_entropy, uniform5, t5).value() == doctest::Approx(std::log(5.0)));

  Tensor out({3, 1}, {1, 2, 3});
  CHECK(loss(g, LossKind::mse, g.leaf(out), out).value() == 0.0);

  Tensor bad_target({3}, {0, 5, 1});  // class 5 of 5
  CHECK_THROWS_AS(loss(g, LossKind::cross_entropy, uniform5, bad_target), ad::ShapeError);
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(31);
  Graph g;
  Tensor logits(Shape{6, 9});
  for (long i = 0; i < logits.numel(); ++i) logits.data()[i] = rng.uniform(-30.0, 30.0);
  Tensor l = g.leaf(logits);
  Tensor lse = ad::logsumexp_rows(g, l);
  Tensor softmax = ad::exp(g, ad::sub(g, l, ad::bcast_col_vec(g, lse, 9)));
  for (long r = 0; r < 6; ++r) {
    double acc = 0.0;
    for (long c = 0; c < 9; ++c) acc += softmax[r * 9 + c];
    CHECK(std::abs(acc - 1.0) <= 1e-12);
  }
}

TEST_CASE("loss gradient w.r.t. params matches finite differences") {
  ModelSpec spec{ModelKind::convnet4, 3, {}, 1, 8};
  ParamVector params = init_params(spec);
  Rng rng(55);
  Tensor inputs({3, 1, 28, 28});
  for (long i = 0; i < inputs.numel(); ++i) inputs.data()[i] = rng.uniform(0.0, 1.0);
  Tensor targets({3}, {0, 1, 2});

  auto loss_at = [&](const ParamVector& pv) {
    Graph g;
    g.set_recording(false);
    return loss(g, LossKind::cross_entropy, forward(g, spec, pv, inputs), targets).value();
  };

  Graph g;
  ParamVector leaves = params.as_leaves_of(g);
  Tensor l = loss(g, LossKind::cross_entropy, forward(g, spec, leaves, inputs), targets);
  auto grads = ad::backward(g, l, leaves.segments, false);

  // small step keeps the probes off the relu kinks
  const double eps = 1e-6;
  for (int probe = 0; probe < 10; ++probe) {
    const size_t seg = static_cast<size_t>(rng.below(params.size()));
    const long idx =
        static_cast<long>(rng.below(static_cast<uint64_t>(params.segments[seg].numel())));
    ParamVector hi, lo;
    for (auto& s : params.segments) {
      hi.segments.push_back(s.clone());
      lo.segments.push_back(s.clone());
    }
    hi.segments[seg].data()[idx] += eps;
    lo.segments[seg].data()[idx] -= eps;
    const double fd = (loss_at(hi) - loss_at(lo)) / (2 * eps);
    const double an = grads[seg][idx];
    // conv biases are inert under batch norm: both sides agree on ~0,
    // where a relative comparison is noise-dominated
    if (std::max(std::abs(fd), std::abs(an)) < 1e-7) continue;
    CHECK(std::abs(fd - an) / std::max(std::abs(fd), std::abs(an)) < 1e-5);
  }
}
