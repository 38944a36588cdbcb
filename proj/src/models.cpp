#include "alphamaml/models.hpp"

#include <cmath>

#include "alphamaml/rng.hpp"

namespace alphamaml {

namespace {

constexpr long kConvChannels = 64;
constexpr long kConvBlocks = 4;
constexpr long kImageSide = 28;
constexpr double kInitStd = 0.02;

ad::Tensor trunc_normal(Rng& rng, ad::Shape shape) {
  ad::Tensor t(std::move(shape));
  double* p = t.data();
  for (long i = 0; i < t.numel(); ++i) p[i] = rng.truncated_normal(kInitStd);
  return t;
}

ad::Tensor ones(ad::Shape shape) { return ad::Tensor::full(std::move(shape), 1.0); }

std::vector<long> ce_targets(const ad::Tensor& targets, long n_classes) {
  if (targets.ndim() != 1)
    throw ad::ShapeError("loss: cross-entropy targets must be 1-d class ids, got " +
                         ad::shape_str(targets.shape()));
  std::vector<long> idx(static_cast<size_t>(targets.numel()));
  for (long i = 0; i < targets.numel(); ++i) {
    double v = targets[i];
    long c = static_cast<long>(v);
    if (static_cast<double>(c) != v || c < 0 || c >= n_classes)
      throw ad::ShapeError("loss: class index " + std::to_string(v) + " invalid for " +
                           std::to_string(n_classes) + " classes");
    idx[static_cast<size_t>(i)] = c;
  }
  return idx;
}

}  // namespace

const char* model_kind_name(ModelKind k) {
  return k == ModelKind::convnet4 ? "convnet4" : "mlp";
}

ParamVector init_params(const ModelSpec& spec) {
  Rng rng(spec.seed);
  ParamVector p;
  switch (spec.kind) {
    case ModelKind::convnet4: {
      if (spec.n_outputs < 1) throw ad::ShapeError("init: n_outputs must be positive");
      long cin = 1;
      for (long b = 0; b < kConvBlocks; ++b) {
        p.segments.push_back(trunc_normal(rng, {kConvChannels, cin, 3, 3}));  // conv weight
        p.segments.push_back(ad::Tensor({kConvChannels}));                    // conv bias
        p.segments.push_back(ones({kConvChannels}));                          // bn scale
        p.segments.push_back(ad::Tensor({kConvChannels}));                    // bn shift
        cin = kConvChannels;
      }
      p.segments.push_back(trunc_normal(rng, {kConvChannels, spec.n_outputs}));  // head weight
      p.segments.push_back(ad::Tensor({spec.n_outputs}));                        // head bias
      return p;
    }
    case ModelKind::mlp: {
      if (spec.n_outputs < 1 || spec.input_dim < 1)
        throw ad::ShapeError("init: n_outputs and input_dim must be positive");
      long din = spec.input_dim;
      for (long h : spec.hidden) {
        p.segments.push_back(trunc_normal(rng, {din, h}));
        p.segments.push_back(ad::Tensor({h}));
        din = h;
      }
      p.segments.push_back(trunc_normal(rng, {din, spec.n_outputs}));
      p.segments.push_back(ad::Tensor({spec.n_outputs}));
      return p;
    }
  }
  throw ad::ShapeError("init: unsupported model kind");
}

ad::Tensor forward(ad::Graph& g, const ModelSpec& spec, const ParamVector& params,
                   const ad::Tensor& inputs) {
  switch (spec.kind) {
    case ModelKind::convnet4: {
      if (inputs.ndim() != 4 || inputs.dim(1) != 1 || inputs.dim(2) != kImageSide ||
          inputs.dim(3) != kImageSide)
        throw ad::ShapeError("forward: convnet4 expects [B,1,28,28], got " +
                             ad::shape_str(inputs.shape()));
      if (params.size() != kConvBlocks * 4 + 2)
        throw ad::ShapeError("forward: convnet4 expects " + std::to_string(kConvBlocks * 4 + 2) +
                             " parameter segments, got " + std::to_string(params.size()));
      ad::Tensor x = inputs;
      for (long b = 0; b < kConvBlocks; ++b) {
        const auto& w = params.segments[static_cast<size_t>(4 * b)];
        const auto& bias = params.segments[static_cast<size_t>(4 * b + 1)];
        const auto& gamma = params.segments[static_cast<size_t>(4 * b + 2)];
        const auto& beta = params.segments[static_cast<size_t>(4 * b + 3)];
        x = ad::conv2d(g, x, w, /*stride=*/2, /*pad=*/1);
        x = ad::add(g, x, ad::bcast_channel(g, bias, x.shape()));
        x = ad::batch_norm(g, x, gamma, beta);
        x = ad::relu(g, x);
      }
      // spatial path 28 -> 14 -> 7 -> 4 -> 2; global average to 64 features
      const double inv_hw = 1.0 / static_cast<double>(x.dim(2) * x.dim(3));
      ad::Tensor feats = ad::scale(g, ad::sum_spatial(g, x), inv_hw);
      const auto& head_w = params.segments[params.size() - 2];
      const auto& head_b = params.segments[params.size() - 1];
      ad::Tensor logits = ad::matmul(g, feats, head_w);
      return ad::add(g, logits, ad::bcast_row_vec(g, head_b, logits.dim(0)));
    }
    case ModelKind::mlp: {
      if (inputs.ndim() != 2 || inputs.dim(1) != spec.input_dim)
        throw ad::ShapeError("forward: mlp expects [B," + std::to_string(spec.input_dim) +
                             "], got " + ad::shape_str(inputs.shape()));
      if (params.size() != 2 * (spec.hidden.size() + 1))
        throw ad::ShapeError("forward: mlp expects " +
                             std::to_string(2 * (spec.hidden.size() + 1)) +
                             " parameter segments, got " + std::to_string(params.size()));
      ad::Tensor x = inputs;
      for (size_t l = 0; l + 1 < params.size() / 2; ++l) {
        x = ad::matmul(g, x, params.segments[2 * l]);
        x = ad::add(g, x, ad::bcast_row_vec(g, params.segments[2 * l + 1], x.dim(0)));
        x = ad::tanh(g, x);
      }
      x = ad::matmul(g, x, params.segments[params.size() - 2]);
      return ad::add(g, x, ad::bcast_row_vec(g, params.segments[params.size() - 1], x.dim(0)));
    }
  }
  throw ad::ShapeError("forward: unsupported model kind");
}

ad::Tensor loss(ad::Graph& g, LossKind kind, const ad::Tensor& outputs,
                const ad::Tensor& targets) {
  switch (kind) {
    case LossKind::cross_entropy: {
      if (outputs.ndim() != 2)
        throw ad::ShapeError("loss: cross-entropy expects 2-d logits, got " +
                             ad::shape_str(outputs.shape()));
      if (targets.numel() != outputs.dim(0))
        throw ad::ShapeError("loss: batch sizes differ, logits " + ad::shape_str(outputs.shape()) +
                             " vs targets " + ad::shape_str(targets.shape()));
      auto idx = ce_targets(targets, outputs.dim(1));
      ad::Tensor lse = ad::logsumexp_rows(g, outputs);
      ad::Tensor picked = ad::select_index(g, outputs, idx);
      return ad::mean_all(g, ad::sub(g, lse, picked));
    }
    case LossKind::mse: {
      if (!outputs.same_shape(targets))
        throw ad::ShapeError("loss: mse shape mismatch " + ad::shape_str(outputs.shape()) +
                             " vs " + ad::shape_str(targets.shape()));
      ad::Tensor d = ad::sub(g, outputs, targets);
      return ad::mean_all(g, ad::mul(g, d, d));
    }
  }
  throw ad::ShapeError("loss: unsupported loss kind");
}

}  // namespace alphamaml
