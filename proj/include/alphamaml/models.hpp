#pragma once

#include <cstdint>
#include <vector>

#include "alphamaml/param_vector.hpp"

namespace alphamaml {

enum class ModelKind { convnet4, mlp };
enum class LossKind { cross_entropy, mse };

/// Model architecture description. `init` is a pure function of the
/// spec: the same seed always yields the same parameters.
struct ModelSpec {
  ModelKind kind = ModelKind::mlp;
  long n_outputs = 1;
  std::vector<long> hidden;  // mlp only
  long input_dim = 1;        // mlp only; convnet4 takes [B,1,28,28]
  uint64_t seed = 0;
};

/// Truncated-normal (std 0.02) weights, zero biases, unit batchnorm
/// scales, zero shifts.
ParamVector init_params(const ModelSpec& spec);

/// Pure function of (params, inputs): adapted parameters substitute for
/// the originals without any mutation. Output is graph-recorded logits
/// [B, n_outputs] (convnet4) or predictions (mlp).
ad::Tensor forward(ad::Graph& g, const ModelSpec& spec, const ParamVector& params,
                   const ad::Tensor& inputs);

/// Mean loss over the batch as a graph-recorded scalar. Cross-entropy
/// expects integer class ids in `targets` (shape [B]); mse expects
/// targets shaped like `outputs`.
ad::Tensor loss(ad::Graph& g, LossKind kind, const ad::Tensor& outputs, const ad::Tensor& targets);

const char* model_kind_name(ModelKind k);

}  // namespace alphamaml
