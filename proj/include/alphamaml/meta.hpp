#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "alphamaml/models.hpp"
#include "alphamaml/param_vector.hpp"
#include "alphamaml/tasks.hpp"

namespace alphamaml {

/// A run that produced a non-finite value or a nonpositive learning
/// rate; carries iteration context.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The update at iteration i can source the learning-rate
/// hypergradients either from the current batch's gradients (the
/// algorithmic form) or from the previous iteration's (the single-task
/// derivation's indexing). Both are exposed; `current` is the default.
enum class AlphaUpdateSource { current, previous };

struct MetaConfig {
  double alpha0 = 1e-3;         // initial task-level learning rate
  double beta0 = 1e-3;          // initial meta learning rate
  double alpha_hyperlr = 0.0;   // hyper learning rate for alpha
  double beta_hyperlr = 0.0;    // hyper learning rate for beta
  long meta_batch_size = 8;
  long n_inner_steps = 1;
  long n_inner_steps_eval = 3;
  bool first_order = false;
  std::optional<double> lr_floor;  // lower clamp for alpha and beta when set
  AlphaUpdateSource alpha_update_source = AlphaUpdateSource::current;
  long task_threads = 0;  // parallel per-task adaptation; 0 = auto, 1 = serial

  void validate() const;
};

/// Everything carried across outer iterations: parameters, both scalar
/// learning rates, the previous iteration's meta-gradient, and the
/// iteration counter. The previous meta-gradient is the only gradient
/// state retained between iterations.
struct MetaState {
  ParamVector theta;
  double alpha = 0.0;
  double beta = 0.0;
  std::optional<ParamVector> prev_meta_grad;
  long iter = 0;
  double prev_alpha_hypergrad = 0.0;  // used only under AlphaUpdateSource::previous

  static MetaState initial(const ModelSpec& spec, const MetaConfig& cfg);
};

struct StepReport {
  double train_loss = 0.0;   // mean support loss across the batch, pre-adaptation
  double meta_loss = 0.0;    // sum of query losses at adapted parameters, pre-update
  double alpha_after = 0.0;
  double beta_after = 0.0;
  double alpha_hypergrad = 0.0;  // dot-product sum feeding the alpha update
  double beta_hypergrad = 0.0;   // dot-product sum feeding the beta update
};

struct InnerResult {
  ParamVector theta_prime;  // graph-resident when tracked
  ParamVector train_grad;   // first step's support gradient, detached
  double train_loss = 0.0;  // support loss before adaptation
};

/// n_steps of task-level SGD at rate `alpha` on the support set. With
/// `track_higher_order` the updates are graph-recorded, so theta_prime
/// stays differentiable w.r.t. theta; otherwise the gradients enter the
/// update as constants (first-order treatment).
InnerResult inner_adapt(ad::Graph& g, const ModelSpec& spec, LossKind loss_kind,
                        const ParamVector& theta_leaves, const ad::Tensor& train_inputs,
                        const ad::Tensor& train_targets, double alpha, long n_steps,
                        bool track_higher_order);

struct TaskGrads {
  ParamVector theta_prime;  // adapted parameters, detached values
  ParamVector test_grad;    // query-set gradient at theta_prime
  ParamVector train_grad;   // first-step support gradient at theta
  double test_loss = 0.0;
  double train_loss = 0.0;
};

struct MetaGradient {
  ParamVector grad;          // d/dtheta of the summed query losses
  double meta_loss = 0.0;    // sum over tasks
  double train_loss = 0.0;   // mean over tasks, pre-adaptation
  std::vector<TaskGrads> per_task;
};

/// The gradient of the summed query losses w.r.t. theta, differentiating
/// through the inner adaptation unless `first_order`, in which case the
/// query gradient at theta_prime is attributed to theta directly.
/// Per-task gradients are reduced in task order regardless of threading.
MetaGradient meta_gradient(const ModelSpec& spec, LossKind loss_kind, const ParamVector& theta,
                           std::span<const Episode> episodes, double alpha, long n_inner_steps,
                           bool first_order, long threads = 1);

/// Sum over tasks of dot(query gradient at theta_prime, support gradient
/// at theta). Adding alpha_hyperlr times this value to alpha is descent
/// on the meta objective in alpha.
double alpha_hypergradient(const std::vector<TaskGrads>& per_task);

/// dot(current meta-gradient, previous iteration's meta-gradient); added
/// to beta scaled by beta_hyperlr, so beta grows while successive
/// meta-gradients align and shrinks when they oppose.
double beta_hypergradient(const ParamVector& meta_grad_current, const ParamVector& prev_meta_grad);

/// One outer iteration of plain MAML: theta <- theta - beta * meta_grad.
/// Learning rates never change; hyper learning rates are ignored.
StepReport maml_step(MetaState& state, const ModelSpec& spec, LossKind loss_kind,
                     std::span<const Episode> batch, const MetaConfig& cfg);

/// One outer iteration with online learning-rate adaptation. Order:
/// inner adaptation at the pre-update alpha, the alpha update, the beta
/// update (skipped at iteration 0, which has no previous meta-gradient),
/// then theta <- theta - beta_new * meta_grad. With both hyper learning
/// rates zero this reduces to maml_step bit for bit.
StepReport alpha_maml_step(MetaState& state, const ModelSpec& spec, LossKind loss_kind,
                           std::span<const Episode> batch, const MetaConfig& cfg);

struct EvalResult {
  double mean = 0.0;  // accuracy for classification, mse for regression
  double ci95 = 0.0;  // normal-approximation half width
  long n_episodes = 0;
};

/// Adapts from theta on each episode's support set (n_steps at rate
/// alpha, 0 = score theta directly) and scores the query set.
EvalResult evaluate(const ParamVector& theta, const ModelSpec& spec, const TaskDistribution& dist,
                    double alpha, long n_episodes, long n_steps, Rng& rng);

}  // namespace alphamaml
