#include "alphamaml/meta.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace alphamaml {

void MetaConfig::validate() const {
  if (!(alpha0 > 0.0) || !(beta0 > 0.0))
    throw std::invalid_argument("MetaConfig: alpha0 and beta0 must be positive");
  if (alpha_hyperlr < 0.0 || beta_hyperlr < 0.0)
    throw std::invalid_argument("MetaConfig: hyper learning rates must be >= 0");
  if (meta_batch_size < 1) throw std::invalid_argument("MetaConfig: meta_batch_size must be >= 1");
  if (n_inner_steps < 1) throw std::invalid_argument("MetaConfig: n_inner_steps must be >= 1");
  if (n_inner_steps_eval < 0)
    throw std::invalid_argument("MetaConfig: n_inner_steps_eval must be >= 0");
}

MetaState MetaState::initial(const ModelSpec& spec, const MetaConfig& cfg) {
  cfg.validate();
  MetaState s;
  s.theta = init_params(spec);
  s.alpha = cfg.alpha0;
  s.beta = cfg.beta0;
  s.iter = 0;
  return s;
}

InnerResult inner_adapt(ad::Graph& g, const ModelSpec& spec, LossKind loss_kind,
                        const ParamVector& theta_leaves, const ad::Tensor& train_inputs,
                        const ad::Tensor& train_targets, double alpha, long n_steps,
                        bool track_higher_order) {
  if (n_steps < 1) throw std::invalid_argument("inner_adapt: n_steps must be >= 1");
  InnerResult result;
  ParamVector current = theta_leaves;
  for (long s = 0; s < n_steps; ++s) {
    ad::Tensor out = forward(g, spec, current, train_inputs);
    ad::Tensor l = loss(g, loss_kind, out, train_targets);
    if (!std::isfinite(l.value()))
      throw DivergenceError("inner_adapt: non-finite support loss at inner step " +
                            std::to_string(s));
    std::vector<ad::Tensor> grads =
        ad::backward(g, l, current.segments, /*create_graph=*/track_higher_order);
    if (s == 0) {
      result.train_loss = l.value();
      result.train_grad = ParamVector(grads).detached();
    }
    current = axpy(g, -alpha, ParamVector(std::move(grads)), current);
  }
  result.theta_prime = std::move(current);
  return result;
}

namespace {

struct TaskResult {
  TaskGrads grads;
  ParamVector meta_contrib;  // d(query loss)/d(theta) for this task
};

TaskResult task_gradient(const ModelSpec& spec, LossKind loss_kind, const ParamVector& theta,
                         const Episode& ep, double alpha, long n_inner_steps, bool first_order) {
  ad::Graph g;
  ParamVector leaves = theta.as_leaves_of(g);
  InnerResult inner = inner_adapt(g, spec, loss_kind, leaves, ep.train_inputs, ep.train_targets,
                                  alpha, n_inner_steps, /*track_higher_order=*/!first_order);
  ad::Tensor out = forward(g, spec, inner.theta_prime, ep.test_inputs);
  ad::Tensor l = loss(g, loss_kind, out, ep.test_targets);
  if (!std::isfinite(l.value()))
    throw DivergenceError("meta_gradient: non-finite query loss for task " +
                          std::to_string(ep.task_id));

  // one sweep serves both watch lists: adjoints at theta give the
  // meta-gradient, adjoints at theta_prime give the query gradient
  std::vector<ad::Tensor> watch = leaves.segments;
  watch.insert(watch.end(), inner.theta_prime.segments.begin(), inner.theta_prime.segments.end());
  std::vector<ad::Tensor> grads = ad::backward(g, l, watch, /*create_graph=*/false);

  TaskResult res;
  res.grads.test_loss = l.value();
  res.grads.train_loss = inner.train_loss;
  res.grads.train_grad = std::move(inner.train_grad);
  res.grads.theta_prime = inner.theta_prime.detached();
  const auto split = grads.begin() + static_cast<long>(leaves.segments.size());
  res.grads.test_grad.segments.assign(split, grads.end());
  grads.erase(split, grads.end());
  res.meta_contrib = ParamVector(std::move(grads)).detached();
  return res;
}

}  // namespace

MetaGradient meta_gradient(const ModelSpec& spec, LossKind loss_kind, const ParamVector& theta,
                           std::span<const Episode> episodes, double alpha, long n_inner_steps,
                           bool first_order, long threads) {
  if (episodes.empty()) throw std::invalid_argument("meta_gradient: empty episode batch");
  const long n_tasks = static_cast<long>(episodes.size());
  long n_threads = threads;
  if (n_threads <= 0)
    n_threads = std::min<long>(n_tasks, std::max(1u, std::thread::hardware_concurrency()));
  n_threads = std::min(n_threads, n_tasks);

  std::vector<TaskResult> results(static_cast<size_t>(n_tasks));
  std::vector<std::exception_ptr> errors(static_cast<size_t>(n_tasks));
  auto work = [&](long t) {
    try {
      results[static_cast<size_t>(t)] = task_gradient(spec, loss_kind, theta, episodes[t], alpha,
                                                      n_inner_steps, first_order);
    } catch (...) {
      errors[static_cast<size_t>(t)] = std::current_exception();
    }
  };
  if (n_threads <= 1) {
    for (long t = 0; t < n_tasks; ++t) work(t);
  } else {
    std::vector<std::thread> pool;
    std::atomic<long> next{0};
    for (long w = 0; w < n_threads; ++w)
      pool.emplace_back([&] {
        for (long t = next.fetch_add(1); t < n_tasks; t = next.fetch_add(1)) work(t);
      });
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  // reduce in task order for bitwise determinism
  MetaGradient mg;
  mg.grad = zeros_like(theta);
  mg.per_task.reserve(static_cast<size_t>(n_tasks));
  for (long t = 0; t < n_tasks; ++t) {
    TaskResult& tr = results[static_cast<size_t>(t)];
    mg.grad = axpy(1.0, tr.meta_contrib, mg.grad);
    mg.meta_loss += tr.grads.test_loss;
    mg.train_loss += tr.grads.train_loss;
    mg.per_task.push_back(std::move(tr.grads));
  }
  mg.train_loss /= static_cast<double>(n_tasks);
  return mg;
}

double alpha_hypergradient(const std::vector<TaskGrads>& per_task) {
  if (per_task.empty()) throw std::invalid_argument("alpha_hypergradient: empty batch");
  double acc = 0.0;
  for (const auto& tg : per_task) acc += dot(tg.test_grad, tg.train_grad);
  return acc;
}

double beta_hypergradient(const ParamVector& meta_grad_current,
                          const ParamVector& prev_meta_grad) {
  return dot(meta_grad_current, prev_meta_grad);
}

namespace {

void check_rates(double alpha, double beta, const MetaConfig& cfg, long iter, double* alpha_io,
                 double* beta_io) {
  if (!std::isfinite(alpha) || !std::isfinite(beta))
    throw DivergenceError("iteration " + std::to_string(iter) +
                          ": learning rate became non-finite (alpha=" + std::to_string(alpha) +
                          ", beta=" + std::to_string(beta) + ")");
  if (cfg.lr_floor) {
    *alpha_io = std::max(alpha, *cfg.lr_floor);
    *beta_io = std::max(beta, *cfg.lr_floor);
    return;
  }
  if (alpha <= 0.0 || beta <= 0.0)
    throw DivergenceError("iteration " + std::to_string(iter) +
                          ": learning rate went nonpositive (alpha=" + std::to_string(alpha) +
                          ", beta=" + std::to_string(beta) + "); set lr_floor to clamp instead");
  *alpha_io = alpha;
  *beta_io = beta;
}

void apply_theta_update(MetaState& state, const MetaGradient& mg, double beta) {
  state.theta = axpy(-beta, mg.grad, state.theta);
  if (!state.theta.all_finite())
    throw DivergenceError("iteration " + std::to_string(state.iter) +
                          ": parameters became non-finite after the meta update");
}

}  // namespace

StepReport maml_step(MetaState& state, const ModelSpec& spec, LossKind loss_kind,
                     std::span<const Episode> batch, const MetaConfig& cfg) {
  cfg.validate();
  MetaGradient mg = meta_gradient(spec, loss_kind, state.theta, batch, state.alpha,
                                  cfg.n_inner_steps, cfg.first_order, cfg.task_threads);
  StepReport report;
  report.train_loss = mg.train_loss;
  report.meta_loss = mg.meta_loss;
  report.alpha_hypergrad = alpha_hypergradient(mg.per_task);
  report.beta_hypergrad =
      state.prev_meta_grad ? beta_hypergradient(mg.grad, *state.prev_meta_grad) : 0.0;
  apply_theta_update(state, mg, state.beta);
  state.prev_meta_grad = mg.grad;
  state.prev_alpha_hypergrad = report.alpha_hypergrad;
  state.iter += 1;
  report.alpha_after = state.alpha;
  report.beta_after = state.beta;
  return report;
}

StepReport alpha_maml_step(MetaState& state, const ModelSpec& spec, LossKind loss_kind,
                           std::span<const Episode> batch, const MetaConfig& cfg) {
  cfg.validate();
  // (1) inner adaptation runs at the pre-update alpha_i
  MetaGradient mg = meta_gradient(spec, loss_kind, state.theta, batch, state.alpha,
                                  cfg.n_inner_steps, cfg.first_order, cfg.task_threads);
  StepReport report;
  report.train_loss = mg.train_loss;
  report.meta_loss = mg.meta_loss;

  // (2) alpha update
  const double alpha_hg_current = alpha_hypergradient(mg.per_task);
  double alpha_hg_used = alpha_hg_current;
  if (cfg.alpha_update_source == AlphaUpdateSource::previous)
    alpha_hg_used = state.iter >= 1 ? state.prev_alpha_hypergrad : 0.0;
  double alpha_new = state.alpha + cfg.alpha_hyperlr * alpha_hg_used;
  report.alpha_hypergrad = alpha_hg_used;

  // (3) beta update needs two past meta-gradients; skipped once at i=0
  double beta_new = state.beta;
  if (state.prev_meta_grad) {
    report.beta_hypergrad = beta_hypergradient(mg.grad, *state.prev_meta_grad);
    beta_new = state.beta + cfg.beta_hyperlr * report.beta_hypergrad;
  }
  check_rates(alpha_new, beta_new, cfg, state.iter, &alpha_new, &beta_new);

  // (4) meta update with the freshly updated beta
  apply_theta_update(state, mg, beta_new);
  state.prev_meta_grad = mg.grad;
  state.prev_alpha_hypergrad = alpha_hg_current;
  state.alpha = alpha_new;
  state.beta = beta_new;
  state.iter += 1;
  report.alpha_after = state.alpha;
  report.beta_after = state.beta;
  return report;
}

EvalResult evaluate(const ParamVector& theta, const ModelSpec& spec, const TaskDistribution& dist,
                    double alpha, long n_episodes, long n_steps, Rng& rng) {
  if (n_episodes < 1) throw std::invalid_argument("evaluate: need >= 1 episode");
  const LossKind loss_kind = task_loss(dist.kind);
  std::vector<double> scores;
  scores.reserve(static_cast<size_t>(n_episodes));
  for (long e = 0; e < n_episodes; ++e) {
    Episode ep = sample_episode(dist, rng, e);
    ad::Graph g;
    ParamVector leaves = theta.as_leaves_of(g);
    ParamVector adapted = leaves;
    if (n_steps > 0)
      adapted = inner_adapt(g, spec, loss_kind, leaves, ep.train_inputs, ep.train_targets, alpha,
                            n_steps, /*track_higher_order=*/false)
                    .theta_prime;
    ad::Tensor out = forward(g, spec, adapted, ep.test_inputs);
    if (loss_kind == LossKind::cross_entropy) {
      const long b = out.dim(0), c = out.dim(1);
      long correct = 0;
      for (long r = 0; r < b; ++r) {
        const double* row = out.data() + r * c;
        long best = 0;
        for (long j = 1; j < c; ++j)
          if (row[j] > row[best]) best = j;
        if (best == static_cast<long>(ep.test_targets[r])) ++correct;
      }
      scores.push_back(static_cast<double>(correct) / static_cast<double>(b));
    } else {
      scores.push_back(loss(g, loss_kind, out, ep.test_targets).value());
    }
  }
  EvalResult res;
  res.n_episodes = n_episodes;
  double sum = 0.0;
  for (double s : scores) sum += s;
  res.mean = sum / static_cast<double>(n_episodes);
  double var = 0.0;
  for (double s : scores) var += (s - res.mean) * (s - res.mean);
  if (n_episodes > 1) var /= static_cast<double>(n_episodes - 1);
  res.ci95 = 1.96 * std::sqrt(var / static_cast<double>(n_episodes));
  return res;
}

}  // namespace alphamaml
