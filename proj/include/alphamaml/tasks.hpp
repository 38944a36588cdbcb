#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "alphamaml/models.hpp"
#include "alphamaml/rng.hpp"
#include "alphamaml/tensor.hpp"

namespace alphamaml {

struct OmniglotStore;

/// One task: disjoint support (train) and query (test) sets over the
/// same classes. Classification targets are class ids 0..N-1 stored as
/// doubles in a [B] tensor; regression targets are [B,1] values.
struct Episode {
  ad::Tensor train_inputs;
  ad::Tensor train_targets;
  ad::Tensor test_inputs;
  ad::Tensor test_targets;
  long task_id = 0;
};

enum class TaskKind { omniglot, sinusoid, blobs };
enum class Split { meta_train, meta_test };

struct TaskDistribution {
  TaskKind kind = TaskKind::sinusoid;
  long n_way = 5;
  long k_shot = 1;
  long q_query = 15;
  Split split = Split::meta_train;
  uint64_t rng_seed = 0;
  std::shared_ptr<const OmniglotStore> store;  // omniglot only
};

/// Draws one episode. Classes are drawn without replacement, and within
/// a class the K support and Q query instances never overlap.
Episode sample_episode(const TaskDistribution& dist, Rng& rng, long task_id = 0);

/// `meta_batch_size` independent episodes in a deterministic order.
std::vector<Episode> make_batch(const TaskDistribution& dist, long meta_batch_size, Rng& rng,
                                long first_task_id = 0);

/// Model and loss implied by the task family.
ModelSpec default_model(const TaskDistribution& dist, uint64_t seed);
LossKind task_loss(TaskKind kind);

const char* task_kind_name(TaskKind k);
TaskKind task_kind_from_name(const std::string& name);

}  // namespace alphamaml
