#include "alphamaml/tasks.hpp"

#include <cmath>
#include <stdexcept>

#include "alphamaml/omniglot.hpp"

namespace alphamaml {

namespace {

constexpr double kPi = 3.14159265358979323846;

Episode sample_sinusoid(const TaskDistribution& dist, Rng& rng, long task_id) {
  const double amplitude = rng.uniform(0.1, 5.0);
  const double phase = rng.uniform(0.0, kPi);
  auto draw = [&](long count) {
    ad::Tensor x({count, 1});
    ad::Tensor y({count, 1});
    for (long i = 0; i < count; ++i) {
      double xi = rng.uniform(-5.0, 5.0);
      x.data()[i] = xi;
      y.data()[i] = amplitude * std::sin(xi + phase);
    }
    return std::pair{x, y};
  };
  Episode ep;
  ep.task_id = task_id;
  auto [tx, ty] = draw(dist.k_shot);
  auto [qx, qy] = draw(dist.q_query);
  ep.train_inputs = tx;
  ep.train_targets = ty;
  ep.test_inputs = qx;
  ep.test_targets = qy;
  return ep;
}

Episode sample_blobs(const TaskDistribution& dist, Rng& rng, long task_id) {
  const long n = dist.n_way;
  std::vector<double> cx(static_cast<size_t>(n)), cy(static_cast<size_t>(n));
  for (long c = 0; c < n; ++c) {
    cx[static_cast<size_t>(c)] = rng.uniform(-5.0, 5.0);
    cy[static_cast<size_t>(c)] = rng.uniform(-5.0, 5.0);
  }
  auto draw = [&](long per_class) {
    ad::Tensor x({n * per_class, 2});
    ad::Tensor y({n * per_class});
    long row = 0;
    for (long c = 0; c < n; ++c) {
      for (long k = 0; k < per_class; ++k, ++row) {
        x.data()[2 * row] = cx[static_cast<size_t>(c)] + rng.normal();
        x.data()[2 * row + 1] = cy[static_cast<size_t>(c)] + rng.normal();
        y.data()[row] = static_cast<double>(c);
      }
    }
    return std::pair{x, y};
  };
  Episode ep;
  ep.task_id = task_id;
  auto [tx, ty] = draw(dist.k_shot);
  auto [qx, qy] = draw(dist.q_query);
  ep.train_inputs = tx;
  ep.train_targets = ty;
  ep.test_inputs = qx;
  ep.test_targets = qy;
  return ep;
}

Episode sample_omniglot(const TaskDistribution& dist, Rng& rng, long task_id) {
  if (!dist.store) throw std::runtime_error("sample_episode: omniglot store not loaded");
  const OmniglotStore& store = *dist.store;
  const long n_classes =
      dist.split == Split::meta_train ? store.train_classes() : store.test_classes();
  const long base_char = dist.split == Split::meta_train ? 0 : store.train_count;
  if (dist.n_way > n_classes)
    throw std::runtime_error("sample_episode: n_way " + std::to_string(dist.n_way) +
                             " exceeds " + std::to_string(n_classes) + " classes in split");
  if (dist.k_shot + dist.q_query > kOmniglotInstances)
    throw std::runtime_error("sample_episode: K+Q = " +
                             std::to_string(dist.k_shot + dist.q_query) + " exceeds " +
                             std::to_string(kOmniglotInstances) + " instances per class");

  auto classes = rng.sample_without_replacement(n_classes, dist.n_way);
  const long img = kOmniglotSide * kOmniglotSide;
  ad::Tensor tx({dist.n_way * dist.k_shot, 1, kOmniglotSide, kOmniglotSide});
  ad::Tensor ty({dist.n_way * dist.k_shot});
  ad::Tensor qx({dist.n_way * dist.q_query, 1, kOmniglotSide, kOmniglotSide});
  ad::Tensor qy({dist.n_way * dist.q_query});
  long trow = 0, qrow = 0;
  for (long label = 0; label < dist.n_way; ++label) {
    const long cls = classes[static_cast<size_t>(label)];
    const long char_index = base_char + cls / store.rotations;
    const long rotation = cls % store.rotations;
    auto instances = rng.sample_without_replacement(kOmniglotInstances, dist.k_shot + dist.q_query);
    for (long k = 0; k < dist.k_shot; ++k, ++trow) {
      ad::Tensor im = omniglot_image(store, char_index, instances[static_cast<size_t>(k)], rotation);
      std::copy(im.data(), im.data() + img, tx.data() + trow * img);
      ty.data()[trow] = static_cast<double>(label);
    }
    for (long q = 0; q < dist.q_query; ++q, ++qrow) {
      ad::Tensor im = omniglot_image(store, char_index,
                                     instances[static_cast<size_t>(dist.k_shot + q)], rotation);
      std::copy(im.data(), im.data() + img, qx.data() + qrow * img);
      qy.data()[qrow] = static_cast<double>(label);
    }
  }
  Episode ep;
  ep.task_id = task_id;
  ep.train_inputs = tx;
  ep.train_targets = ty;
  ep.test_inputs = qx;
  ep.test_targets = qy;
  return ep;
}

}  // namespace

Episode sample_episode(const TaskDistribution& dist, Rng& rng, long task_id) {
  if (dist.n_way < 1 || dist.k_shot < 1 || dist.q_query < 1)
    throw std::runtime_error("sample_episode: n_way, k_shot and q_query must be positive");
  switch (dist.kind) {
    case TaskKind::sinusoid: return sample_sinusoid(dist, rng, task_id);
    case TaskKind::blobs: return sample_blobs(dist, rng, task_id);
    case TaskKind::omniglot: return sample_omniglot(dist, rng, task_id);
  }
  throw std::runtime_error("sample_episode: unknown task kind");
}

std::vector<Episode> make_batch(const TaskDistribution& dist, long meta_batch_size, Rng& rng,
                                long first_task_id) {
  if (meta_batch_size < 1) throw std::runtime_error("make_batch: meta_batch_size must be >= 1");
  std::vector<Episode> out;
  out.reserve(static_cast<size_t>(meta_batch_size));
  for (long t = 0; t < meta_batch_size; ++t)
    out.push_back(sample_episode(dist, rng, first_task_id + t));
  return out;
}

ModelSpec default_model(const TaskDistribution& dist, uint64_t seed) {
  ModelSpec spec;
  spec.seed = seed;
  switch (dist.kind) {
    case TaskKind::omniglot:
      spec.kind = ModelKind::convnet4;
      spec.n_outputs = dist.n_way;
      break;
    case TaskKind::sinusoid:
      spec.kind = ModelKind::mlp;
      spec.hidden = {40, 40};
      spec.input_dim = 1;
      spec.n_outputs = 1;
      break;
    case TaskKind::blobs:
      spec.kind = ModelKind::mlp;
      spec.hidden = {40, 40};
      spec.input_dim = 2;
      spec.n_outputs = dist.n_way;
      break;
  }
  return spec;
}

LossKind task_loss(TaskKind kind) {
  return kind == TaskKind::sinusoid ? LossKind::mse : LossKind::cross_entropy;
}

const char* task_kind_name(TaskKind k) {
  switch (k) {
    case TaskKind::omniglot: return "omniglot";
    case TaskKind::sinusoid: return "sinusoid";
    case TaskKind::blobs: return "blobs";
  }
  return "?";
}

TaskKind task_kind_from_name(const std::string& name) {
  if (name == "omniglot") return TaskKind::omniglot;
  if (name == "sinusoid") return TaskKind::sinusoid;
  if (name == "blobs") return TaskKind::blobs;
  throw std::runtime_error("unknown task kind: " + name);
}

}  // namespace alphamaml
