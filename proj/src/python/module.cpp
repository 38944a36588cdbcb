// Python bindings over the training, evaluation and data operations.
// Configs cross the boundary as dicts mirroring the JSON config schema.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "alphamaml/checkpoint.hpp"
#include "alphamaml/glyphs.hpp"
#include "alphamaml/harness.hpp"
#include "alphamaml/omniglot.hpp"

namespace py = pybind11;
using json = nlohmann::ordered_json;
using namespace alphamaml;

namespace {

RunConfig config_from_dict(const py::dict& d) {
  // route through the canonical JSON codec: defaults first, overrides on top
  json merged = json::parse(RunConfig{}.to_json());
  json given = json::parse(static_cast<std::string>(
      py::str(py::module_::import("json").attr("dumps")(d))));
  for (auto& [key, value] : given.items()) {
    if (!merged.contains(key)) throw std::invalid_argument("unknown config key: " + key);
    merged[key] = value;
  }
  return RunConfig::from_json(merged.dump());
}

py::array_t<double> tensor_to_array(const ad::Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  if (shape.empty()) shape.push_back(1);
  py::array_t<double> arr(shape);
  std::copy(t.data(), t.data() + t.numel(), arr.mutable_data());
  return arr;
}

py::dict trace_to_dict(const RunTrace& trace) {
  const std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(trace.rows.size())};
  py::array_t<long> iters(shape);
  py::array_t<double> alpha(shape), beta(shape), train_loss(shape), meta_loss(shape),
      val_loss(shape);
  for (size_t i = 0; i < trace.rows.size(); ++i) {
    const TraceRow& r = trace.rows[i];
    iters.mutable_data()[i] = r.iter;
    alpha.mutable_data()[i] = r.alpha;
    beta.mutable_data()[i] = r.beta;
    train_loss.mutable_data()[i] = r.train_loss;
    meta_loss.mutable_data()[i] = r.meta_loss;
    val_loss.mutable_data()[i] = r.val_loss ? *r.val_loss : std::nan("");
  }
  py::dict out;
  out["iter"] = iters;
  out["alpha"] = alpha;
  out["beta"] = beta;
  out["train_loss"] = train_loss;
  out["meta_loss"] = meta_loss;
  out["val_loss"] = val_loss;
  out["diverged"] = trace.diverged;
  out["divergence_msg"] = trace.divergence_msg;
  out["config_hash"] = trace.hash;
  out["wall_seconds"] = trace.wall_seconds;
  return out;
}

TaskDistribution dist_from_config(const RunConfig& cfg, Split split) {
  TaskDistribution dist;
  dist.kind = cfg.task;
  dist.n_way = cfg.n_way;
  dist.k_shot = cfg.k_shot;
  dist.q_query = cfg.q_query;
  dist.split = split;
  dist.rng_seed = cfg.seed;
  dist.store = load_store_for(cfg);
  return dist;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "meta-learning trainer with online learning-rate adaptation";

  m.def(
      "train",
      [](const py::dict& config, bool save) {
        RunConfig cfg = config_from_dict(config);
        RunTrace trace = save ? run_and_save(cfg) : run(cfg);
        return trace_to_dict(trace);
      },
      py::arg("config"), py::arg("save") = false,
      "Run one training configuration; returns the trace as arrays.");

  m.def(
      "grid",
      [](const py::dict& config, const py::dict& axes, int workers) {
        RunConfig cfg = config_from_dict(config);
        GridSpec spec;
        if (axes.contains("alpha0")) spec.alpha0 = axes["alpha0"].cast<std::vector<double>>();
        if (axes.contains("beta0")) spec.beta0 = axes["beta0"].cast<std::vector<double>>();
        if (axes.contains("alpha_hyperlr"))
          spec.alpha_hyperlr = axes["alpha_hyperlr"].cast<std::vector<double>>();
        if (axes.contains("beta_hyperlr"))
          spec.beta_hyperlr = axes["beta_hyperlr"].cast<std::vector<double>>();
        if (spec.alpha0.empty()) spec.alpha0 = {cfg.meta.alpha0};
        if (spec.beta0.empty()) spec.beta0 = {cfg.meta.beta0};
        GridResult result = grid(cfg, spec, workers);
        py::list cells;
        for (const auto& c : result.cells) {
          py::dict d;
          d["alpha0"] = c.alpha0;
          d["beta0"] = c.beta0;
          d["alpha_hyperlr"] = c.alpha_hyperlr;
          d["beta_hyperlr"] = c.beta_hyperlr;
          if (c.iters_to_threshold == kNotConverged)
            d["iters_to_threshold"] = py::none();
          else
            d["iters_to_threshold"] = c.iters_to_threshold;
          d["final_loss"] = c.final_loss;
          d["note"] = c.note;
          cells.append(d);
        }
        return cells;
      },
      py::arg("config"), py::arg("axes"), py::arg("workers") = 1,
      "Grid search over learning rates; returns one dict per cell.");

  m.def(
      "evaluate",
      [](const std::string& checkpoint, const py::dict& config, long n_episodes, long n_steps) {
        RunConfig cfg = config_from_dict(config);
        TaskDistribution dist = dist_from_config(cfg, Split::meta_test);
        EvalResult res = eval_checkpoint(checkpoint, dist, n_episodes, n_steps, "");
        py::dict out;
        out["mean"] = res.mean;
        out["ci95"] = res.ci95;
        out["n_episodes"] = res.n_episodes;
        out["metric"] = task_loss(cfg.task) == LossKind::cross_entropy ? "accuracy" : "mse";
        return out;
      },
      py::arg("checkpoint"), py::arg("config"), py::arg("n_episodes") = 100,
      py::arg("n_steps") = 3, "Evaluate a checkpoint on meta-test episodes.");

  m.def(
      "sample_episode",
      [](const py::dict& config, uint64_t seed) {
        RunConfig cfg = config_from_dict(config);
        TaskDistribution dist = dist_from_config(cfg, Split::meta_train);
        Rng rng(seed);
        Episode ep = sample_episode(dist, rng);
        py::dict out;
        out["train_inputs"] = tensor_to_array(ep.train_inputs);
        out["train_targets"] = tensor_to_array(ep.train_targets);
        out["test_inputs"] = tensor_to_array(ep.test_inputs);
        out["test_targets"] = tensor_to_array(ep.test_targets);
        return out;
      },
      py::arg("config"), py::arg("seed") = 0, "Draw one episode as numpy arrays.");

  m.def(
      "ingest",
      [](const std::string& data_root, const std::string& cache, long train_chars,
         bool rotations) {
        OmniglotStore store = ingest_omniglot(data_root, train_chars, rotations ? 4 : 1);
        save_omniglot_cache(store, cache);
        py::dict out;
        out["characters"] = store.char_count();
        out["meta_train"] = store.train_count;
        out["meta_test"] = store.test_count();
        out["rotations"] = store.rotations;
        return out;
      },
      py::arg("data_root"), py::arg("cache"), py::arg("train_chars") = kOmniglotDefaultTrainChars,
      py::arg("rotations") = true, "Decode an Omniglot PNG tree into a binary cache.");

  m.def("write_glyph_dataset", &write_glyph_dataset, py::arg("root"), py::arg("n_alphabets"),
        py::arg("chars_per_alphabet"), py::arg("instances") = 20, py::arg("canvas") = 56,
        py::arg("seed") = 0, "Write a procedural glyph dataset in the Omniglot layout.");

  m.def(
      "default_config", [] { return py::module_::import("json").attr("loads")(RunConfig{}.to_json()); },
      "The default run configuration as a dict.");

  m.attr("__version__") = "0.1.0";
}
