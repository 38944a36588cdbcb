// Command-line front end: train / grid / eval / plot / ingest.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "alphamaml/checkpoint.hpp"
#include "alphamaml/harness.hpp"
#include "alphamaml/omniglot.hpp"

namespace fs = std::filesystem;
using namespace alphamaml;

namespace {

struct CommonFlags {
  std::string config_file;
  std::string alg = "maml";
  std::string task = "omniglot";
  std::string alpha_update_source = "current";
  double alpha0 = 1e-3, beta0 = 1e-3, alpha_hyperlr = 1e-4, beta_hyperlr = 1e-4;
  double threshold = 0.0, lr_floor = 0.0;
  long n_way = 5, k_shot = 1, q_query = 15, meta_batch = 8, inner_steps = 1;
  long max_iters = 500, val_every = 10, task_threads = 0;
  bool first_order = false;
  uint64_t seed = 0;
  std::string data_root, cache, out = "out";
};

void add_common_options(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_file, "JSON config file; explicit flags override it");
  cmd->add_option("--alg", f.alg, "algorithm")->check(CLI::IsMember({"maml", "alpha-maml"}));
  cmd->add_option("--task", f.task, "task family")
      ->check(CLI::IsMember({"omniglot", "sinusoid", "blobs"}));
  cmd->add_option("--alpha0", f.alpha0, "initial task-level learning rate");
  cmd->add_option("--beta0", f.beta0, "initial meta learning rate");
  cmd->add_option("--alpha-hyperlr", f.alpha_hyperlr, "hyper learning rate for alpha");
  cmd->add_option("--beta-hyperlr", f.beta_hyperlr, "hyper learning rate for beta");
  cmd->add_option("--n-way", f.n_way, "classes per episode");
  cmd->add_option("--k-shot", f.k_shot, "support examples per class");
  cmd->add_option("--q-query", f.q_query, "query examples per class");
  cmd->add_option("--meta-batch", f.meta_batch, "tasks per outer iteration");
  cmd->add_option("--inner-steps", f.inner_steps, "task-level adaptation steps");
  cmd->add_flag("--first-order", f.first_order, "drop second-order terms");
  cmd->add_option("--max-iters", f.max_iters, "outer iteration cap");
  cmd->add_option("--threshold", f.threshold,
                  "smoothed train-loss threshold (default: ln(n_way) - 0.05)");
  cmd->add_option("--seed", f.seed, "rng seed");
  cmd->add_option("--val-every", f.val_every, "iterations between validation probes (0 = off)");
  cmd->add_option("--lr-floor", f.lr_floor, "clamp alpha/beta at this floor instead of aborting");
  cmd->add_option("--alpha-update-source", f.alpha_update_source,
                  "gradients feeding the alpha update")
      ->check(CLI::IsMember({"current", "previous"}));
  cmd->add_option("--task-threads", f.task_threads, "per-task parallelism (0 = auto)");
  cmd->add_option("--data-root", f.data_root, "omniglot PNG tree root");
  cmd->add_option("--cache", f.cache, "omniglot binary cache path");
  cmd->add_option("--out", f.out, "output directory");
}

RunConfig build_config(const CLI::App* cmd, const CommonFlags& f) {
  RunConfig cfg;
  if (!f.config_file.empty()) {
    std::ifstream is(f.config_file);
    if (!is) throw std::runtime_error("cannot open config file: " + f.config_file);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    cfg = RunConfig::from_json(text);
  }
  auto passed = [&](const char* name) { return cmd->count(name) > 0; };
  const bool fresh = f.config_file.empty();
  if (fresh || passed("--alg")) cfg.algorithm = algorithm_from_name(f.alg);
  if (fresh || passed("--task")) cfg.task = task_kind_from_name(f.task);
  if (fresh || passed("--alpha0")) cfg.meta.alpha0 = f.alpha0;
  if (fresh || passed("--beta0")) cfg.meta.beta0 = f.beta0;
  if (fresh || passed("--alpha-hyperlr")) cfg.meta.alpha_hyperlr = f.alpha_hyperlr;
  if (fresh || passed("--beta-hyperlr")) cfg.meta.beta_hyperlr = f.beta_hyperlr;
  if (fresh || passed("--n-way")) cfg.n_way = f.n_way;
  if (fresh || passed("--k-shot")) cfg.k_shot = f.k_shot;
  if (fresh || passed("--q-query")) cfg.q_query = f.q_query;
  if (fresh || passed("--meta-batch")) cfg.meta.meta_batch_size = f.meta_batch;
  if (fresh || passed("--inner-steps")) cfg.meta.n_inner_steps = f.inner_steps;
  if (passed("--first-order")) cfg.meta.first_order = true;
  if (fresh || passed("--max-iters")) cfg.max_iters = f.max_iters;
  if (passed("--threshold")) cfg.loss_threshold = f.threshold;
  if (fresh || passed("--seed")) cfg.seed = f.seed;
  if (fresh || passed("--val-every")) cfg.val_every = f.val_every;
  if (passed("--lr-floor")) cfg.meta.lr_floor = f.lr_floor;
  if (fresh || passed("--alpha-update-source"))
    cfg.meta.alpha_update_source = f.alpha_update_source == "previous"
                                       ? AlphaUpdateSource::previous
                                       : AlphaUpdateSource::current;
  if (fresh || passed("--task-threads")) cfg.meta.task_threads = f.task_threads;
  if (fresh || passed("--data-root")) cfg.data_root = f.data_root;
  if (fresh || passed("--cache")) cfg.cache_path = f.cache;
  if (fresh || passed("--out")) cfg.output_dir = f.out;
  return cfg;
}

int cmd_train(const CLI::App* cmd, const CommonFlags& f) {
  RunConfig cfg = build_config(cmd, f);
  RunTrace trace = run_and_save(cfg);
  const auto hit = iters_to_threshold(trace.rows, cfg.resolved_threshold(), cfg.meta.meta_batch_size);
  std::cout << "wrote " << trace.rows.size() << " iterations to " << cfg.output_dir
            << "/trace.csv (config " << trace.hash.substr(0, 12) << ")\n";
  if (hit)
    std::cout << "reached smoothed train loss " << cfg.resolved_threshold() << " at iteration "
              << *hit << "\n";
  else
    std::cout << "did not reach smoothed train loss " << cfg.resolved_threshold() << " within "
              << trace.rows.size() << " iterations\n";
  if (trace.diverged) {
    std::cerr << "run diverged: " << trace.divergence_msg << "\n";
    return 2;
  }
  return 0;
}

int cmd_grid(const CLI::App* cmd, const CommonFlags& f, const GridSpec& spec, int workers) {
  RunConfig cfg = build_config(cmd, f);
  GridSpec gs = spec;
  if (gs.alpha0.empty()) gs.alpha0 = {cfg.meta.alpha0};
  if (gs.beta0.empty()) gs.beta0 = {cfg.meta.beta0};
  GridResult result = grid(cfg, gs, workers);
  fs::create_directories(cfg.output_dir);
  const std::string csv = (fs::path(cfg.output_dir) / "grid.csv").string();
  write_grid_csv(result, csv);
  plot_heatmap(csv, (fs::path(cfg.output_dir) / "grid.svg").string());
  long converged = 0;
  for (const auto& c : result.cells)
    if (c.iters_to_threshold != kNotConverged) ++converged;
  std::cout << "grid of " << result.cells.size() << " cells written to " << csv << " ("
            << converged << " converged)\n";
  return 0;
}

int cmd_eval(const CLI::App* cmd, const CommonFlags& f, const std::string& checkpoint,
             long n_episodes, long n_steps) {
  RunConfig cfg = build_config(cmd, f);
  TaskDistribution dist;
  dist.kind = cfg.task;
  dist.n_way = cfg.n_way;
  dist.k_shot = cfg.k_shot;
  dist.q_query = cfg.q_query;
  dist.split = Split::meta_test;
  dist.rng_seed = cfg.seed;
  dist.store = load_store_for(cfg);
  const std::string report =
      cfg.output_dir.empty() ? "" : (fs::path(cfg.output_dir) / "eval.json").string();
  if (!cfg.output_dir.empty()) fs::create_directories(cfg.output_dir);
  EvalResult res = eval_checkpoint(checkpoint, dist, n_episodes, n_steps, report);
  const char* metric = task_loss(cfg.task) == LossKind::cross_entropy ? "accuracy" : "mse";
  std::cout << metric << " = " << res.mean << " +/- " << res.ci95 << " over " << res.n_episodes
            << " episodes\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"meta-learning trainer with online learning-rate adaptation"};
  app.require_subcommand(1);

  CommonFlags train_flags;
  auto* train = app.add_subcommand("train", "run one training configuration");
  add_common_options(train, train_flags);

  CommonFlags grid_flags;
  GridSpec grid_spec;
  int workers = 1;
  auto* grid_cmd = app.add_subcommand("grid", "grid search over learning rates");
  add_common_options(grid_cmd, grid_flags);
  grid_cmd->add_option("--alpha0-grid", grid_spec.alpha0, "alpha0 axis values")->delimiter(',');
  grid_cmd->add_option("--beta0-grid", grid_spec.beta0, "beta0 axis values")->delimiter(',');
  grid_cmd->add_option("--alpha-hyperlr-grid", grid_spec.alpha_hyperlr,
                       "alpha hyper-lr axis values (alpha-maml)")
      ->delimiter(',');
  grid_cmd->add_option("--beta-hyperlr-grid", grid_spec.beta_hyperlr,
                       "beta hyper-lr axis values (alpha-maml)")
      ->delimiter(',');
  grid_cmd->add_option("--workers", workers, "parallel grid cells");

  CommonFlags eval_flags;
  std::string checkpoint;
  long n_episodes = 100, eval_steps = -1;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on meta-test episodes");
  add_common_options(eval_cmd, eval_flags);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--n-episodes", n_episodes, "episodes to evaluate");
  eval_cmd->add_option("--adapt-steps", eval_steps,
                       "adaptation steps (default: config's eval steps)");

  std::string plot_kind = "traces";
  std::vector<std::string> plot_inputs;
  std::string plot_out = "plot.svg";
  auto* plot_cmd = app.add_subcommand("plot", "render traces or a grid heatmap to SVG");
  plot_cmd->add_option("--kind", plot_kind, "plot kind")
      ->check(CLI::IsMember({"traces", "heatmap"}));
  plot_cmd->add_option("inputs", plot_inputs, "input CSV file(s)")->required();
  plot_cmd->add_option("--out", plot_out, "output SVG path");

  std::string ingest_root, ingest_cache = "omniglot.cache";
  long train_chars = kOmniglotDefaultTrainChars;
  bool no_rotations = false;
  auto* ingest_cmd = app.add_subcommand("ingest", "decode an Omniglot PNG tree into a cache");
  ingest_cmd->add_option("--data-root", ingest_root, "PNG tree root")->required();
  ingest_cmd->add_option("--cache", ingest_cache, "cache file to write");
  ingest_cmd->add_option("--train-chars", train_chars,
                         "characters in the meta-train split (1200 for the full dataset)");
  ingest_cmd->add_flag("--no-rotations", no_rotations, "disable 90-degree rotation classes");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(train, train_flags);
    if (grid_cmd->parsed()) return cmd_grid(grid_cmd, grid_flags, grid_spec, workers);
    if (eval_cmd->parsed()) {
      long steps = eval_steps;
      if (steps < 0) {
        Checkpoint ckpt = load_checkpoint(checkpoint);
        steps = RunConfig::from_json(ckpt.config_json).meta.n_inner_steps_eval;
      }
      return cmd_eval(eval_cmd, eval_flags, checkpoint, n_episodes, steps);
    }
    if (plot_cmd->parsed()) {
      if (plot_kind == "traces")
        plot_traces(plot_inputs, plot_out);
      else
        plot_heatmap(plot_inputs.at(0), plot_out);
      std::cout << "wrote " << plot_out << "\n";
      return 0;
    }
    if (ingest_cmd->parsed()) {
      OmniglotStore store = ingest_omniglot(ingest_root, train_chars, no_rotations ? 1 : 4);
      save_omniglot_cache(store, ingest_cache);
      std::cout << "ingested " << store.char_count() << " characters (" << store.train_count
                << " meta-train / " << store.test_count() << " meta-test, " << store.rotations
                << " rotation classes each) into " << ingest_cache << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
