#pragma once

#include <optional>
#include <string>
#include <vector>

#include "alphamaml/meta.hpp"
#include "alphamaml/tasks.hpp"

namespace alphamaml {

enum class Algorithm { maml, alpha_maml };

const char* algorithm_name(Algorithm a);
Algorithm algorithm_from_name(const std::string& name);

/// Full experiment description; serializes to canonical JSON and back
/// without loss, so a trace can always be reproduced from its embedded
/// config and seed.
struct RunConfig {
  Algorithm algorithm = Algorithm::maml;
  MetaConfig meta;

  TaskKind task = TaskKind::omniglot;
  long n_way = 5;
  long k_shot = 1;
  long q_query = 15;

  long max_iters = 500;
  /// Smoothed-train-loss threshold; unset means ln(n_way) - 0.05 for
  /// classification and 0.5 for regression.
  std::optional<double> loss_threshold;
  long val_every = 10;  // <= 0 disables validation probes
  bool stop_at_threshold = false;
  uint64_t seed = 0;

  std::string data_root;
  std::string cache_path;
  std::string output_dir = "out";

  double resolved_threshold() const;
  void validate() const;

  std::string to_json() const;  // canonical (sorted keys, stable formatting)
  static RunConfig from_json(const std::string& text);
};

/// SHA-1 of the canonical JSON, hex-encoded; identifies a config the way
/// a content hash identifies a blob.
std::string config_hash(const RunConfig& cfg);

struct TraceRow {
  long iter = 0;
  double alpha = 0.0;
  double beta = 0.0;
  double train_loss = 0.0;
  double meta_loss = 0.0;
  std::optional<double> val_loss;
};

struct RunTrace {
  std::vector<TraceRow> rows;
  RunConfig cfg;
  std::string hash;
  double wall_seconds = 0.0;
  bool diverged = false;
  std::string divergence_msg;
  MetaState final_state;
};

/// Columns are fixed: iter,alpha,beta,train_loss,meta_loss,val_loss.
/// Doubles are printed round-trip exact, so equal traces mean equal
/// bits.
void write_trace_csv(const RunTrace& trace, const std::string& path);
std::vector<TraceRow> read_trace_csv(const std::string& path);

/// Executes up to max_iters outer iterations, logging each one;
/// validation loss is probed on 20 fixed meta-test episodes every
/// val_every iterations. Divergence stops the run but keeps the partial
/// trace. Writes nothing to disk.
RunTrace run(const RunConfig& cfg);
/// Same, but writes trace.csv, run.json and final.ckpt under the
/// config's output_dir.
RunTrace run_and_save(const RunConfig& cfg);

/// First iteration at which the moving average (window 10) of the
/// meta-training objective — the per-task query loss on training tasks,
/// the series that starts at ln(n_way) and falls as training converges —
/// reaches `threshold`; nullopt = not converged. The pre-adaptation
/// support loss cannot drop below chance (the unadapted model is
/// independent of the episode's label permutation), so convergence is
/// judged on the objective the algorithms actually minimize.
std::optional<long> iters_to_threshold(const std::vector<TraceRow>& rows, double threshold,
                                       long meta_batch_size, int window = 10);

struct GridSpec {
  std::vector<double> alpha0;
  std::vector<double> beta0;
  std::vector<double> alpha_hyperlr;  // ignored for maml
  std::vector<double> beta_hyperlr;   // ignored for maml
};

constexpr long kNotConverged = -1;

struct GridCell {
  double alpha0 = 0.0;
  double beta0 = 0.0;
  double alpha_hyperlr = 0.0;
  double beta_hyperlr = 0.0;
  long iters_to_threshold = kNotConverged;
  double final_loss = 0.0;
  std::string note;  // error message when the cell crashed
};

struct GridResult {
  std::vector<GridCell> cells;
  GridSpec spec;
  RunConfig base;
};

/// Runs every cell of the cartesian grid (hyper-lr axes collapse to the
/// base values for maml), each with the base seed, in a pool of
/// `workers` threads. Results are identical for any worker count.
GridResult grid(const RunConfig& base, const GridSpec& spec, int workers);

void write_grid_csv(const GridResult& result, const std::string& path);

// Deterministic SVG renderers (no timestamps; byte-identical reruns).
void plot_traces(const std::vector<std::string>& trace_csvs, const std::string& out_svg);
void plot_heatmap(const std::string& grid_csv, const std::string& out_svg);

/// Loads a checkpoint, evaluates on meta-test episodes, prints the
/// metric and writes a JSON report when out_json is non-empty.
EvalResult eval_checkpoint(const std::string& checkpoint_path, const TaskDistribution& dist,
                           long n_episodes, long n_steps, const std::string& out_json);

std::shared_ptr<const OmniglotStore> load_store_for(const RunConfig& cfg);

}  // namespace alphamaml
