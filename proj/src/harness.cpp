#include "alphamaml/harness.hpp"

#include <openssl/sha.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "alphamaml/checkpoint.hpp"
#include "alphamaml/omniglot.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace alphamaml {

const char* algorithm_name(Algorithm a) { return a == Algorithm::maml ? "maml" : "alpha-maml"; }

Algorithm algorithm_from_name(const std::string& name) {
  if (name == "maml") return Algorithm::maml;
  if (name == "alpha-maml" || name == "alpha_maml") return Algorithm::alpha_maml;
  throw std::runtime_error("unknown algorithm: " + name + " (expected maml or alpha-maml)");
}

double RunConfig::resolved_threshold() const {
  if (loss_threshold) return *loss_threshold;
  if (task == TaskKind::sinusoid) return 0.5;
  return std::log(static_cast<double>(n_way)) - 0.05;
}

void RunConfig::validate() const {
  meta.validate();
  if (max_iters < 1) throw std::invalid_argument("RunConfig: max_iters must be >= 1");
  if (resolved_threshold() <= 0.0)
    throw std::invalid_argument("RunConfig: loss threshold must be positive");
  if (n_way < 1 || k_shot < 1 || q_query < 1)
    throw std::invalid_argument("RunConfig: n_way, k_shot, q_query must be positive");
}

namespace {

// nlohmann's default double formatting round-trips, and we emit keys in
// a fixed order, so dumps of equal configs are equal strings.
json to_json_obj(const RunConfig& c) {
  json j;
  j["algorithm"] = algorithm_name(c.algorithm);
  j["task"] = task_kind_name(c.task);
  j["n_way"] = c.n_way;
  j["k_shot"] = c.k_shot;
  j["q_query"] = c.q_query;
  j["alpha0"] = c.meta.alpha0;
  j["beta0"] = c.meta.beta0;
  j["alpha_hyperlr"] = c.meta.alpha_hyperlr;
  j["beta_hyperlr"] = c.meta.beta_hyperlr;
  j["meta_batch_size"] = c.meta.meta_batch_size;
  j["n_inner_steps"] = c.meta.n_inner_steps;
  j["n_inner_steps_eval"] = c.meta.n_inner_steps_eval;
  j["first_order"] = c.meta.first_order;
  if (c.meta.lr_floor)
    j["lr_floor"] = *c.meta.lr_floor;
  else
    j["lr_floor"] = nullptr;
  j["alpha_update_source"] =
      c.meta.alpha_update_source == AlphaUpdateSource::current ? "current" : "previous";
  j["task_threads"] = c.meta.task_threads;
  j["max_iters"] = c.max_iters;
  if (c.loss_threshold)
    j["loss_threshold"] = *c.loss_threshold;
  else
    j["loss_threshold"] = nullptr;
  j["val_every"] = c.val_every;
  j["stop_at_threshold"] = c.stop_at_threshold;
  j["seed"] = c.seed;
  j["data_root"] = c.data_root;
  j["cache_path"] = c.cache_path;
  j["output_dir"] = c.output_dir;
  return j;
}

RunConfig from_json_obj(const json& j) {
  RunConfig c;
  c.algorithm = algorithm_from_name(j.at("algorithm").get<std::string>());
  c.task = task_kind_from_name(j.at("task").get<std::string>());
  c.n_way = j.at("n_way").get<long>();
  c.k_shot = j.at("k_shot").get<long>();
  c.q_query = j.at("q_query").get<long>();
  c.meta.alpha0 = j.at("alpha0").get<double>();
  c.meta.beta0 = j.at("beta0").get<double>();
  c.meta.alpha_hyperlr = j.at("alpha_hyperlr").get<double>();
  c.meta.beta_hyperlr = j.at("beta_hyperlr").get<double>();
  c.meta.meta_batch_size = j.at("meta_batch_size").get<long>();
  c.meta.n_inner_steps = j.at("n_inner_steps").get<long>();
  c.meta.n_inner_steps_eval = j.at("n_inner_steps_eval").get<long>();
  c.meta.first_order = j.at("first_order").get<bool>();
  if (!j.at("lr_floor").is_null()) c.meta.lr_floor = j.at("lr_floor").get<double>();
  c.meta.alpha_update_source = j.at("alpha_update_source").get<std::string>() == "previous"
                                   ? AlphaUpdateSource::previous
                                   : AlphaUpdateSource::current;
  c.meta.task_threads = j.at("task_threads").get<long>();
  c.max_iters = j.at("max_iters").get<long>();
  if (!j.at("loss_threshold").is_null()) c.loss_threshold = j.at("loss_threshold").get<double>();
  c.val_every = j.at("val_every").get<long>();
  c.stop_at_threshold = j.at("stop_at_threshold").get<bool>();
  c.seed = j.at("seed").get<uint64_t>();
  c.data_root = j.at("data_root").get<std::string>();
  c.cache_path = j.at("cache_path").get<std::string>();
  c.output_dir = j.at("output_dir").get<std::string>();
  return c;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string RunConfig::to_json() const { return to_json_obj(*this).dump(2); }

RunConfig RunConfig::from_json(const std::string& text) {
  return from_json_obj(json::parse(text));
}

std::string config_hash(const RunConfig& cfg) {
  const std::string text = cfg.to_json();
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(text.data()), text.size(), digest);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * SHA_DIGEST_LENGTH);
  for (unsigned char b : digest) {
    out.push_back(hex[b >> 4]);
    out.push_back(hex[b & 0xf]);
  }
  return out;
}

void write_trace_csv(const RunTrace& trace, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot create trace file: " + path);
  os << "iter,alpha,beta,train_loss,meta_loss,val_loss\n";
  for (const auto& r : trace.rows) {
    os << r.iter << ',' << fmt_double(r.alpha) << ',' << fmt_double(r.beta) << ','
       << fmt_double(r.train_loss) << ',' << fmt_double(r.meta_loss) << ',';
    if (r.val_loss) os << fmt_double(*r.val_loss);
    os << '\n';
  }
  if (!os) throw std::runtime_error("failed writing trace file: " + path);
}

std::vector<TraceRow> read_trace_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open trace file: " + path);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty trace file: " + path);
  if (line != "iter,alpha,beta,train_loss,meta_loss,val_loss")
    throw std::runtime_error("trace schema mismatch in " + path +
                             ": expected columns iter,alpha,beta,train_loss,meta_loss,val_loss");
  std::vector<TraceRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    TraceRow r;
    std::stringstream ss(line);
    std::string field;
    auto next = [&]() {
      if (!std::getline(ss, field, ',')) field.clear();
      return field;
    };
    r.iter = std::stol(next());
    r.alpha = std::stod(next());
    r.beta = std::stod(next());
    r.train_loss = std::stod(next());
    r.meta_loss = std::stod(next());
    next();
    if (!field.empty()) r.val_loss = std::stod(field);
    rows.push_back(r);
  }
  return rows;
}

std::shared_ptr<const OmniglotStore> load_store_for(const RunConfig& cfg) {
  if (cfg.task != TaskKind::omniglot) return nullptr;
  if (!cfg.cache_path.empty() && fs::exists(cfg.cache_path))
    return std::make_shared<OmniglotStore>(load_omniglot_cache(cfg.cache_path));
  if (!cfg.data_root.empty()) {
    auto store = std::make_shared<OmniglotStore>(ingest_omniglot(cfg.data_root));
    if (!cfg.cache_path.empty()) save_omniglot_cache(*store, cfg.cache_path);
    return store;
  }
  throw std::runtime_error(
      "omniglot task needs a dataset: pass --cache <file> (ingested cache) or --data-root "
      "<dir> (raw PNG tree; see the ingest subcommand)");
}

namespace {

double objective_of(const TraceRow& r, long meta_batch_size) {
  return r.meta_loss / static_cast<double>(meta_batch_size);
}

std::optional<double> smoothed_tail(const std::vector<TraceRow>& rows, long meta_batch_size,
                                    int window) {
  if (rows.empty()) return std::nullopt;
  const size_t n = rows.size();
  const size_t take = std::min<size_t>(static_cast<size_t>(window), n);
  double acc = 0.0;
  for (size_t i = n - take; i < n; ++i) acc += objective_of(rows[i], meta_batch_size);
  return acc / static_cast<double>(take);
}

}  // namespace

std::optional<long> iters_to_threshold(const std::vector<TraceRow>& rows, double threshold,
                                       long meta_batch_size, int window) {
  double acc = 0.0;
  std::vector<double> buf;
  for (size_t i = 0; i < rows.size(); ++i) {
    buf.push_back(objective_of(rows[i], meta_batch_size));
    acc += buf.back();
    if (buf.size() > static_cast<size_t>(window)) {
      acc -= buf[buf.size() - 1 - static_cast<size_t>(window)];
    }
    const double avg = acc / static_cast<double>(std::min<size_t>(buf.size(), window));
    if (avg <= threshold) return rows[i].iter;
  }
  return std::nullopt;
}

RunTrace run(const RunConfig& cfg) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();

  TaskDistribution dist;
  dist.kind = cfg.task;
  dist.n_way = cfg.n_way;
  dist.k_shot = cfg.k_shot;
  dist.q_query = cfg.q_query;
  dist.split = Split::meta_train;
  dist.rng_seed = cfg.seed;
  dist.store = load_store_for(cfg);

  TaskDistribution val_dist = dist;
  val_dist.split = Split::meta_test;

  const ModelSpec spec = default_model(dist, cfg.seed);
  const LossKind loss_kind = task_loss(cfg.task);
  MetaState state = MetaState::initial(spec, cfg.meta);

  // validation episodes are fixed per run so probes stay comparable
  std::vector<Episode> val_episodes;
  if (cfg.val_every > 0) {
    Rng val_rng(cfg.seed ^ 0x76616c6964ULL);
    val_episodes = make_batch(val_dist, 20, val_rng);
  }

  RunTrace trace;
  trace.cfg = cfg;
  trace.hash = config_hash(cfg);

  Rng rng(cfg.seed);
  const double threshold = cfg.resolved_threshold();
  for (long i = 0; i < cfg.max_iters; ++i) {
    std::vector<Episode> batch =
        make_batch(dist, cfg.meta.meta_batch_size, rng, i * cfg.meta.meta_batch_size);
    StepReport report;
    try {
      report = cfg.algorithm == Algorithm::maml
                   ? maml_step(state, spec, loss_kind, batch, cfg.meta)
                   : alpha_maml_step(state, spec, loss_kind, batch, cfg.meta);
    } catch (const DivergenceError& e) {
      trace.diverged = true;
      trace.divergence_msg = e.what();
      break;
    }
    TraceRow row;
    row.iter = i;
    row.alpha = report.alpha_after;
    row.beta = report.beta_after;
    row.train_loss = report.train_loss;
    row.meta_loss = report.meta_loss;
    if (cfg.val_every > 0 && i % cfg.val_every == 0) {
      double val = 0.0;
      for (const auto& ep : val_episodes) {
        ad::Graph g;
        ParamVector leaves = state.theta.as_leaves_of(g);
        ParamVector adapted = inner_adapt(g, spec, loss_kind, leaves, ep.train_inputs,
                                          ep.train_targets, state.alpha, cfg.meta.n_inner_steps,
                                          /*track_higher_order=*/false)
                                  .theta_prime;
        ad::Tensor out = forward(g, spec, adapted, ep.test_inputs);
        val += loss(g, loss_kind, out, ep.test_targets).value();
      }
      row.val_loss = val / static_cast<double>(val_episodes.size());
    }
    trace.rows.push_back(row);
    if (cfg.stop_at_threshold) {
      auto avg = smoothed_tail(trace.rows, cfg.meta.meta_batch_size, 10);
      if (avg && *avg <= threshold) break;
    }
  }
  trace.final_state = std::move(state);
  trace.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return trace;
}

RunTrace run_and_save(const RunConfig& cfg) {
  RunTrace trace = run(cfg);
  fs::create_directories(cfg.output_dir);
  write_trace_csv(trace, (fs::path(cfg.output_dir) / "trace.csv").string());
  json meta;
  meta["config"] = to_json_obj(cfg);
  meta["config_hash"] = trace.hash;
  meta["wall_seconds"] = trace.wall_seconds;
  meta["diverged"] = trace.diverged;
  meta["divergence_msg"] = trace.divergence_msg;
  meta["iterations"] = trace.rows.size();
  std::ofstream os((fs::path(cfg.output_dir) / "run.json").string());
  os << meta.dump(2) << '\n';
  save_checkpoint((fs::path(cfg.output_dir) / "final.ckpt").string(), trace.final_state,
                  cfg.to_json());
  return trace;
}

GridResult grid(const RunConfig& base, const GridSpec& spec, int workers) {
  base.validate();
  if (spec.alpha0.empty() || spec.beta0.empty())
    throw std::invalid_argument("grid: alpha0 and beta0 axes must be non-empty");
  const bool adaptive = base.algorithm == Algorithm::alpha_maml;
  const std::vector<double> ahl =
      adaptive && !spec.alpha_hyperlr.empty() ? spec.alpha_hyperlr
                                              : std::vector<double>{base.meta.alpha_hyperlr};
  const std::vector<double> bhl =
      adaptive && !spec.beta_hyperlr.empty() ? spec.beta_hyperlr
                                             : std::vector<double>{base.meta.beta_hyperlr};

  GridResult result;
  result.spec = spec;
  result.base = base;
  for (double a0 : spec.alpha0)
    for (double b0 : spec.beta0)
      for (double ah : ahl)
        for (double bh : bhl) {
          GridCell cell;
          cell.alpha0 = a0;
          cell.beta0 = b0;
          cell.alpha_hyperlr = adaptive ? ah : 0.0;
          cell.beta_hyperlr = adaptive ? bh : 0.0;
          result.cells.push_back(cell);
        }

  const double threshold = base.resolved_threshold();
  auto run_cell = [&](GridCell& cell, size_t index) {
    RunConfig cfg = base;
    cfg.meta.alpha0 = cell.alpha0;
    cfg.meta.beta0 = cell.beta0;
    cfg.meta.alpha_hyperlr = cell.alpha_hyperlr;
    cfg.meta.beta_hyperlr = cell.beta_hyperlr;
    cfg.stop_at_threshold = true;
    cfg.val_every = 0;
    cfg.output_dir = (fs::path(base.output_dir) / "cells" / std::to_string(index)).string();
    try {
      fs::create_directories(cfg.output_dir);
      RunTrace trace = run(cfg);
      write_trace_csv(trace, (fs::path(cfg.output_dir) / "trace.csv").string());
      auto hit = iters_to_threshold(trace.rows, threshold, cfg.meta.meta_batch_size);
      cell.iters_to_threshold = hit ? *hit : kNotConverged;
      auto tail = smoothed_tail(trace.rows, cfg.meta.meta_batch_size, 10);
      cell.final_loss = tail ? *tail : std::nan("");
      if (trace.diverged) cell.note = "diverged: " + trace.divergence_msg;
    } catch (const std::exception& e) {
      cell.iters_to_threshold = kNotConverged;
      cell.final_loss = std::nan("");
      cell.note = e.what();
    }
  };

  const size_t n_cells = result.cells.size();
  const int n_workers = std::max(1, std::min<int>(workers, static_cast<int>(n_cells)));
  if (n_workers == 1) {
    for (size_t i = 0; i < n_cells; ++i) run_cell(result.cells[i], i);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w)
      pool.emplace_back([&] {
        for (size_t i = next.fetch_add(1); i < n_cells; i = next.fetch_add(1))
          run_cell(result.cells[i], i);
      });
    for (auto& th : pool) th.join();
  }
  return result;
}

void write_grid_csv(const GridResult& result, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot create grid file: " + path);
  os << "alpha0,beta0,alpha_hyperlr,beta_hyperlr,iters_to_threshold,final_loss,note\n";
  for (const auto& c : result.cells) {
    os << fmt_double(c.alpha0) << ',' << fmt_double(c.beta0) << ',' << fmt_double(c.alpha_hyperlr)
       << ',' << fmt_double(c.beta_hyperlr) << ',';
    if (c.iters_to_threshold == kNotConverged)
      os << "NOT_CONVERGED";
    else
      os << c.iters_to_threshold;
    std::string note = c.note;
    for (char& ch : note)
      if (ch == ',' || ch == '\n') ch = ';';
    os << ',' << fmt_double(c.final_loss) << ',' << note << '\n';
  }
  if (!os) throw std::runtime_error("failed writing grid file: " + path);
}

EvalResult eval_checkpoint(const std::string& checkpoint_path, const TaskDistribution& dist_in,
                           long n_episodes, long n_steps, const std::string& out_json) {
  if (n_episodes < 1) throw std::runtime_error("eval: need >= 1 episode");
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  RunConfig cfg = RunConfig::from_json(ckpt.config_json);

  TaskDistribution dist = dist_in;
  dist.split = Split::meta_test;
  const ModelSpec spec = default_model(dist, cfg.seed);

  Rng rng(dist.rng_seed);
  EvalResult res =
      evaluate(ckpt.state.theta, spec, dist, ckpt.state.alpha, n_episodes, n_steps, rng);

  if (!out_json.empty()) {
    json j;
    j["checkpoint"] = checkpoint_path;
    j["task"] = task_kind_name(dist.kind);
    j["n_way"] = dist.n_way;
    j["k_shot"] = dist.k_shot;
    j["q_query"] = dist.q_query;
    j["n_episodes"] = res.n_episodes;
    j["adaptation_steps"] = n_steps;
    j["alpha"] = ckpt.state.alpha;
    j["metric"] = task_loss(dist.kind) == LossKind::cross_entropy ? "accuracy" : "mse";
    j["mean"] = res.mean;
    j["ci95"] = res.ci95;
    std::ofstream os(out_json);
    if (!os) throw std::runtime_error("cannot create report file: " + out_json);
    os << j.dump(2) << '\n';
  }
  return res;
}

}  // namespace alphamaml
