#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "alphamaml/checkpoint.hpp"
#include "alphamaml/harness.hpp"

using namespace alphamaml;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

RunConfig quick_blobs(Algorithm alg, uint64_t seed) {
  RunConfig cfg;
  cfg.algorithm = alg;
  cfg.task = TaskKind::blobs;
  cfg.n_way = 2;
  cfg.k_shot = 5;
  cfg.q_query = 5;
  cfg.meta.alpha0 = 0.05;
  cfg.meta.beta0 = 0.01;
  cfg.meta.alpha_hyperlr = 1e-3;
  cfg.meta.beta_hyperlr = 1e-3;
  cfg.meta.meta_batch_size = 4;
  cfg.max_iters = 15;
  cfg.val_every = 5;
  cfg.seed = seed;
  return cfg;
}

fs::path temp_dir(const char* name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("RunConfig JSON round-trips and hashes stably") {
  RunConfig cfg = quick_blobs(Algorithm::alpha_maml, 3);
  cfg.meta.lr_floor = 1e-6;
  cfg.loss_threshold = 0.42;
  const std::string text = cfg.to_json();
  RunConfig back = RunConfig::from_json(text);
  CHECK(back.to_json() == text);
  CHECK(config_hash(cfg) == config_hash(back));
  CHECK(config_hash(cfg).size() == 40);
  RunConfig other = cfg;
  other.seed = 4;
  CHECK(config_hash(other) != config_hash(cfg));

  CHECK(quick_blobs(Algorithm::maml, 0).resolved_threshold() ==
        doctest::Approx(std::log(2.0) - 0.05));
}

TEST_CASE("run produces a well-formed trace with constant rates under maml") {
  RunTrace trace = run(quick_blobs(Algorithm::maml, 11));
  REQUIRE(trace.rows.size() == 15);
  for (size_t i = 0; i < trace.rows.size(); ++i) {
    CHECK(trace.rows[i].iter == static_cast<long>(i));
    CHECK(trace.rows[i].alpha == 0.05);
    CHECK(trace.rows[i].beta == 0.01);
    CHECK((trace.rows[i].val_loss.has_value() == (i % 5 == 0)));
  }
  CHECK_FALSE(trace.diverged);
}

TEST_CASE("trace CSV writes the pinned schema and reproduces bitwise") {
  const fs::path dir = temp_dir("alphamaml_test_trace");
  RunTrace t1 = run(quick_blobs(Algorithm::alpha_maml, 5));
  RunTrace t2 = run(quick_blobs(Algorithm::alpha_maml, 5));
  write_trace_csv(t1, (dir / "a.csv").string());
  write_trace_csv(t2, (dir / "b.csv").string());
  CHECK(slurp((dir / "a.csv").string()) == slurp((dir / "b.csv").string()));

  auto rows = read_trace_csv((dir / "a.csv").string());
  REQUIRE(rows.size() == t1.rows.size());
  CHECK(rows[3].train_loss == t1.rows[3].train_loss);
  CHECK(rows[0].val_loss.has_value());
  CHECK_FALSE(rows[1].val_loss.has_value());

  std::ofstream bad((dir / "bad.csv").string());
  bad << "iter,alpha\n";
  bad.close();
  CHECK_THROWS_WITH_AS(read_trace_csv((dir / "bad.csv").string()),
                       doctest::Contains("expected columns"), std::runtime_error);
}

TEST_CASE("iters_to_threshold: smoothing and monotonicity") {
  // two tasks per batch: the objective is meta_loss / 2
  std::vector<TraceRow> rows;
  for (int i = 0; i < 30; ++i) {
    TraceRow r;
    r.iter = i;
    r.meta_loss = 2.0 * (3.0 - 0.1 * i);  // smoothed value trails the raw one
    rows.push_back(r);
  }
  auto hit_loose = iters_to_threshold(rows, 2.5, 2);
  auto hit_tight = iters_to_threshold(rows, 1.0, 2);
  REQUIRE(hit_loose);
  REQUIRE(hit_tight);
  CHECK(*hit_loose <= *hit_tight);  // looser threshold never reports more
  CHECK_FALSE(iters_to_threshold(rows, -1.0, 2));

  // moving average over 10 rows: first crossing of 2.5 happens when the
  // mean of the trailing window reaches it, not the raw series
  const long first = *hit_loose;
  CHECK(first > 5);  // raw series crosses at i=5, the average lags
  double acc = 0.0;
  int count = 0;
  for (long i = std::max(0L, first - 9); i <= first; ++i, ++count)
    acc += rows[static_cast<size_t>(i)].meta_loss / 2.0;
  CHECK(acc / count <= 2.5);
}

TEST_CASE("grid: cells cover the axes and workers do not change results") {
  const fs::path dir1 = temp_dir("alphamaml_test_grid1");
  const fs::path dir8 = temp_dir("alphamaml_test_grid8");
  RunConfig base = quick_blobs(Algorithm::alpha_maml, 2);
  base.max_iters = 10;
  GridSpec spec;
  spec.alpha0 = {0.05, 0.1};
  spec.beta0 = {0.01};
  spec.alpha_hyperlr = {0.0, 1e-3};
  spec.beta_hyperlr = {1e-3};

  base.output_dir = dir1.string();
  GridResult r1 = grid(base, spec, 1);
  base.output_dir = dir8.string();
  GridResult r8 = grid(base, spec, 8);
  REQUIRE(r1.cells.size() == 4);
  write_grid_csv(r1, (dir1 / "grid.csv").string());
  write_grid_csv(r8, (dir8 / "grid.csv").string());
  CHECK(slurp((dir1 / "grid.csv").string()) == slurp((dir8 / "grid.csv").string()));

  // maml ignores the hyper-lr axes entirely
  RunConfig maml_base = quick_blobs(Algorithm::maml, 2);
  maml_base.max_iters = 5;
  maml_base.output_dir = temp_dir("alphamaml_test_gridm").string();
  GridResult rm = grid(maml_base, spec, 2);
  CHECK(rm.cells.size() == 2);
  for (const auto& c : rm.cells) {
    CHECK(c.alpha_hyperlr == 0.0);
    CHECK(c.beta_hyperlr == 0.0);
  }
}

TEST_CASE("plots are deterministic byte for byte") {
  const fs::path dir = temp_dir("alphamaml_test_plot");
  RunConfig cfg = quick_blobs(Algorithm::alpha_maml, 7);
  cfg.max_iters = 10;
  RunTrace trace = run(cfg);
  const std::string csv = (dir / "trace.csv").string();
  write_trace_csv(trace, csv);
  plot_traces({csv}, (dir / "p1.svg").string());
  plot_traces({csv}, (dir / "p2.svg").string());
  CHECK(slurp((dir / "p1.svg").string()) == slurp((dir / "p2.svg").string()));
  CHECK(slurp((dir / "p1.svg").string()).find("<svg") == 0);

  // heatmap with one blank cell
  GridResult gr;
  gr.cells = {GridCell{1e-3, 1e-5, 0, 0, 12, 1.0, ""}, GridCell{1e-3, 1e-6, 0, 0, kNotConverged,
                                                                2.0, ""},
              GridCell{1e-4, 1e-5, 0, 0, 40, 1.2, ""}, GridCell{1e-4, 1e-6, 0, 0, 7, 0.9, ""}};
  write_grid_csv(gr, (dir / "grid.csv").string());
  plot_heatmap((dir / "grid.csv").string(), (dir / "h1.svg").string());
  plot_heatmap((dir / "grid.csv").string(), (dir / "h2.svg").string());
  const std::string h = slurp((dir / "h1.svg").string());
  CHECK(h == slurp((dir / "h2.svg").string()));
  CHECK(h.find("NOT_CONVERGED") == std::string::npos);  // blank, not labeled

  std::ofstream bad((dir / "bad.csv").string());
  bad << "foo,bar\n";
  bad.close();
  CHECK_THROWS(plot_heatmap((dir / "bad.csv").string(), (dir / "x.svg").string()));
}

TEST_CASE("run_and_save writes trace, metadata and a loadable checkpoint") {
  const fs::path dir = temp_dir("alphamaml_test_save");
  RunConfig cfg = quick_blobs(Algorithm::maml, 13);
  cfg.max_iters = 6;
  cfg.output_dir = dir.string();
  RunTrace trace = run_and_save(cfg);
  CHECK(fs::exists(dir / "trace.csv"));
  CHECK(fs::exists(dir / "run.json"));
  CHECK(fs::exists(dir / "final.ckpt"));

  Checkpoint ckpt = load_checkpoint((dir / "final.ckpt").string());
  CHECK(ckpt.state.iter == 6);
  RunConfig embedded = RunConfig::from_json(ckpt.config_json);
  CHECK(config_hash(embedded) == trace.hash);

  // eval on the saved checkpoint: chance-level accuracy for 2 classes
  TaskDistribution dist;
  dist.kind = TaskKind::blobs;
  dist.n_way = 2;
  dist.k_shot = 5;
  dist.q_query = 5;
  dist.rng_seed = 1;
  EvalResult res = eval_checkpoint((dir / "final.ckpt").string(), dist, 30, 3,
                                   (dir / "eval.json").string());
  CHECK(res.mean >= 0.0);
  CHECK(res.mean <= 1.0);
  CHECK(fs::exists(dir / "eval.json"));
  CHECK_THROWS_WITH_AS(eval_checkpoint((dir / "final.ckpt").string(), dist, 0, 3, ""),
                       "eval: need >= 1 episode", std::runtime_error);
}

TEST_CASE("divergent runs keep a partial trace and are flagged") {
  RunConfig cfg = quick_blobs(Algorithm::maml, 3);
  cfg.task = TaskKind::sinusoid;  // mse blows up; cross-entropy saturates
  cfg.meta.alpha0 = 1e9;
  cfg.meta.beta0 = 1e9;
  cfg.max_iters = 10;
  RunTrace trace = run(cfg);
  CHECK(trace.diverged);
  CHECK(trace.rows.size() < 10);
  CHECK_FALSE(trace.divergence_msg.empty());
}
