// resbridge: generate data, train, sample, evaluate, and diagnose residual
// bridge policies. Exit codes: 0 success, 2 invalid input, 3 numerical
// failure.

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "resbridge/diagnostics.hpp"
#include "resbridge/runconfig.hpp"
#include "resbridge/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace resbridge;

namespace {

struct CmdError : std::runtime_error {
  int code;
  CmdError(int c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string provenance_comment(uint64_t config_hash, uint64_t seed) {
  std::ostringstream os;
  os << "# config_hash=" << hex64(config_hash) << " seed=" << seed << " version="
     << kArtifactVersion << "\n";
  return os.str();
}

void refuse_existing(const fs::path& p, bool force) {
  if (!force && fs::exists(p)) {
    throw CmdError(2, "refusing to overwrite " + p.string() + " (use --force)");
  }
}

// Wall-clock info lives only here so every payload file is reproducible.
void write_sidecar(const fs::path& dir, const std::string& cmd, double seconds) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  json j = {{"command", cmd}, {"finished_at", stamp}, {"elapsed_seconds", seconds}};
  std::ofstream f(dir / (cmd + "_times.json"), std::ios::trunc);
  f << j.dump(2) << "\n";
}

RunConfig load_config(const std::string& path, std::optional<uint64_t> seed_override) {
  RunConfig cfg;
  if (!path.empty()) {
    try {
      cfg = RunConfig::load(path);
    } catch (const json::exception& e) {
      throw CmdError(2, std::string("bad config: ") + e.what());
    }
  }
  if (seed_override) cfg.seed = *seed_override;
  return cfg;
}

// RVB1 carries only array shapes; scoring rules (task name) come from config.
Dataset load_dataset_file(const std::string& path, const RunConfig& cfg) {
  try {
    Dataset ds = read_dataset(path);
    ds.spec.name = cfg.task.name;
    return ds;
  } catch (const std::exception& e) {
    throw CmdError(2, std::string("cannot read dataset: ") + e.what());
  }
}

// --- gen-data ---------------------------------------------------------------

int cmd_gen_data(const RunConfig& cfg, const fs::path& out, bool force) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(out);
  const fs::path data_path = out / "dataset.rvb1";
  const fs::path csv_path = out / "dataset.csv";
  const fs::path stats_path = out / "dataset_stats.json";
  refuse_existing(data_path, force);

  RngStream stream(cfg.seed, "data");
  const Dataset ds = generate_dataset(cfg.task, stream);
  write_dataset(data_path.string(), ds);
  export_dataset_csv(csv_path.string(), ds);

  json stats = {{"config_hash", hex64(cfg.hash())},
                {"seed", cfg.seed},
                {"version", kArtifactVersion},
                {"task", task_name_str(cfg.task.name)},
                {"n_train", ds.n_train},
                {"n_val", ds.n_val},
                {"horizon", ds.spec.horizon},
                {"action_dim", ds.spec.action_dim},
                {"cond_dim", ds.spec.cond_dim}};
  json mean = json::array(), stddev = json::array();
  for (int64_t i = 0; i < ds.norm.mean.size(); ++i) {
    mean.push_back(ds.norm.mean[i]);
    stddev.push_back(ds.norm.std[i]);
  }
  stats["norm_mean"] = mean;
  stats["norm_std"] = stddev;
  std::ofstream(stats_path, std::ios::trunc) << stats.dump(2) << "\n";

  write_sidecar(out, "gen-data",
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  std::cout << "wrote " << data_path.string() << " (" << ds.n_train + ds.n_val
            << " samples)\n";
  return 0;
}

// --- train ------------------------------------------------------------------

int cmd_train(const RunConfig& cfg, const std::string& dataset_path, const fs::path& out,
              const std::string& resume, int step_limit, bool force) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(out);
  const fs::path ckpt_path = out / "checkpoint.rvbm";
  const fs::path metrics_path = out / "metrics.csv";
  const fs::path state_path = out / "state.rvbt";
  if (resume.empty()) refuse_existing(ckpt_path, force);

  const Dataset ds = load_dataset_file(dataset_path, cfg);
  Trainer trainer(ds, cfg);
  if (!resume.empty()) trainer.restore(resume);

  const TrainResult result = trainer.run(
      [](const MetricsRow& r) {
        std::cout << "step " << r.step << " loss " << r.loss_total << " val_success "
                  << r.val_success << "\n";
      },
      step_limit);

  write_metrics_csv(metrics_path.string(), result.rows);
  save_checkpoint(ckpt_path.string(), trainer.bundle(), {cfg.hash(), cfg.seed});
  trainer.save_state(state_path.string());
  json meta = {{"config_hash", hex64(cfg.hash())},
               {"seed", cfg.seed},
               {"version", kArtifactVersion},
               {"steps_done", result.steps_done},
               {"diverged", result.diverged}};
  std::ofstream(out / "metrics_meta.json", std::ios::trunc) << meta.dump(2) << "\n";
  cfg.save((out / "config.json").string());

  write_sidecar(out, "train",
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  if (result.diverged) {
    std::cerr << "training diverged at step " << result.steps_done
              << "; last good checkpoint retained\n";
    return 3;
  }
  std::cout << "wrote " << ckpt_path.string() << "\n";
  return 0;
}

// --- sample -----------------------------------------------------------------

int cmd_sample(const std::string& ckpt_path, const std::string& dataset_path,
               const RunConfig& cfg, int nfe, std::optional<uint64_t> seed_flag,
               int count, const fs::path& out, bool force) {
  const auto t0 = std::chrono::steady_clock::now();
  if (nfe < 1) throw CmdError(2, "--nfe must be >= 1");
  fs::create_directories(out);
  const fs::path csv_path = out / "samples.csv";
  refuse_existing(csv_path, force);

  CheckpointMeta meta;
  const ModelBundle bundle = load_checkpoint(ckpt_path, &meta);
  const Dataset ds = load_dataset_file(dataset_path, cfg);
  const uint64_t seed = seed_flag.value_or(meta.seed);

  const int64_t n = std::min<int64_t>(count, ds.n_val);
  const Tensor conds = ds.conditions_slice(ds.n_train, n);
  RngStream stream(seed, "sample");
  const SampleResult res = sample_batch(bundle, conds, nfe, cfg.bridge, stream);

  std::ofstream f(csv_path, std::ios::trunc);
  f.precision(17);
  f << provenance_comment(meta.config_hash, seed);
  f << "# net_evals=" << res.net_evals << " nfe=" << nfe << "\n";
  const int64_t ta = res.trajectories.cols();
  f << "index";
  for (int64_t j = 0; j < ta; ++j) f << ",traj_" << j;
  for (int64_t j = 0; j < ta; ++j) f << ",anchor_" << j;
  for (int64_t j = 0; j < ta; ++j) f << ",resid_" << j;
  f << "\n";
  for (int64_t i = 0; i < n; ++i) {
    f << i;
    for (int64_t j = 0; j < ta; ++j) f << "," << res.trajectories.at(i, j);
    for (int64_t j = 0; j < ta; ++j) f << "," << res.anchors.at(i, j);
    for (int64_t j = 0; j < ta; ++j) f << "," << res.residuals.at(i, j);
    f << "\n";
  }
  f.close();
  write_sidecar(out, "sample",
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  std::cout << "wrote " << csv_path.string() << " (net_evals=" << res.net_evals << ")\n";
  return 0;
}

// --- eval -------------------------------------------------------------------

int cmd_eval(const std::string& ckpt_path, const std::string& dataset_path,
             const RunConfig& cfg, int nfe, double tol, std::optional<uint64_t> seed_flag,
             bool oracle, const fs::path& out, bool force) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(out);
  const fs::path report_path = out / "eval.json";
  const fs::path csv_path = out / "eval_per_sample.csv";
  refuse_existing(report_path, force);

  const Dataset ds = load_dataset_file(dataset_path, cfg);
  EvalMetrics ev;
  uint64_t seed = seed_flag.value_or(0);
  uint64_t config_hash = cfg.hash();

  if (oracle) {
    // Score the dataset's own trajectories against their conditions.
    const int64_t n = ds.n_val;
    int64_t hits = 0;
    for (int64_t i = 0; i < n; ++i) {
      const double err = endpoint_error(ds.spec, ds.trajectory_row(ds.n_train + i),
                                        ds.condition_row(ds.n_train + i));
      ev.per_sample_error.push_back(err);
      ev.mean_endpoint_error += err;
      if (err <= tol) ++hits;
    }
    ev.mean_endpoint_error /= static_cast<double>(n);
    ev.success_rate = static_cast<double>(hits) / static_cast<double>(n);
  } else {
    CheckpointMeta meta;
    const ModelBundle bundle = load_checkpoint(ckpt_path, &meta);
    seed = seed_flag.value_or(meta.seed);
    config_hash = meta.config_hash;
    ev = evaluate_bundle(bundle, ds, cfg.bridge, nfe, tol, seed);
  }

  json rep = {{"config_hash", hex64(config_hash)},
              {"seed", seed},
              {"version", kArtifactVersion},
              {"nfe", nfe},
              {"tol", tol},
              {"oracle", oracle},
              {"n_val", ds.n_val},
              {"success_rate", ev.success_rate},
              {"mean_endpoint_error", ev.mean_endpoint_error}};
  std::ofstream(report_path, std::ios::trunc) << rep.dump(2) << "\n";

  std::ofstream f(csv_path, std::ios::trunc);
  f.precision(17);
  f << provenance_comment(config_hash, seed);
  f << "index,endpoint_error,success\n";
  for (size_t i = 0; i < ev.per_sample_error.size(); ++i) {
    f << i << "," << ev.per_sample_error[i] << ","
      << (ev.per_sample_error[i] <= tol ? 1 : 0) << "\n";
  }
  f.close();
  write_sidecar(out, "eval",
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  std::cout << "success_rate " << ev.success_rate << " mean_endpoint_error "
            << ev.mean_endpoint_error << "\n";
  return 0;
}

// --- diagnose ---------------------------------------------------------------

int env_threads() {
  const char* v = std::getenv("RESBRIDGE_THREADS");
  if (!v) return 1;
  const int n = std::atoi(v);
  return n >= 1 ? n : 1;
}

ModelBundle train_variant(const Dataset& ds, RunConfig cfg, SourceMode mode) {
  cfg.bridge.source_mode = mode;
  Trainer trainer(ds, cfg);
  const TrainResult r = trainer.run();
  if (r.diverged) throw std::runtime_error("diverged");
  return trainer.bundle();
}

struct DiagnoseContext {
  RunConfig cfg;
  Dataset ds;
  fs::path out;
  bool auto_train = false;
  std::optional<ModelBundle> anchored;
  std::optional<ModelBundle> gaussian;
};

fs::path ckpt_path(const DiagnoseContext& ctx, const char* mode) {
  return ctx.out / "checkpoints" / (std::string(mode) + ".rvbm");
}

const ModelBundle& ensure_bundle(DiagnoseContext& ctx, SourceMode mode) {
  auto& slot = mode == SourceMode::kAnchored ? ctx.anchored : ctx.gaussian;
  if (slot) return *slot;
  const char* name = mode == SourceMode::kAnchored ? "anchored" : "gaussian";
  const fs::path path = ckpt_path(ctx, name);
  if (fs::exists(path)) {
    slot = load_checkpoint(path.string());
    return *slot;
  }
  if (!ctx.auto_train) {
    throw CmdError(2, "missing checkpoint " + path.string() + " (use --auto to train)");
  }
  slot = train_variant(ctx.ds, ctx.cfg, mode);
  fs::create_directories(path.parent_path());
  save_checkpoint(path.string(), *slot, {ctx.cfg.hash(), ctx.cfg.seed});
  return *slot;
}

DiagnosticReport run_one_diagnostic(DiagnoseContext& ctx, const std::string& which) {
  const uint64_t seed = ctx.cfg.seed;
  if (which == "quantization") {
    RngStream stream(seed, "quantization");
    DiagnosticReport rep = quantization_floor_suite({0.01, 0.1, 1.0}, 1000000, stream);
    rep.config_hash = ctx.cfg.hash();
    rep.seed = seed;
    return rep;
  }
  if (which == "transport") {
    const ModelBundle& bundle = ensure_bundle(ctx, SourceMode::kAnchored);
    RngStream stream(seed, "transport");
    DiagnosticReport rep = transport_cost_report(ctx.ds, bundle, ctx.cfg.bridge, stream);
    rep.config_hash = ctx.cfg.hash();
    rep.seed = seed;
    return rep;
  }
  if (which == "collapse") {
    const ModelBundle& a = ensure_bundle(ctx, SourceMode::kAnchored);
    const ModelBundle& g = ensure_bundle(ctx, SourceMode::kGaussian);
    DiagnosticReport rep =
        loss_collapse_probe(a, g, ctx.ds, {0.01, 0.05, 0.1, 0.25, 0.5}, ctx.cfg.bridge, seed);
    rep.config_hash = ctx.cfg.hash();
    return rep;
  }
  if (which == "nfe") {
    const ModelBundle& a = ensure_bundle(ctx, SourceMode::kAnchored);
    const ModelBundle& g = ensure_bundle(ctx, SourceMode::kGaussian);
    NfeTiming timing;
    DiagnosticReport rep = nfe_sweep(a, g, ctx.ds, {1, 2, 4, 8, 16, 32},
                                     ctx.cfg.train.eval_tol, ctx.cfg.bridge, seed, &timing);
    rep.config_hash = ctx.cfg.hash();
    fs::create_directories(ctx.out / "reports");
    std::ofstream(ctx.out / "reports" / "nfe_sweep_timing.json", std::ios::trunc)
        << timing.to_json();
    return rep;
  }
  if (which == "straightness") {
    const ModelBundle& a = ensure_bundle(ctx, SourceMode::kAnchored);
    const ModelBundle& g = ensure_bundle(ctx, SourceMode::kGaussian);
    DiagnosticReport rep = straightness_report(a, g, ctx.ds, 32, ctx.cfg.bridge, seed);
    rep.config_hash = ctx.cfg.hash();
    return rep;
  }
  if (which == "convergence") {
    AbResult ab = convergence_ab(ctx.ds, ctx.cfg);
    // Reuse the freshly trained variants for any diagnostics still pending.
    if (!ctx.anchored) {
      ctx.anchored = std::move(ab.anchored);
      const fs::path p = ckpt_path(ctx, "anchored");
      fs::create_directories(p.parent_path());
      if (!fs::exists(p)) save_checkpoint(p.string(), *ctx.anchored, {ctx.cfg.hash(), seed});
    }
    if (!ctx.gaussian) {
      ctx.gaussian = std::move(ab.gaussian);
      const fs::path p = ckpt_path(ctx, "gaussian");
      if (!fs::exists(p)) save_checkpoint(p.string(), *ctx.gaussian, {ctx.cfg.hash(), seed});
    }
    return ab.report;
  }
  throw CmdError(2, "unknown diagnostic: " + which);
}

int cmd_diagnose(const RunConfig& cfg, const std::string& which,
                 const std::string& dataset_path, const fs::path& out, bool auto_train) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(out / "reports");

  DiagnoseContext ctx;
  ctx.cfg = cfg;
  ctx.out = out;
  ctx.auto_train = auto_train;

  // Dataset: explicit path beats a cached file beats generating one (--auto).
  // The quantization check is dataset-free.
  fs::path ds_path = dataset_path.empty() ? out / "dataset.rvb1" : fs::path(dataset_path);
  if (which == "quantization") {
  } else if (!fs::exists(ds_path)) {
    if (dataset_path.empty() && auto_train) {
      RngStream stream(cfg.seed, "data");
      ctx.ds = generate_dataset(cfg.task, stream);
      write_dataset(ds_path.string(), ctx.ds);
    } else {
      throw CmdError(2, "missing dataset " + ds_path.string() + " (use --auto to generate)");
    }
  } else {
    ctx.ds = load_dataset_file(ds_path.string(), cfg);
  }

  std::vector<std::string> jobs;
  if (which == "all") {
    jobs = {"quantization", "transport", "collapse", "nfe", "straightness", "convergence"};
  } else {
    jobs = {which};
  }

  // Checkpoint-dependent jobs share trained bundles, so materialize those
  // first (convergence trains its own pair and donates them when --auto).
  const bool needs_models = which == "all" || (which != "quantization" && which != "convergence");
  if (which == "all" && auto_train && !fs::exists(ckpt_path(ctx, "anchored"))) {
    DiagnosticReport conv = run_one_diagnostic(ctx, "convergence");
    write_report((out / "reports").string(), conv);
    jobs.erase(std::remove(jobs.begin(), jobs.end(), std::string("convergence")), jobs.end());
    std::cout << "convergence_ab " << (conv.passed() ? "pass" : "FAIL") << "\n";
  } else if (needs_models) {
    ensure_bundle(ctx, SourceMode::kAnchored);
    if (which != "transport") ensure_bundle(ctx, SourceMode::kGaussian);
  }

  const int threads = std::min<int>(env_threads(), static_cast<int>(jobs.size()));
  std::mutex io_mu;
  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::string first_error;
  bool all_passed = true;

  auto worker = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        DiagnosticReport rep = run_one_diagnostic(ctx, jobs[i]);
        write_report((out / "reports").string(), rep);
        std::lock_guard<std::mutex> lk(io_mu);
        if (!rep.passed()) all_passed = false;
        std::cout << rep.name << " " << (rep.passed() ? "pass" : "FAIL") << "\n";
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lk(io_mu);
        if (!failed.exchange(true)) first_error = e.what();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failed) throw CmdError(2, first_error);

  write_sidecar(out, "diagnose",
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  std::cout << (all_passed ? "all diagnostics passed" : "some diagnostics failed") << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"residual diffusion bridge policy toolkit"};
  app.require_subcommand(1);

  std::string config_path, dataset_path, ckpt, resume, which = "all", out = "out";
  std::optional<uint64_t> seed;
  int nfe = 8, count = 100;
  double tol = 0.1;
  bool force = false, auto_train = false, oracle = false;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--config", config_path, "run config JSON");
  gen->add_option("--seed", seed, "seed override");
  gen->add_option("--out", out, "output directory");
  gen->add_flag("--force", force, "overwrite existing outputs");

  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config_path, "run config JSON");
  train->add_option("--dataset", dataset_path, "RVB1 dataset path")->required();
  train->add_option("--seed", seed, "seed override");
  train->add_option("--out", out, "output directory");
  train->add_option("--resume", resume, "RVBT training state to resume from");
  int step_limit = -1;
  train->add_option("--steps", step_limit, "cap on steps this invocation (for interrupt/resume)");
  train->add_flag("--force", force, "overwrite existing outputs");

  auto* sample = app.add_subcommand("sample", "sample trajectories from a checkpoint");
  sample->add_option("--checkpoint", ckpt, "RVBM checkpoint")->required();
  sample->add_option("--dataset", dataset_path, "RVB1 dataset for conditions")->required();
  sample->add_option("--config", config_path, "run config JSON (bridge settings)");
  sample->add_option("--nfe", nfe, "Euler steps");
  sample->add_option("--seed", seed, "sampling seed (default: checkpoint seed)");
  sample->add_option("--count", count, "number of validation conditions");
  sample->add_option("--out", out, "output directory");
  sample->add_flag("--force", force, "overwrite existing outputs");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the validation split");
  eval->add_option("--checkpoint", ckpt, "RVBM checkpoint");
  eval->add_option("--dataset", dataset_path, "RVB1 dataset")->required();
  eval->add_option("--config", config_path, "run config JSON (bridge settings)");
  eval->add_option("--nfe", nfe, "Euler steps");
  eval->add_option("--tol", tol, "success tolerance");
  eval->add_option("--seed", seed, "eval seed (default: checkpoint seed)");
  eval->add_flag("--oracle", oracle, "score ground-truth trajectories instead");
  eval->add_option("--out", out, "output directory");
  eval->add_flag("--force", force, "overwrite existing outputs");

  auto* diag = app.add_subcommand("diagnose", "run empirical property checks");
  diag->add_option("--config", config_path, "run config JSON");
  diag->add_option("--which", which,
                   "quantization|transport|collapse|nfe|straightness|convergence|all");
  diag->add_option("--dataset", dataset_path, "RVB1 dataset path");
  diag->add_option("--seed", seed, "seed override");
  diag->add_option("--out", out, "output directory");
  diag->add_flag("--auto", auto_train, "train/generate missing prerequisites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const RunConfig cfg = load_config(config_path, seed);
    if (gen->parsed()) return cmd_gen_data(cfg, out, force);
    if (train->parsed()) return cmd_train(cfg, dataset_path, out, resume, step_limit, force);
    if (sample->parsed()) return cmd_sample(ckpt, dataset_path, cfg, nfe, seed, count, out, force);
    if (eval->parsed()) {
      if (!oracle && ckpt.empty()) throw CmdError(2, "--checkpoint required unless --oracle");
      return cmd_eval(ckpt, dataset_path, cfg, nfe, tol, seed, oracle, out, force);
    }
    if (diag->parsed()) return cmd_diagnose(cfg, which, dataset_path, out, auto_train);
  } catch (const CmdError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    std::cerr << "error: " << msg << "\n";
    const bool numerical = msg.find("diverged") != std::string::npos ||
                           msg.find("non-finite") != std::string::npos;
    return numerical ? 3 : 2;
  }
  return 2;
}
