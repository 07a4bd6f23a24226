// Acceptance gate: one line per criterion, nonzero exit when any fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "resbridge/diagnostics.hpp"
#include "resbridge/spectral.hpp"

namespace fs = std::filesystem;
using namespace resbridge;

namespace {

int failures = 0;
std::chrono::steady_clock::time_point t_start;

void begin(int) { t_start = std::chrono::steady_clock::now(); }

void report(int idx, const std::string& name, bool pass, const std::string& detail) {
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  std::cout << (pass ? "PASS" : "FAIL") << " " << idx << " " << name << ": " << detail
            << " [" << secs << "s]" << std::endl;
  if (!pass) ++failures;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(RESBRIDGE_BIN) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Tensor naive_dct(const Tensor& x) {
  const int64_t T = x.rows(), A = x.cols();
  Tensor out({T, A});
  for (int64_t f = 0; f < T; ++f) {
    const double a = f == 0 ? std::sqrt(1.0 / static_cast<double>(T))
                            : std::sqrt(2.0 / static_cast<double>(T));
    for (int64_t d = 0; d < A; ++d) {
      double acc = 0.0;
      for (int64_t j = 0; j < T; ++j) {
        acc += x.at(j, d) * std::cos(M_PI * static_cast<double>(f) *
                                     (static_cast<double>(j) + 0.5) /
                                     static_cast<double>(T));
      }
      out.at(f, d) = a * acc;
    }
  }
  return out;
}

struct TrainedVariant {
  ModelBundle bundle;
  std::vector<MetricsRow> rows;
  bool diverged = false;
};

TrainedVariant train_variant(const Dataset& ds, RunConfig cfg, SourceMode mode) {
  cfg.bridge.source_mode = mode;
  Trainer trainer(ds, cfg);
  const TrainResult r = trainer.run();
  return {trainer.bundle(), r.rows, r.diverged};
}

Dataset default_dataset(uint64_t seed, TaskName name = TaskName::kReachWiggle) {
  TaskSpec spec;
  spec.name = name;
  RngStream stream(seed, "data");
  return generate_dataset(spec, stream);
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / "resbridge_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  // ---- 1: spectral correctness -------------------------------------------
  begin(1);
  {
    RngStream s(0, "data");
    double max_rt = 0.0, max_orth = 0.0, max_oracle = 0.0;
    int count = 0;
    for (int64_t T : {1, 2, 4, 16, 33}) {
      const int k = std::max<int>(1, static_cast<int>(T) / 4);
      for (int rep = 0; rep < 200; ++rep) {
        const Tensor x = s.normal_tensor({T, 2});
        const Tensor c = dct_forward(x);
        const Tensor back = dct_inverse(c);
        const Tensor oracle = naive_dct(x);
        for (int64_t i = 0; i < x.size(); ++i) {
          max_rt = std::max(max_rt, std::abs(back[i] - x[i]));
          max_oracle = std::max(max_oracle, std::abs(c[i] - oracle[i]));
        }
        const auto dec = decompose(x, k);
        const double orth = std::abs(dot(dec.semantic, dec.execution));
        max_orth = std::max(max_orth, orth / std::max(squared_norm(x), 1e-300));
        ++count;
      }
    }
    std::ostringstream d;
    d << "roundtrip=" << max_rt << " orth=" << max_orth << " vs_oracle=" << max_oracle
      << " n=" << count;
    report(1, "spectral", max_rt < 1e-9 && max_orth <= 1e-9 && max_oracle < 1e-12, d.str());
  }

  // ---- 2: quantization floor ---------------------------------------------
  begin(2);
  {
    RngStream s(0, "quantization");
    const DiagnosticReport rep = quantization_floor_suite({0.01, 0.1, 1.0}, 1000000, s);
    double worst = 0.0;
    for (const auto& [k, v] : rep.metrics) {
      if (k.find("rel_dev") != std::string::npos) worst = std::max(worst, v);
    }
    report(2, "quantization-floor", rep.passed(),
           "worst rel_dev=" + std::to_string(worst) + " (limit 0.01)");
  }

  // ---- 3: transport cost --------------------------------------------------
  begin(3);
  {
    const Dataset ds = default_dataset(0);
    RunConfig cfg;
    cfg.seed = 0;
    cfg.train.flow_enabled = false;  // anchor-only training
    cfg.optim.total_steps = 2000;
    cfg.optim.warmup_steps = 200;
    cfg.train.eval_every = 2000;
    const TrainedVariant anchor = train_variant(ds, cfg, SourceMode::kAnchored);
    RngStream s(0, "transport");
    const DiagnosticReport rep = transport_cost_report(ds, anchor.bundle, cfg.bridge, s);
    std::ostringstream d;
    d << "ratio=" << rep.metrics.at("cost_ratio")
      << " expansion_dev=" << rep.metrics.at("expansion_rel_dev");
    report(3, "transport-cost", rep.passed(), d.str());
  }

  // ---- 4: gradient fidelity ----------------------------------------------
  begin(4);
  {
    RngStream is(4, "init");
    NormStats norm{Tensor::zeros({2}), Tensor::full({2}, 1.0)};
    ModelBundle b = init_bundle(4, 2, 4, {8}, norm, is);
    RngStream ps(5, "init");
    for (Tensor* p : b.all_params())
      for (int64_t i = 0; i < p->size(); ++i) (*p)[i] += 0.05 * ps.normal();

    RngStream dsr(6, "data");
    const Tensor conds = dsr.normal_tensor({4, 4});
    const Tensor x1 = dsr.normal_tensor({4, 8});
    BridgeConfig bc;
    bc.anchor_stopgrad = false;

    RngStream sn(7, "source-noise"), ts(7, "time-sampling");
    const auto sn_state = sn.state();
    const auto ts_state = ts.state();
    Tape tape;
    const LossGraph g = build_training_loss(tape, b, conds, x1, bc, sn, ts);
    tape.backward(g.total);
    std::vector<Tensor> grads;
    for (Tape::NodeId p : g.anchor_params) grads.push_back(tape.grad(p));
    for (Tape::NodeId p : g.velocity_params) grads.push_back(tape.grad(p));

    auto eval = [&]() {
      RngStream sn2(0, "x"), ts2(0, "x");
      sn2.set_state(sn_state);
      ts2.set_state(ts_state);
      Tape t2;
      return build_training_loss(t2, b, conds, x1, bc, sn2, ts2).parts.total;
    };
    const double h = 1e-6;
    double worst = 0.0;
    int n_checked = 0;
    std::vector<Tensor*> params = b.all_params();
    for (size_t pi = 0; pi < params.size(); ++pi) {
      for (int64_t i = 0; i < params[pi]->size(); ++i) {
        const double orig = (*params[pi])[i];
        (*params[pi])[i] = orig + h;
        const double up = eval();
        (*params[pi])[i] = orig - h;
        const double dn = eval();
        (*params[pi])[i] = orig;
        const double fd = (up - dn) / (2 * h);
        const double rel =
            std::abs(grads[pi][i] - fd) / std::max(std::abs(fd), 1e-6);
        worst = std::max(worst, rel);
        ++n_checked;
      }
    }
    report(4, "gradient-fidelity", worst < 1e-4,
           "worst rel err=" + std::to_string(worst) + " over " +
               std::to_string(n_checked) + " params");
  }

  // ---- 5: oracle exactness ------------------------------------------------
  begin(5);
  {
    RngStream is(8, "init");
    NormStats norm{Tensor::zeros({2}), Tensor::full({2}, 1.0)};
    ModelBundle b = init_bundle(16, 2, 8, {8}, norm, is);
    RngStream dsr(9, "data");
    const Tensor x1 = dsr.normal_tensor({32});
    for (int64_t j = 0; j < 32; ++j) b.velocity.biases.back()[j] = x1[j];
    BridgeConfig bc;
    bc.sigma_min = 0.0;
    const Tensor conds = dsr.normal_tensor({3, 8});
    double worst = 0.0;
    for (int nfe : {1, 4, 16}) {
      RngStream ss(10, "sample");
      const SampleResult res = sample_batch(b, conds, nfe, bc, ss);
      for (int64_t i = 0; i < 3; ++i) {
        for (int64_t j = 0; j < 32; ++j) {
          worst = std::max(worst, std::abs(res.trajectories.at(i, j) - x1[j]));
          worst = std::max(worst,
                           std::abs(res.trajectories.at(i, j) -
                                    (res.anchors.at(i, j) + res.residuals.at(i, j))));
        }
      }
    }

    // the same additivity holds on real cmd_sample output
    const fs::path dir = work / "oracle";
    fs::create_directories(dir);
    save_checkpoint((dir / "ckpt.rvbm").string(), b, {0, 0});
    std::ofstream(dir / "cfg.json") << "{\"task\": {\"sample_count\": 200}}\n";
    bool cli_ok =
        run_cli("gen-data --config " + (dir / "cfg.json").string() + " --out " +
                dir.string()) == 0 &&
        run_cli("sample --checkpoint " + (dir / "ckpt.rvbm").string() + " --dataset " +
                (dir / "dataset.rvb1").string() + " --nfe 4 --count 10 --out " +
                dir.string()) == 0;
    double cli_worst = cli_ok ? 0.0 : 1.0;
    if (cli_ok) {
      std::ifstream f(dir / "samples.csv");
      std::string line;
      while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("index", 0) == 0) continue;
        std::stringstream ls(line);
        std::string cell;
        std::getline(ls, cell, ',');
        std::vector<double> vals;
        while (std::getline(ls, cell, ',')) vals.push_back(std::stod(cell));
        for (int j = 0; j < 32; ++j) {
          cli_worst = std::max(cli_worst, std::abs(vals[j] - (vals[32 + j] + vals[64 + j])));
        }
      }
    }
    report(5, "oracle-exactness", worst < 1e-12 && cli_worst < 1e-12,
           "max dev=" + std::to_string(worst) + " cli dev=" + std::to_string(cli_worst));
  }

  // ---- 6 + 7: training efficacy and convergence A/B ----------------------
  std::vector<TrainedVariant> anchored_by_seed, gaussian_by_seed;
  std::vector<Dataset> ds_by_seed;
  begin(6);
  for (uint64_t seed : {0, 1, 2}) {
    ds_by_seed.push_back(default_dataset(seed));
    RunConfig cfg;
    cfg.seed = seed;
    anchored_by_seed.push_back(train_variant(ds_by_seed.back(), cfg, SourceMode::kAnchored));
    gaussian_by_seed.push_back(train_variant(ds_by_seed.back(), cfg, SourceMode::kGaussian));
  }
  {
    const auto& rows = anchored_by_seed[0].rows;
    const double final_success = rows.empty() ? 0.0 : rows.back().val_success;
    report(6, "training-efficacy", final_success >= 0.90,
           "seed 0 final val_success=" + std::to_string(final_success));
  }
  begin(7);
  {
    bool all = true;
    std::ostringstream d;
    for (size_t i = 0; i < 3; ++i) {
      const int sa = first_step_at_success(anchored_by_seed[i].rows, 0.8);
      const int sg = first_step_at_success(gaussian_by_seed[i].rows, 0.8);
      const double va = sa < 0 ? 1e9 : sa;
      const double vg = sg < 0 ? 1e9 : sg;
      const bool ok = sa >= 0 && va < vg;
      all = all && ok;
      d << "seed" << i << ": anchored=" << sa << " gaussian=" << sg << "; ";
    }
    report(7, "convergence-ab", all, d.str());
  }

  // ---- 8: NFE efficiency --------------------------------------------------
  begin(8);
  {
    const BridgeConfig bc;
    const DiagnosticReport rep =
        nfe_sweep(anchored_by_seed[0].bundle, gaussian_by_seed[0].bundle, ds_by_seed[0],
                  {1, 4, 16}, 0.1, bc, 0);
    const double a1 = rep.metrics.at("anchored_nfe1_success");
    const double g1 = rep.metrics.at("gaussian_nfe1_success");
    const double gap = std::abs(rep.metrics.at("anchored_nfe4_success") -
                                rep.metrics.at("anchored_nfe16_success"));
    std::ostringstream d;
    d << "nfe1 anchored=" << a1 << " gaussian=" << g1 << " | nfe4-vs-16 gap=" << gap;
    report(8, "nfe-efficiency", a1 >= g1 + 0.10 && gap <= 0.02, d.str());
  }

  // ---- 9: loss collapse ---------------------------------------------------
  begin(9);
  {
    const BridgeConfig bc;
    const DiagnosticReport rep =
        loss_collapse_probe(anchored_by_seed[0].bundle, gaussian_by_seed[0].bundle,
                            ds_by_seed[0], {0.01, 0.1, 0.25, 0.5}, bc, 0);
    const double r001 = rep.metrics.at("t_0.010000_ratio");
    const double r05 = rep.metrics.at("t_0.500000_ratio");
    std::ostringstream d;
    d << "ratio(0.01)=" << r001 << " ratio(0.5)=" << r05;
    report(9, "loss-collapse", r001 > 2.0 && r001 > r05, d.str());
  }

  // ---- 10: straightness ---------------------------------------------------
  begin(10);
  {
    const BridgeConfig bc;
    const DiagnosticReport rep =
        straightness_report(anchored_by_seed[0].bundle, gaussian_by_seed[0].bundle,
                            ds_by_seed[0], 32, bc, 0);
    const double da = rep.metrics.at("anchored_deficit");
    const double dg = rep.metrics.at("gaussian_deficit");
    report(10, "straightness", da < dg && da >= -1e-12,
           "anchored=" + std::to_string(da) + " gaussian=" + std::to_string(dg));
  }

  // ---- 11: multimodality / regression-to-mean ----------------------------
  begin(11);
  {
    const Dataset ds = default_dataset(0, TaskName::kTwoMode);
    RunConfig reg_cfg;
    reg_cfg.seed = 0;
    reg_cfg.task.name = TaskName::kTwoMode;
    reg_cfg.train.flow_enabled = false;
    reg_cfg.bridge.cutoff = 16;  // full-trajectory regression head
    reg_cfg.optim.total_steps = 3000;
    reg_cfg.train.eval_every = 3000;
    const TrainedVariant reg = train_variant(ds, reg_cfg, SourceMode::kAnchored);

    RunConfig br_cfg;
    br_cfg.seed = 0;
    br_cfg.task.name = TaskName::kTwoMode;
    const TrainedVariant bridge = train_variant(ds, br_cfg, SourceMode::kAnchored);

    const int64_t n = ds.n_val;
    const Tensor conds = ds.conditions_slice(ds.n_train, n);

    const Tensor reg_pred = denormalize(regression_baseline_predict(reg.bundle, conds),
                                        reg.bundle.norm, 2);
    double reg_err = 0.0;
    std::vector<double> best(static_cast<size_t>(n), 1e18);
    for (int64_t i = 0; i < n; ++i) {
      Tensor traj({32}), cond({8});
      for (int64_t j = 0; j < 32; ++j) traj[j] = reg_pred.at(i, j);
      for (int64_t j = 0; j < 8; ++j) cond[j] = conds.at(i, j);
      reg_err += endpoint_error(ds.spec, traj, cond);
    }
    reg_err /= static_cast<double>(n);

    for (int rep = 0; rep < 8; ++rep) {
      RngStream ss(100 + static_cast<uint64_t>(rep), "sample");
      const SampleResult res = sample_batch(bridge.bundle, conds, 8, br_cfg.bridge, ss);
      const Tensor raw = denormalize(res.trajectories, bridge.bundle.norm, 2);
      for (int64_t i = 0; i < n; ++i) {
        Tensor traj({32}), cond({8});
        for (int64_t j = 0; j < 32; ++j) traj[j] = raw.at(i, j);
        for (int64_t j = 0; j < 8; ++j) cond[j] = conds.at(i, j);
        best[static_cast<size_t>(i)] =
            std::min(best[static_cast<size_t>(i)], endpoint_error(ds.spec, traj, cond));
      }
    }
    double bridge_err = 0.0;
    for (double e : best) bridge_err += e;
    bridge_err /= static_cast<double>(n);

    std::ostringstream d;
    d << "regression=" << reg_err << " bridged best-of-8=" << bridge_err
      << " ratio=" << (bridge_err > 0 ? reg_err / bridge_err : 1e18);
    report(11, "multimodality", reg_err >= 2.0 * bridge_err, d.str());
  }

  // ---- 12: reproducibility ------------------------------------------------
  begin(12);
  {
    const fs::path dir = work / "repro";
    fs::create_directories(dir);
    std::ofstream(dir / "cfg.json")
        << "{\"task\": {\"sample_count\": 4000},"
        << " \"optim\": {\"total_steps\": 500, \"warmup_steps\": 100},"
        << " \"train\": {\"eval_every\": 100}}\n";
    const std::string cfg = (dir / "cfg.json").string();
    bool ok = true;
    for (const char* leg : {"a", "b"}) {
      const std::string o = (dir / leg).string();
      ok = ok && run_cli("gen-data --config " + cfg + " --out " + o) == 0;
      ok = ok && run_cli("train --config " + cfg + " --dataset " + o + "/dataset.rvb1" +
                         " --out " + o) == 0;
      ok = ok && run_cli("diagnose --which quantization --config " + cfg + " --out " + o) == 0;
    }
    std::vector<std::string> mismatched;
    if (ok) {
      for (const char* f :
           {"dataset.rvb1", "dataset.csv", "dataset_stats.json", "metrics.csv",
            "checkpoint.rvbm", "state.rvbt", "metrics_meta.json", "config.json",
            "reports/quantization_floor.json", "reports/quantization_floor.svg"}) {
        if (slurp(dir / "a" / f) != slurp(dir / "b" / f) || slurp(dir / "a" / f).empty()) {
          mismatched.push_back(f);
        }
      }
    }
    std::ostringstream d;
    if (!ok) {
      d << "command failed";
    } else if (mismatched.empty()) {
      d << "10 payload files byte-identical";
    } else {
      d << "mismatch:";
      for (const auto& m : mismatched) d << " " << m;
    }
    report(12, "reproducibility", ok && mismatched.empty(), d.str());
  }

  std::cout << (failures == 0 ? "ALL CRITERIA PASSED" : "FAILURES: " + std::to_string(failures))
            << std::endl;
  return failures == 0 ? 0 : 1;
}
