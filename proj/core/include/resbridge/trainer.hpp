#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "resbridge/bridge.hpp"
#include "resbridge/optimizer.hpp"
#include "resbridge/runconfig.hpp"
#include "resbridge/synth.hpp"

namespace resbridge {

struct MetricsRow {
  int step = 0;  // 1-indexed step count at which the row was logged
  double lr = 0.0;
  double loss_total = 0.0;  // window means since the previous row
  double loss_sem = 0.0;
  double loss_flow = 0.0;
  double val_endpoint_error = 0.0;
  double val_success = 0.0;
};

// Exactly the spec'd metrics CSV: header
// step,lr,loss_total,loss_sem,loss_flow,val_endpoint_error,val_success
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

struct EvalMetrics {
  double mean_endpoint_error = 0.0;
  double success_rate = 0.0;
  std::vector<double> per_sample_error;
};

// Deterministic validation pass: Predict-Refine sampling over the val split
// with a fresh (seed, "eval") stream, errors in raw action units.
EvalMetrics evaluate_bundle(const ModelBundle& bundle, const Dataset& ds,
                            const BridgeConfig& bridge, int nfe, double tol,
                            uint64_t seed);

struct TrainResult {
  std::vector<MetricsRow> rows;
  bool diverged = false;
  int steps_done = 0;
};

using TrainCallback = std::function<void(const MetricsRow&)>;

// Single-owner training loop; deterministic given (dataset, config). State
// (parameters, optimizer moments, stream states, loss window) round-trips
// through save_state/restore so a resumed run continues bit-identically.
class Trainer {
 public:
  Trainer(const Dataset& dataset, const RunConfig& config);

  // Runs until total_steps, or at most step_limit additional steps when
  // step_limit >= 0 (interrupt point for resumable runs).
  TrainResult run(const TrainCallback& callback = {}, int step_limit = -1);

  const ModelBundle& bundle() const { return bundle_; }
  ModelBundle& bundle() { return bundle_; }
  int step() const { return step_; }
  bool diverged() const { return diverged_; }

  void save_state(const std::string& path) const;
  void restore(const std::string& path);

 private:
  MetricsRow make_row();

  const Dataset& dataset_;
  RunConfig config_;
  Tensor norm_traj_;  // [N, T*A], z-scored
  ModelBundle bundle_;
  AdamW opt_;
  RngStream batch_stream_;
  RngStream source_stream_;
  RngStream time_stream_;
  int step_ = 0;
  bool diverged_ = false;
  double win_total_ = 0.0, win_sem_ = 0.0, win_flow_ = 0.0;
  int win_count_ = 0;
};

}  // namespace resbridge
