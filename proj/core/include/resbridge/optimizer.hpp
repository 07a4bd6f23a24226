#pragma once

#include <cstdint>
#include <vector>

#include "resbridge/tensor.hpp"

namespace resbridge {

struct OptimizerConfig {
  double base_lr = 2.5e-5;
  // Per-group multiplier applied on top of base_lr. The toy networks all sit
  // in the "action model" group; the multiplier brings the effective rate to
  // MLP scale (base 2.5e-5 targets a 2B-parameter backbone).
  double lr_scale = 40.0;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 1e-8;
  double eps = 1e-8;
  int warmup_steps = 500;
  int total_steps = 5000;
  double clip_norm = 1.0;
};

// Learning-rate schedule: linear warmup on a 1-indexed step, then cosine
// decay to exactly 0 at total_steps. lr(warmup end) == base_lr * lr_scale.
double schedule_lr(const OptimizerConfig& cfg, int step);

// Scales all gradients in place so their global l2 norm is at most
// clip_norm; identity when already within the bound. Returns the pre-clip
// norm. Throws "non-finite gradient" on NaN/inf.
double clip_global_norm(std::vector<Tensor>& grads, double clip_norm);

// AdamW with decoupled weight decay over a fixed list of parameter tensors.
class AdamW {
 public:
  AdamW(OptimizerConfig cfg, const std::vector<Tensor*>& params);

  // Clips, then applies one update at the scheduled learning rate.
  void step(const std::vector<Tensor*>& params, std::vector<Tensor>& grads);

  int step_count() const { return step_; }
  const OptimizerConfig& config() const { return cfg_; }

  // Serialization hooks for training-state checkpoints.
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void restore(int step, std::vector<Tensor> m, std::vector<Tensor> v);

 private:
  OptimizerConfig cfg_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  int step_ = 0;
};

}  // namespace resbridge
