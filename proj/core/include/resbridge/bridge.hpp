#pragma once

#include <optional>
#include <vector>

#include "resbridge/autodiff.hpp"
#include "resbridge/models.hpp"
#include "resbridge/rng.hpp"
#include "resbridge/tensor.hpp"

namespace resbridge {

enum class SourceMode {
  kAnchored,  // N(mu_prior(c), sigma_min^2 I)
  kGaussian,  // N(0, I), generation-from-noise baseline
};

struct BridgeConfig {
  double sigma_min = 0.1;
  double lambda_sem = 1.0;
  int cutoff = 4;
  SourceMode source_mode = SourceMode::kAnchored;
  // When true the flow term sees x0 as a constant w.r.t. anchor parameters;
  // the anchor is trained by the semantic term only.
  bool anchor_stopgrad = true;
};

// One realized training tuple on the displacement-interpolation path.
struct BridgeSample {
  Tensor x0;
  Tensor x1;
  double t = 0.0;
  Tensor xt;  // (1-t)*x0 + t*x1
  Tensor ut;  // x1 - x0
};

// Source draw. Anchored: mu_prior + sigma_min * eps. Gaussian: a pure
// standard-normal draw of the same shape (mu_prior and sigma_min unused).
// Always consumes exactly size(mu_prior) normals from the stream.
Tensor make_source(const Tensor& mu_prior, const BridgeConfig& config, RngStream& stream);

// (1-t)*x0 + t*x1; throws "time out of range" outside [0, 1].
Tensor interpolate(const Tensor& x0, const Tensor& x1, double t);

// Constant target velocity x1 - x0.
Tensor target_velocity(const Tensor& x0, const Tensor& x1);

BridgeSample make_bridge_sample(const Tensor& x0, const Tensor& x1, double t);

// Squared Frobenius distance; the kinetic cost of the straight path.
double kinetic_cost(const Tensor& x0, const Tensor& x1);

struct LossParts {
  double total = 0.0;
  double sem = 0.0;
  double flow = 0.0;
};

// Handles into the loss graph built by build_training_loss.
struct LossGraph {
  Tape::NodeId total = -1;
  Tape::NodeId sem = -1;
  Tape::NodeId flow = -1;
  Tape::NodeId conditions = -1;  // leaf, for condition-input gradient probes
  std::vector<Tape::NodeId> anchor_params;
  std::vector<Tape::NodeId> velocity_params;
  std::vector<double> ts;  // realized per-sample times
  LossParts parts;
};

// Builds the full objective on the tape for one batch:
//   total = lambda_sem * mean||mu_prior - x_S(x1, k)||^2
//         + mean||v_theta(x_t, t, c) - (x1 - x0)||^2
// with x0 drawn per config and t ~ U(0,1) per sample (or fixed_t).
// conds is [B, C]; x1 is [B, T*A] in normalized units. Stream consumption per
// batch: B*T*A source normals first, then B time uniforms.
// With flow_enabled = false only the semantic term is built (total =
// lambda_sem * sem), realizing the regression-only baseline.
LossGraph build_training_loss(Tape& tape, const ModelBundle& bundle, const Tensor& conds,
                              const Tensor& x1, const BridgeConfig& config,
                              RngStream& source_noise, RngStream& time_sampling,
                              const std::vector<double>* fixed_t = nullptr,
                              bool flow_enabled = true);

// Evaluation-only wrapper; throws "diverged" on non-finite loss.
LossParts training_loss(const ModelBundle& bundle, const Tensor& conds, const Tensor& x1,
                        const BridgeConfig& config, RngStream& source_noise,
                        RngStream& time_sampling);

struct SampleResult {
  Tensor trajectories;  // [B, T*A] normalized units
  Tensor anchors;       // [B, T*A] mu_prior(c)
  Tensor residuals;     // trajectories - anchors, accumulated separately
  int net_evals = 0;    // velocity-field evaluations per sample (== nfe)
};

// Predict-Refine sampling: x <- source(anchor(c)); then nfe uniform Euler
// steps x <- x + v_theta(x, i/nfe, c)/nfe. Optionally records the state after
// every step (path_out gets nfe+1 states per sample, x0 first) for
// straightness analysis. Throws "sampler diverged" on non-finite state.
SampleResult sample_batch(const ModelBundle& bundle, const Tensor& conds, int nfe,
                          const BridgeConfig& config, RngStream& stream,
                          std::vector<Tensor>* path_out = nullptr);

}  // namespace resbridge
