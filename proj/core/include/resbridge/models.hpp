#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "resbridge/autodiff.hpp"
#include "resbridge/rng.hpp"
#include "resbridge/tensor.hpp"

namespace resbridge {

// Sinusoidal time embedding: [sin(2*pi*f*t), cos(2*pi*f*t)] for
// f in {1,2,4,8}, plus raw t. 9 values.
constexpr int kTimeFeatureDim = 9;
std::vector<double> time_features(double t);

struct MlpArch {
  int input_dim = 0;
  std::vector<int> hidden;  // tanh activations
  int output_dim = 0;
};

// Weights in declaration order: (W0, b0, W1, b1, ..., Wout, bout).
// W is [in, out]; hidden layers Xavier-uniform, output layer zero-init.
struct Mlp {
  MlpArch arch;
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;

  std::vector<Tensor*> params();
  std::vector<const Tensor*> params() const;
  // Plain forward, no tape: input [B, in] -> [B, out].
  Tensor forward(const Tensor& input) const;
  // Tape forward; registers all parameters as leaves and appends their node
  // ids to param_nodes in declaration order.
  Tape::NodeId forward_on_tape(Tape& tape, Tape::NodeId input,
                               std::vector<Tape::NodeId>& param_nodes) const;
};

Mlp init_mlp(const MlpArch& arch, RngStream& stream);

struct NormStats {
  Tensor mean;  // [A]
  Tensor std;   // [A], strictly positive
};

// The two learnable components plus everything needed to run them.
struct ModelBundle {
  int horizon = 0;    // T
  int action_dim = 0; // A
  int cond_dim = 0;   // C
  Mlp anchor;         // cond -> T*A  (mu_prior)
  Mlp velocity;       // [flatten(x_t) | time_features(t) | cond] -> T*A
  NormStats norm;

  std::vector<Tensor*> all_params();  // anchor params then velocity params
};

ModelBundle init_bundle(int horizon, int action_dim, int cond_dim,
                        const std::vector<int>& hidden, const NormStats& norm,
                        RngStream& stream);

// mu_prior(c): [B, C] -> [B, T*A], normalized units.
Tensor anchor_predict(const ModelBundle& bundle, const Tensor& conditions);

// v_theta(x_t, t, c): x_t [B, T*A], shared scalar t in [0, 1], c [B, C].
// Throws "time out of range" outside [0, 1].
Tensor velocity_predict(const ModelBundle& bundle, const Tensor& xt, double t,
                        const Tensor& conditions);

// Full-trajectory deterministic regression head (a bundle trained with
// cutoff = T and the flow term disabled); shares the anchor topology.
Tensor regression_baseline_predict(const ModelBundle& bundle, const Tensor& conditions);

// RVBM checkpoint: magic "RVBM", version u16, provenance (config hash u64,
// seed u64), arch descriptor, norm stats, parameter tensors in declaration
// order, little-endian f64. Layout documented in docs/FORMATS.md.
struct CheckpointMeta {
  uint64_t config_hash = 0;
  uint64_t seed = 0;
};

std::vector<unsigned char> checkpoint_bytes(const ModelBundle& bundle,
                                            const CheckpointMeta& meta);
ModelBundle checkpoint_from_bytes(const std::vector<unsigned char>& bytes,
                                  CheckpointMeta* meta = nullptr);
void save_checkpoint(const std::string& path, const ModelBundle& bundle,
                     const CheckpointMeta& meta);
ModelBundle load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

Tensor normalize(const Tensor& traj_rows, const NormStats& norm, int action_dim);
Tensor denormalize(const Tensor& traj_rows, const NormStats& norm, int action_dim);

}  // namespace resbridge
