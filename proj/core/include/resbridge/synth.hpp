#pragma once

#include <cstdint>
#include <string>

#include "resbridge/models.hpp"
#include "resbridge/rng.hpp"
#include "resbridge/tensor.hpp"

namespace resbridge {

enum class TaskName { kReachWiggle, kTwoMode };

std::string task_name_str(TaskName n);
TaskName task_name_from_str(const std::string& s);

struct TaskSpec {
  TaskName name = TaskName::kReachWiggle;
  int horizon = 16;     // T
  int action_dim = 2;   // A
  int cond_dim = 8;     // >= 2*A + 2: [p0, p1, cos(phi), sin(phi), zeros]
  double a_hf = 0.2;    // jitter amplitude
  int m_hf = 14;        // jitter frequency index, must stay below T
  double noise_floor = 0.01;
  int sample_count = 20000;
  double val_fraction = 0.1;
};

struct Dataset {
  TaskSpec spec;
  Tensor conditions;    // [N, C]
  Tensor trajectories;  // [N, T*A], raw action units
  NormStats norm;       // per-action-dimension stats over the train split
  int64_t n_train = 0;
  int64_t n_val = 0;    // val rows are the trailing n_val rows

  Tensor condition_row(int64_t i) const;
  Tensor trajectory_row(int64_t i) const;
  // [rows, C] / [rows, T*A] slices; val split starts at n_train.
  Tensor conditions_slice(int64_t begin, int64_t rows) const;
  Tensor trajectories_slice(int64_t begin, int64_t rows) const;
};

// Smoothstep reach with a condition-phased pure high-frequency DCT mode on
// top, plus Gaussian observation noise. Deterministic in (spec, stream).
Dataset gen_reach_wiggle(const TaskSpec& spec, RngStream& stream);

// Same construction, but each condition admits two equally likely mirror
// goals (+g / -g); the condition stores only the canonical goal.
Dataset gen_two_mode(const TaskSpec& spec, RngStream& stream);

Dataset generate_dataset(const TaskSpec& spec, RngStream& stream);

// Distance from the trajectory's final action point to the (nearest) goal
// decoded from the condition, raw units.
double endpoint_error(const TaskSpec& spec, const Tensor& traj_flat, const Tensor& cond);
bool success(const TaskSpec& spec, const Tensor& traj_flat, const Tensor& cond,
             double tol = 0.1);

// RVB1 container: magic "RVB1", version u16, little-endian; header
// {N u32, T u16, A u16, C u16}; norm stats (2*A f64); conditions (N*C f64);
// trajectories (N*T*A f64); trailing CRC32 of the payload.
void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);
std::vector<unsigned char> dataset_bytes(const Dataset& ds);

// Plain CSV mirror of the same values, one sample per row.
void export_dataset_csv(const std::string& path, const Dataset& ds);

}  // namespace resbridge
