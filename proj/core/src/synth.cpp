#include "resbridge/synth.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "resbridge/binio.hpp"
#include "resbridge/hash.hpp"

namespace resbridge {

std::string task_name_str(TaskName n) {
  return n == TaskName::kReachWiggle ? "reach-wiggle" : "two-mode";
}

TaskName task_name_from_str(const std::string& s) {
  if (s == "reach-wiggle") return TaskName::kReachWiggle;
  if (s == "two-mode") return TaskName::kTwoMode;
  throw std::invalid_argument("unknown task name: " + s);
}

Tensor Dataset::condition_row(int64_t i) const { return conditions_slice(i, 1); }
Tensor Dataset::trajectory_row(int64_t i) const { return trajectories_slice(i, 1); }

Tensor Dataset::conditions_slice(int64_t begin, int64_t rows) const {
  const int64_t c = conditions.cols();
  Tensor out({rows, c});
  for (int64_t i = 0; i < rows * c; ++i) out[i] = conditions[begin * c + i];
  return out;
}

Tensor Dataset::trajectories_slice(int64_t begin, int64_t rows) const {
  const int64_t c = trajectories.cols();
  Tensor out({rows, c});
  for (int64_t i = 0; i < rows * c; ++i) out[i] = trajectories[begin * c + i];
  return out;
}

namespace {

void validate_spec(const TaskSpec& spec) {
  if (spec.horizon < 1 || spec.action_dim < 1) throw std::invalid_argument("bad dims");
  if (spec.cond_dim < 2 * spec.action_dim + 2) {
    throw std::invalid_argument("condition width too small");
  }
  if (spec.m_hf >= spec.horizon) throw std::invalid_argument("jitter frequency out of band");
  if (spec.a_hf < 0.0) throw std::invalid_argument("jitter amplitude must be >= 0");
  if (spec.sample_count < 1) throw std::invalid_argument("sample count must be >= 1");
}

double smoothstep(double u) { return u * u * (3.0 - 2.0 * u); }

// Quadrature pair (cos phi, sin phi, cos phi, ...) so the jitter is a pure
// DCT mode of index m_hf with total energy A * T * a_hf^2 / 2 for even A,
// while still depending on the condition through phi.
double quadrature(double phi, int a) {
  return (a % 2 == 0) ? std::cos(phi) : std::sin(phi);
}

void fill_trajectory(const TaskSpec& spec, const double* p0, const double* goal,
                     double phi, RngStream& stream, double* out) {
  const int t_len = spec.horizon, a_dims = spec.action_dim;
  for (int j = 0; j < t_len; ++j) {
    const double u = (t_len == 1) ? 1.0 : static_cast<double>(j) / (t_len - 1);
    const double s = smoothstep(u);
    const double mode = std::cos(std::numbers::pi * spec.m_hf * (j + 0.5) / t_len);
    for (int a = 0; a < a_dims; ++a) {
      double v = p0[a] + (goal[a] - p0[a]) * s;
      v += std::numbers::sqrt2 * spec.a_hf * quadrature(phi, a) * mode;
      v += spec.noise_floor * stream.normal();
      out[j * a_dims + a] = v;
    }
  }
}

NormStats compute_norm(const Tensor& trajectories, int64_t n_train, int a_dims) {
  NormStats norm;
  norm.mean = Tensor::zeros({a_dims});
  norm.std = Tensor::zeros({a_dims});
  const int64_t cols = trajectories.cols();
  const int64_t per_dim = n_train * (cols / a_dims);
  for (int64_t i = 0; i < n_train * cols; ++i) norm.mean[i % a_dims] += trajectories[i];
  for (int a = 0; a < a_dims; ++a) norm.mean[a] /= static_cast<double>(per_dim);
  for (int64_t i = 0; i < n_train * cols; ++i) {
    const double d = trajectories[i] - norm.mean[i % a_dims];
    norm.std[i % a_dims] += d * d;
  }
  for (int a = 0; a < a_dims; ++a) {
    norm.std[a] = std::sqrt(norm.std[a] / static_cast<double>(per_dim));
    if (norm.std[a] < 1e-8) norm.std[a] = 1e-8;
  }
  return norm;
}

Dataset generate_impl(const TaskSpec& spec, RngStream& stream, bool two_mode) {
  validate_spec(spec);
  const int n = spec.sample_count, t_len = spec.horizon, a_dims = spec.action_dim;
  const int c_dim = spec.cond_dim;

  Dataset ds;
  ds.spec = spec;
  ds.conditions = Tensor({n, c_dim});
  ds.trajectories = Tensor({n, static_cast<int64_t>(t_len) * a_dims});

  std::vector<double> p0(a_dims), goal(a_dims);
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < a_dims; ++a) p0[a] = 2.0 * stream.uniform() - 1.0;
    for (int a = 0; a < a_dims; ++a) goal[a] = 2.0 * stream.uniform() - 1.0;
    const double phi = 2.0 * std::numbers::pi * stream.uniform();

    if (two_mode) {
      // Canonical goal: norm at least 0.5, first coordinate non-negative.
      double g2 = 0.0;
      for (int a = 0; a < a_dims; ++a) g2 += goal[a] * goal[a];
      double gn = std::sqrt(g2);
      if (gn < 1e-6) {
        goal[0] = 0.5;
        gn = 0.5;
      } else if (gn < 0.5) {
        for (int a = 0; a < a_dims; ++a) goal[a] *= 0.5 / gn;
      }
      if (goal[0] < 0.0) {
        for (int a = 0; a < a_dims; ++a) goal[a] = -goal[a];
      }
    }

    double* cond = ds.conditions.data() + static_cast<int64_t>(i) * c_dim;
    for (int a = 0; a < a_dims; ++a) cond[a] = p0[a];
    for (int a = 0; a < a_dims; ++a) cond[a_dims + a] = goal[a];
    cond[2 * a_dims] = std::cos(phi);
    cond[2 * a_dims + 1] = std::sin(phi);
    for (int j = 2 * a_dims + 2; j < c_dim; ++j) cond[j] = 0.0;

    std::vector<double> target = goal;
    if (two_mode && stream.uniform() < 0.5) {
      for (int a = 0; a < a_dims; ++a) target[a] = -goal[a];
    }
    fill_trajectory(spec, p0.data(), target.data(), phi, stream,
                    ds.trajectories.data() + static_cast<int64_t>(i) * t_len * a_dims);
  }

  ds.n_val = static_cast<int64_t>(std::llround(spec.val_fraction * n));
  ds.n_train = n - ds.n_val;
  ds.norm = compute_norm(ds.trajectories, ds.n_train, a_dims);
  return ds;
}

}  // namespace

Dataset gen_reach_wiggle(const TaskSpec& spec, RngStream& stream) {
  if (spec.name != TaskName::kReachWiggle) throw std::invalid_argument("task name mismatch");
  return generate_impl(spec, stream, false);
}

Dataset gen_two_mode(const TaskSpec& spec, RngStream& stream) {
  if (spec.name != TaskName::kTwoMode) throw std::invalid_argument("task name mismatch");
  return generate_impl(spec, stream, true);
}

Dataset generate_dataset(const TaskSpec& spec, RngStream& stream) {
  return spec.name == TaskName::kReachWiggle ? gen_reach_wiggle(spec, stream)
                                             : gen_two_mode(spec, stream);
}

double endpoint_error(const TaskSpec& spec, const Tensor& traj_flat, const Tensor& cond) {
  const int a_dims = spec.action_dim;
  const int64_t ta = static_cast<int64_t>(spec.horizon) * a_dims;
  if (traj_flat.size() != ta) throw std::invalid_argument("trajectory size mismatch");
  const int64_t last = ta - a_dims;

  double plus = 0.0, minus = 0.0;
  for (int a = 0; a < a_dims; ++a) {
    const double p = traj_flat[last + a];
    const double g = cond[a_dims + a];
    plus += (p - g) * (p - g);
    minus += (p + g) * (p + g);
  }
  if (spec.name == TaskName::kTwoMode) return std::sqrt(std::min(plus, minus));
  return std::sqrt(plus);
}

bool success(const TaskSpec& spec, const Tensor& traj_flat, const Tensor& cond, double tol) {
  return endpoint_error(spec, traj_flat, cond) <= tol;
}

std::vector<unsigned char> dataset_bytes(const Dataset& ds) {
  ByteWriter payload;
  payload.u32(static_cast<uint32_t>(ds.conditions.rows()));
  payload.u16(static_cast<uint16_t>(ds.spec.horizon));
  payload.u16(static_cast<uint16_t>(ds.spec.action_dim));
  payload.u16(static_cast<uint16_t>(ds.spec.cond_dim));
  for (int64_t a = 0; a < ds.norm.mean.size(); ++a) payload.f64(ds.norm.mean[a]);
  for (int64_t a = 0; a < ds.norm.std.size(); ++a) payload.f64(ds.norm.std[a]);
  for (int64_t i = 0; i < ds.conditions.size(); ++i) payload.f64(ds.conditions[i]);
  for (int64_t i = 0; i < ds.trajectories.size(); ++i) payload.f64(ds.trajectories[i]);

  ByteWriter w;
  w.magic("RVB1");
  w.u16(1);
  w.bytes(payload.buffer().data(), payload.size());
  w.u32(crc32(payload.buffer().data(), payload.size()));
  return w.buffer();
}

void write_dataset(const std::string& path, const Dataset& ds) {
  write_file_bytes(path, dataset_bytes(ds));
}

Dataset read_dataset(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes);
  if (r.magic() != "RVB1") throw std::runtime_error("not an RVB1 dataset: " + path);
  if (r.u16() != 1) throw std::runtime_error("unsupported RVB1 version");
  if (r.remaining() < 4) throw std::runtime_error("truncated file");
  const size_t payload_len = r.remaining() - 4;
  const uint32_t expected = crc32(r.cursor(), payload_len);

  Dataset ds;
  const uint32_t n = r.u32();
  ds.spec.horizon = r.u16();
  ds.spec.action_dim = r.u16();
  ds.spec.cond_dim = r.u16();
  ds.spec.sample_count = static_cast<int>(n);
  ds.norm.mean = Tensor::zeros({ds.spec.action_dim});
  ds.norm.std = Tensor::zeros({ds.spec.action_dim});
  for (int64_t a = 0; a < ds.spec.action_dim; ++a) ds.norm.mean[a] = r.f64();
  for (int64_t a = 0; a < ds.spec.action_dim; ++a) ds.norm.std[a] = r.f64();
  ds.conditions = Tensor({n, ds.spec.cond_dim});
  for (int64_t i = 0; i < ds.conditions.size(); ++i) ds.conditions[i] = r.f64();
  ds.trajectories =
      Tensor({n, static_cast<int64_t>(ds.spec.horizon) * ds.spec.action_dim});
  for (int64_t i = 0; i < ds.trajectories.size(); ++i) ds.trajectories[i] = r.f64();
  const uint32_t stored = r.u32();
  if (stored != expected) throw std::runtime_error("RVB1 CRC mismatch: " + path);

  ds.n_val = static_cast<int64_t>(std::llround(ds.spec.val_fraction * n));
  ds.n_train = n - ds.n_val;
  return ds;
}

void export_dataset_csv(const std::string& path, const Dataset& ds) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f.precision(17);
  f << "index,split";
  for (int64_t j = 0; j < ds.conditions.cols(); ++j) f << ",c" << j;
  for (int j = 0; j < ds.spec.horizon; ++j) {
    for (int a = 0; a < ds.spec.action_dim; ++a) f << ",x" << j << "_" << a;
  }
  f << "\n";
  for (int64_t i = 0; i < ds.conditions.rows(); ++i) {
    f << i << "," << (i < ds.n_train ? "train" : "val");
    for (int64_t j = 0; j < ds.conditions.cols(); ++j) f << "," << ds.conditions.at(i, j);
    for (int64_t j = 0; j < ds.trajectories.cols(); ++j) f << "," << ds.trajectories.at(i, j);
    f << "\n";
  }
}

}  // namespace resbridge
