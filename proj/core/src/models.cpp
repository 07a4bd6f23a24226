#include "resbridge/models.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "resbridge/binio.hpp"

namespace resbridge {

std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(f),
                                    std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::vector<double> time_features(double t) {
  std::vector<double> out;
  out.reserve(kTimeFeatureDim);
  for (double f : {1.0, 2.0, 4.0, 8.0}) {
    out.push_back(std::sin(2.0 * std::numbers::pi * f * t));
    out.push_back(std::cos(2.0 * std::numbers::pi * f * t));
  }
  out.push_back(t);
  return out;
}

std::vector<Tensor*> Mlp::params() {
  std::vector<Tensor*> p;
  for (size_t i = 0; i < weights.size(); ++i) {
    p.push_back(&weights[i]);
    p.push_back(&biases[i]);
  }
  return p;
}

std::vector<const Tensor*> Mlp::params() const {
  std::vector<const Tensor*> p;
  for (size_t i = 0; i < weights.size(); ++i) {
    p.push_back(&weights[i]);
    p.push_back(&biases[i]);
  }
  return p;
}

Tensor Mlp::forward(const Tensor& input) const {
  if (input.cols() != arch.input_dim) {
    throw std::invalid_argument("mlp input width mismatch");
  }
  Tensor h = input.shape().size() == 2 ? input : input.reshaped({1, input.size()});
  for (size_t l = 0; l < weights.size(); ++l) {
    Tensor z = matmul(h, weights[l]);
    for (int64_t i = 0; i < z.rows(); ++i) {
      for (int64_t j = 0; j < z.cols(); ++j) z.at(i, j) += biases[l][j];
    }
    if (l + 1 < weights.size()) {
      for (int64_t i = 0; i < z.size(); ++i) z[i] = std::tanh(z[i]);
    }
    h = std::move(z);
  }
  return h;
}

Tape::NodeId Mlp::forward_on_tape(Tape& tape, Tape::NodeId input,
                                  std::vector<Tape::NodeId>& param_nodes) const {
  Tape::NodeId h = input;
  for (size_t l = 0; l < weights.size(); ++l) {
    Tape::NodeId w = tape.leaf(weights[l]);
    Tape::NodeId b = tape.leaf(biases[l]);
    param_nodes.push_back(w);
    param_nodes.push_back(b);
    h = tape.add_rowvec(tape.matmul(h, w), b);
    if (l + 1 < weights.size()) h = tape.tanh(h);
  }
  return h;
}

Mlp init_mlp(const MlpArch& arch, RngStream& stream) {
  Mlp mlp;
  mlp.arch = arch;
  std::vector<int> dims;
  dims.push_back(arch.input_dim);
  for (int h : arch.hidden) dims.push_back(h);
  dims.push_back(arch.output_dim);

  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    const int64_t fan_in = dims[l], fan_out = dims[l + 1];
    Tensor w({fan_in, fan_out});
    const bool is_output = (l + 2 == dims.size());
    if (!is_output) {
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      for (int64_t i = 0; i < w.size(); ++i) w[i] = (2.0 * stream.uniform() - 1.0) * bound;
    }
    mlp.weights.push_back(std::move(w));
    mlp.biases.push_back(Tensor::zeros({fan_out}));
  }
  return mlp;
}

std::vector<Tensor*> ModelBundle::all_params() {
  std::vector<Tensor*> p = anchor.params();
  for (Tensor* t : velocity.params()) p.push_back(t);
  return p;
}

ModelBundle init_bundle(int horizon, int action_dim, int cond_dim,
                        const std::vector<int>& hidden, const NormStats& norm,
                        RngStream& stream) {
  ModelBundle b;
  b.horizon = horizon;
  b.action_dim = action_dim;
  b.cond_dim = cond_dim;
  b.norm = norm;
  for (int64_t i = 0; i < b.norm.std.size(); ++i) {
    if (!(b.norm.std[i] > 0.0)) throw std::invalid_argument("norm std must be positive");
  }
  const int out = horizon * action_dim;
  b.anchor = init_mlp({cond_dim, hidden, out}, stream);
  b.velocity = init_mlp({out + kTimeFeatureDim + cond_dim, hidden, out}, stream);
  return b;
}

Tensor anchor_predict(const ModelBundle& bundle, const Tensor& conditions) {
  if (conditions.cols() != bundle.cond_dim) {
    throw std::invalid_argument("condition width mismatch");
  }
  return bundle.anchor.forward(conditions);
}

Tensor velocity_predict(const ModelBundle& bundle, const Tensor& xt, double t,
                        const Tensor& conditions) {
  if (t < 0.0 || t > 1.0) throw std::invalid_argument("time out of range");
  if (conditions.cols() != bundle.cond_dim) {
    throw std::invalid_argument("condition width mismatch");
  }
  const int64_t batch = xt.rows();
  const int64_t ta = static_cast<int64_t>(bundle.horizon) * bundle.action_dim;
  if (xt.cols() != ta || conditions.rows() != batch) {
    throw std::invalid_argument("velocity input shape mismatch");
  }
  const auto tf = time_features(t);
  Tensor in({batch, ta + kTimeFeatureDim + bundle.cond_dim});
  for (int64_t i = 0; i < batch; ++i) {
    int64_t off = 0;
    for (int64_t j = 0; j < ta; ++j) in.at(i, off++) = xt.at(i, j);
    for (double v : tf) in.at(i, off++) = v;
    for (int64_t j = 0; j < bundle.cond_dim; ++j) in.at(i, off++) = conditions.at(i, j);
  }
  return bundle.velocity.forward(in);
}

Tensor regression_baseline_predict(const ModelBundle& bundle, const Tensor& conditions) {
  return anchor_predict(bundle, conditions);
}

namespace {

constexpr uint16_t kCheckpointVersion = 1;

void write_tensor(ByteWriter& w, const Tensor& t) {
  w.u16(static_cast<uint16_t>(t.shape().size()));
  for (int64_t d : t.shape()) w.u32(static_cast<uint32_t>(d));
  for (int64_t i = 0; i < t.size(); ++i) w.f64(t[i]);
}

Tensor read_tensor(ByteReader& r) {
  const uint16_t rank = r.u16();
  std::vector<int64_t> shape;
  for (uint16_t i = 0; i < rank; ++i) shape.push_back(r.u32());
  Tensor t(shape);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = r.f64();
  return t;
}

void write_mlp(ByteWriter& w, const Mlp& m) {
  w.u16(static_cast<uint16_t>(m.arch.input_dim));
  w.u16(static_cast<uint16_t>(m.arch.hidden.size()));
  for (int h : m.arch.hidden) w.u16(static_cast<uint16_t>(h));
  w.u16(static_cast<uint16_t>(m.arch.output_dim));
  for (size_t l = 0; l < m.weights.size(); ++l) {
    write_tensor(w, m.weights[l]);
    write_tensor(w, m.biases[l]);
  }
}

Mlp read_mlp(ByteReader& r) {
  Mlp m;
  m.arch.input_dim = r.u16();
  const uint16_t nh = r.u16();
  for (uint16_t i = 0; i < nh; ++i) m.arch.hidden.push_back(r.u16());
  m.arch.output_dim = r.u16();
  for (uint16_t l = 0; l < nh + 1; ++l) {
    m.weights.push_back(read_tensor(r));
    m.biases.push_back(read_tensor(r));
  }
  return m;
}

}  // namespace

std::vector<unsigned char> checkpoint_bytes(const ModelBundle& bundle,
                                            const CheckpointMeta& meta) {
  ByteWriter w;
  w.magic("RVBM");
  w.u16(kCheckpointVersion);
  w.u64(meta.config_hash);
  w.u64(meta.seed);
  w.u16(static_cast<uint16_t>(bundle.horizon));
  w.u16(static_cast<uint16_t>(bundle.action_dim));
  w.u16(static_cast<uint16_t>(bundle.cond_dim));
  write_tensor(w, bundle.norm.mean);
  write_tensor(w, bundle.norm.std);
  write_mlp(w, bundle.anchor);
  write_mlp(w, bundle.velocity);
  return w.buffer();
}

void save_checkpoint(const std::string& path, const ModelBundle& bundle,
                     const CheckpointMeta& meta) {
  write_file_bytes(path, checkpoint_bytes(bundle, meta));
}

ModelBundle checkpoint_from_bytes(const std::vector<unsigned char>& bytes,
                                  CheckpointMeta* meta) {
  ByteReader r(bytes);
  if (r.magic() != "RVBM") throw std::runtime_error("not an RVBM checkpoint");
  if (r.u16() != kCheckpointVersion) throw std::runtime_error("unsupported RVBM version");
  CheckpointMeta m;
  m.config_hash = r.u64();
  m.seed = r.u64();
  ModelBundle b;
  b.horizon = r.u16();
  b.action_dim = r.u16();
  b.cond_dim = r.u16();
  b.norm.mean = read_tensor(r);
  b.norm.std = read_tensor(r);
  b.anchor = read_mlp(r);
  b.velocity = read_mlp(r);
  if (meta) *meta = m;
  return b;
}

ModelBundle load_checkpoint(const std::string& path, CheckpointMeta* meta) {
  return checkpoint_from_bytes(read_file_bytes(path), meta);
}

Tensor normalize(const Tensor& traj_rows, const NormStats& norm, int action_dim) {
  Tensor out = traj_rows;
  for (int64_t i = 0; i < out.size(); ++i) {
    const int64_t a = i % action_dim;
    out[i] = (out[i] - norm.mean[a]) / norm.std[a];
  }
  return out;
}

Tensor denormalize(const Tensor& traj_rows, const NormStats& norm, int action_dim) {
  Tensor out = traj_rows;
  for (int64_t i = 0; i < out.size(); ++i) {
    const int64_t a = i % action_dim;
    out[i] = out[i] * norm.std[a] + norm.mean[a];
  }
  return out;
}

}  // namespace resbridge
