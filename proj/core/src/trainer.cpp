#include "resbridge/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "resbridge/binio.hpp"

namespace resbridge {

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f.precision(17);
  f << "step,lr,loss_total,loss_sem,loss_flow,val_endpoint_error,val_success\n";
  for (const auto& r : rows) {
    f << r.step << "," << r.lr << "," << r.loss_total << "," << r.loss_sem << ","
      << r.loss_flow << "," << r.val_endpoint_error << "," << r.val_success << "\n";
  }
}

EvalMetrics evaluate_bundle(const ModelBundle& bundle, const Dataset& ds,
                            const BridgeConfig& bridge, int nfe, double tol,
                            uint64_t seed) {
  const int64_t n = ds.n_val;
  if (n < 1) throw std::invalid_argument("empty validation split");
  const Tensor conds = ds.conditions_slice(ds.n_train, n);

  RngStream stream(seed, "eval");
  const SampleResult res = sample_batch(bundle, conds, nfe, bridge, stream);

  const Tensor raw = denormalize(res.trajectories, bundle.norm, bundle.action_dim);
  EvalMetrics m;
  m.per_sample_error.reserve(static_cast<size_t>(n));
  int64_t hits = 0;
  const int64_t ta = raw.cols();
  const int64_t c_dim = conds.cols();
  for (int64_t i = 0; i < n; ++i) {
    Tensor traj({ta});
    for (int64_t j = 0; j < ta; ++j) traj[j] = raw.at(i, j);
    Tensor cond({c_dim});
    for (int64_t j = 0; j < c_dim; ++j) cond[j] = conds.at(i, j);
    const double err = endpoint_error(ds.spec, traj, cond);
    m.per_sample_error.push_back(err);
    m.mean_endpoint_error += err;
    if (err <= tol) ++hits;
  }
  m.mean_endpoint_error /= static_cast<double>(n);
  m.success_rate = static_cast<double>(hits) / static_cast<double>(n);
  return m;
}

namespace {

ModelBundle make_initial_bundle(const Dataset& ds, const RunConfig& cfg) {
  RngStream init_stream(cfg.seed, "init");
  return init_bundle(ds.spec.horizon, ds.spec.action_dim, ds.spec.cond_dim, cfg.hidden,
                     ds.norm, init_stream);
}

std::vector<Tensor*> trainable_params(ModelBundle& bundle, bool flow_enabled) {
  std::vector<Tensor*> params = bundle.anchor.params();
  if (flow_enabled) {
    for (Tensor* p : bundle.velocity.params()) params.push_back(p);
  }
  return params;
}

}  // namespace

Trainer::Trainer(const Dataset& dataset, const RunConfig& config)
    : dataset_(dataset),
      config_(config),
      norm_traj_(normalize(dataset.trajectories, dataset.norm, dataset.spec.action_dim)),
      bundle_(make_initial_bundle(dataset, config)),
      opt_(config.optim, trainable_params(bundle_, config.train.flow_enabled)),
      batch_stream_(config.seed, "batch"),
      source_stream_(config.seed, "source-noise"),
      time_stream_(config.seed, "time-sampling") {}

MetricsRow Trainer::make_row() {
  MetricsRow row;
  row.step = step_;
  row.lr = schedule_lr(config_.optim, step_ - 1);
  const double c = win_count_ > 0 ? static_cast<double>(win_count_) : 1.0;
  row.loss_total = win_total_ / c;
  row.loss_sem = win_sem_ / c;
  row.loss_flow = win_flow_ / c;
  const EvalMetrics ev = evaluate_bundle(bundle_, dataset_, config_.bridge,
                                         config_.train.eval_nfe, config_.train.eval_tol,
                                         config_.seed);
  row.val_endpoint_error = ev.mean_endpoint_error;
  row.val_success = ev.success_rate;
  win_total_ = win_sem_ = win_flow_ = 0.0;
  win_count_ = 0;
  return row;
}

TrainResult Trainer::run(const TrainCallback& callback, int step_limit) {
  TrainResult result;
  const int total = config_.optim.total_steps;
  const int batch = config_.train.batch_size;
  const int64_t ta = norm_traj_.cols();
  const int64_t c_dim = dataset_.conditions.cols();
  const int stop = step_limit >= 0 ? std::min(total, step_ + step_limit) : total;

  while (step_ < stop && !diverged_) {
    // Batch assembly: uniform draws over the train split.
    Tensor conds({batch, c_dim});
    Tensor x1({batch, ta});
    for (int i = 0; i < batch; ++i) {
      const int64_t idx = batch_stream_.uniform_index(dataset_.n_train);
      for (int64_t j = 0; j < c_dim; ++j) conds.at(i, j) = dataset_.conditions.at(idx, j);
      for (int64_t j = 0; j < ta; ++j) x1.at(i, j) = norm_traj_.at(idx, j);
    }

    Tape tape;
    const LossGraph g =
        build_training_loss(tape, bundle_, conds, x1, config_.bridge, source_stream_,
                            time_stream_, nullptr, config_.train.flow_enabled);
    if (!std::isfinite(g.parts.total)) {
      diverged_ = true;
      break;
    }
    tape.backward(g.total);

    std::vector<Tensor> grads;
    for (Tape::NodeId p : g.anchor_params) grads.push_back(tape.grad(p));
    for (Tape::NodeId p : g.velocity_params) grads.push_back(tape.grad(p));

    std::vector<Tensor*> params = trainable_params(bundle_, config_.train.flow_enabled);
    try {
      opt_.step(params, grads);
    } catch (const std::runtime_error&) {
      diverged_ = true;
      break;
    }
    ++step_;

    win_total_ += g.parts.total;
    win_sem_ += g.parts.sem;
    win_flow_ += g.parts.flow;
    ++win_count_;

    if (step_ % config_.train.eval_every == 0 || step_ == total) {
      MetricsRow row = make_row();
      result.rows.push_back(row);
      if (callback) callback(row);
    }
  }
  result.diverged = diverged_;
  result.steps_done = step_;
  return result;
}

namespace {

void write_tensor_vec(ByteWriter& w, const std::vector<Tensor>& ts) {
  w.u32(static_cast<uint32_t>(ts.size()));
  for (const Tensor& t : ts) {
    w.u32(static_cast<uint32_t>(t.size()));
    for (int64_t i = 0; i < t.size(); ++i) w.f64(t[i]);
  }
}

void read_tensor_vec_into(ByteReader& r, std::vector<Tensor>& ts) {
  const uint32_t n = r.u32();
  if (n != ts.size()) throw std::runtime_error("train state tensor count mismatch");
  for (Tensor& t : ts) {
    const uint32_t len = r.u32();
    if (static_cast<int64_t>(len) != t.size()) {
      throw std::runtime_error("train state tensor size mismatch");
    }
    for (int64_t i = 0; i < t.size(); ++i) t[i] = r.f64();
  }
}

void write_stream(ByteWriter& w, const RngStream& s) {
  for (uint64_t v : s.state()) w.u64(v);
}

void read_stream(ByteReader& r, RngStream& s) {
  std::array<uint64_t, 4> st;
  for (auto& v : st) v = r.u64();
  s.set_state(st);
}

}  // namespace

void Trainer::save_state(const std::string& path) const {
  ByteWriter w;
  w.magic("RVBT");
  w.u16(1);
  w.u32(static_cast<uint32_t>(step_));

  const auto ckpt = checkpoint_bytes(bundle_, {config_.hash(), config_.seed});
  w.u32(static_cast<uint32_t>(ckpt.size()));
  w.bytes(ckpt.data(), ckpt.size());

  write_tensor_vec(w, opt_.first_moments());
  write_tensor_vec(w, opt_.second_moments());
  write_stream(w, batch_stream_);
  write_stream(w, source_stream_);
  write_stream(w, time_stream_);
  w.f64(win_total_);
  w.f64(win_sem_);
  w.f64(win_flow_);
  w.u32(static_cast<uint32_t>(win_count_));
  write_file_bytes(path, w.buffer());
}

void Trainer::restore(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes);
  if (r.magic() != "RVBT") throw std::runtime_error("not a training state file: " + path);
  if (r.u16() != 1) throw std::runtime_error("unsupported RVBT version");
  step_ = static_cast<int>(r.u32());

  const uint32_t len = r.u32();
  std::vector<unsigned char> ckpt(len);
  r.bytes(ckpt.data(), len);
  bundle_ = checkpoint_from_bytes(ckpt);

  std::vector<Tensor> m = opt_.first_moments();
  std::vector<Tensor> v = opt_.second_moments();
  read_tensor_vec_into(r, m);
  read_tensor_vec_into(r, v);
  opt_.restore(step_, std::move(m), std::move(v));
  read_stream(r, batch_stream_);
  read_stream(r, source_stream_);
  read_stream(r, time_stream_);
  win_total_ = r.f64();
  win_sem_ = r.f64();
  win_flow_ = r.f64();
  win_count_ = static_cast<int>(r.u32());
}

}  // namespace resbridge
