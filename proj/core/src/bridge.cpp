#include "resbridge/bridge.hpp"

#include <cmath>
#include <stdexcept>

#include "resbridge/spectral.hpp"

namespace resbridge {

Tensor make_source(const Tensor& mu_prior, const BridgeConfig& config, RngStream& stream) {
  Tensor eps = stream.normal_tensor(mu_prior.shape());
  if (config.source_mode == SourceMode::kGaussian) return eps;
  return axpy(config.sigma_min, eps, mu_prior);
}

Tensor interpolate(const Tensor& x0, const Tensor& x1, double t) {
  if (t < 0.0 || t > 1.0) throw std::invalid_argument("time out of range");
  Tensor r = x0;
  for (int64_t i = 0; i < r.size(); ++i) r[i] = (1.0 - t) * x0[i] + t * x1[i];
  return r;
}

Tensor target_velocity(const Tensor& x0, const Tensor& x1) { return sub(x1, x0); }

BridgeSample make_bridge_sample(const Tensor& x0, const Tensor& x1, double t) {
  return {x0, x1, t, interpolate(x0, x1, t), target_velocity(x0, x1)};
}

double kinetic_cost(const Tensor& x0, const Tensor& x1) {
  return squared_norm(sub(x1, x0));
}

LossGraph build_training_loss(Tape& tape, const ModelBundle& bundle, const Tensor& conds,
                              const Tensor& x1, const BridgeConfig& config,
                              RngStream& source_noise, RngStream& time_sampling,
                              const std::vector<double>* fixed_t, bool flow_enabled) {
  const int64_t batch = conds.rows();
  const int64_t ta = static_cast<int64_t>(bundle.horizon) * bundle.action_dim;
  if (batch < 1) throw std::invalid_argument("batch must be non-empty");
  if (x1.rows() != batch || x1.cols() != ta) {
    throw std::invalid_argument("trajectory batch shape mismatch");
  }

  LossGraph g;
  g.conditions = tape.leaf(conds);
  Tape::NodeId mu = bundle.anchor.forward_on_tape(tape, g.conditions, g.anchor_params);

  // Semantic target: low-pass component of each ground-truth trajectory.
  Tensor xs({batch, ta});
  for (int64_t i = 0; i < batch; ++i) {
    Tensor traj({bundle.horizon, bundle.action_dim});
    for (int64_t j = 0; j < ta; ++j) traj[j] = x1.at(i, j);
    const auto dec = decompose(traj, config.cutoff);
    for (int64_t j = 0; j < ta; ++j) xs.at(i, j) = dec.semantic[j];
  }
  g.sem = tape.mean_sq(tape.sub(mu, tape.leaf(std::move(xs))));

  if (!flow_enabled) {
    g.total = tape.scale(g.sem, config.lambda_sem);
    g.parts.sem = tape.value(g.sem)[0];
    g.parts.total = tape.value(g.total)[0];
    return g;
  }

  // Source construction. Stream consumption: B*T*A normals, then B uniforms.
  const Tensor eps = source_noise.normal_tensor({batch, ta});
  Tape::NodeId x0;
  if (config.source_mode == SourceMode::kGaussian) {
    x0 = tape.leaf(eps);
  } else {
    Tape::NodeId mu_src = config.anchor_stopgrad ? tape.detach(mu) : mu;
    x0 = tape.add(mu_src, tape.leaf(scale(eps, config.sigma_min)));
  }

  g.ts.resize(static_cast<size_t>(batch));
  for (int64_t i = 0; i < batch; ++i) {
    g.ts[static_cast<size_t>(i)] = fixed_t ? (*fixed_t)[static_cast<size_t>(i)]
                                           : time_sampling.uniform();
  }

  // x_t = (1-t) x0 + t x1 and u_t = x1 - x0, per row.
  Tensor tx1({batch, ta});
  std::vector<double> one_minus_t(static_cast<size_t>(batch));
  for (int64_t i = 0; i < batch; ++i) {
    const double t = g.ts[static_cast<size_t>(i)];
    one_minus_t[static_cast<size_t>(i)] = 1.0 - t;
    for (int64_t j = 0; j < ta; ++j) tx1.at(i, j) = t * x1.at(i, j);
  }
  Tape::NodeId xt = tape.add(tape.scale_rows(x0, std::move(one_minus_t)),
                             tape.leaf(std::move(tx1)));
  Tape::NodeId ut = tape.sub(tape.leaf(x1), x0);

  Tensor tf({batch, kTimeFeatureDim});
  for (int64_t i = 0; i < batch; ++i) {
    const auto f = time_features(g.ts[static_cast<size_t>(i)]);
    for (int64_t j = 0; j < kTimeFeatureDim; ++j) tf.at(i, j) = f[static_cast<size_t>(j)];
  }
  Tape::NodeId vin = tape.concat_cols({xt, tape.leaf(std::move(tf)), g.conditions});
  Tape::NodeId v = bundle.velocity.forward_on_tape(tape, vin, g.velocity_params);

  g.flow = tape.mean_sq(tape.sub(v, ut));
  g.total = tape.add(tape.scale(g.sem, config.lambda_sem), g.flow);
  g.parts.sem = tape.value(g.sem)[0];
  g.parts.flow = tape.value(g.flow)[0];
  g.parts.total = tape.value(g.total)[0];
  return g;
}

LossParts training_loss(const ModelBundle& bundle, const Tensor& conds, const Tensor& x1,
                        const BridgeConfig& config, RngStream& source_noise,
                        RngStream& time_sampling) {
  Tape tape;
  const LossGraph g =
      build_training_loss(tape, bundle, conds, x1, config, source_noise, time_sampling);
  if (!std::isfinite(g.parts.total)) throw std::runtime_error("diverged");
  return g.parts;
}

SampleResult sample_batch(const ModelBundle& bundle, const Tensor& conds, int nfe,
                          const BridgeConfig& config, RngStream& stream,
                          std::vector<Tensor>* path_out) {
  if (nfe < 1) throw std::invalid_argument("nfe must be >= 1");
  const int64_t batch = conds.rows();
  const int64_t ta = static_cast<int64_t>(bundle.horizon) * bundle.action_dim;

  SampleResult out;
  out.anchors = anchor_predict(bundle, conds);
  Tensor x = make_source(out.anchors, config, stream);
  // Residual accumulator: everything added on top of the anchor.
  out.residuals = sub(x, out.anchors);

  if (path_out) {
    path_out->clear();
    path_out->push_back(x);
  }

  const double dt = 1.0 / nfe;
  for (int i = 0; i < nfe; ++i) {
    const double t = static_cast<double>(i) / nfe;
    Tensor v = velocity_predict(bundle, x, t, conds);
    for (int64_t j = 0; j < x.size(); ++j) {
      x[j] += v[j] * dt;
      out.residuals[j] += v[j] * dt;
    }
    if (!x.all_finite()) throw std::runtime_error("sampler diverged");
    if (path_out) path_out->push_back(x);
  }
  out.trajectories = std::move(x);
  out.net_evals = nfe;
  return out;
}

}  // namespace resbridge
