#include "resbridge/optimizer.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace resbridge {

double schedule_lr(const OptimizerConfig& cfg, int step) {
  const double peak = cfg.base_lr * cfg.lr_scale;
  const int s = step + 1;  // 1-indexed so the first step is not zero
  double warm = 1.0;
  if (cfg.warmup_steps > 0) {
    warm = std::min(1.0, static_cast<double>(s) / cfg.warmup_steps);
  }
  double cosine = 1.0;
  const int decay_span = cfg.total_steps - cfg.warmup_steps;
  if (s >= cfg.warmup_steps && decay_span > 0) {
    const double progress =
        std::min(1.0, static_cast<double>(s - cfg.warmup_steps) / decay_span);
    cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  } else if (s >= cfg.total_steps) {
    cosine = 0.0;
  }
  return peak * warm * cosine;
}

double clip_global_norm(std::vector<Tensor>& grads, double clip_norm) {
  double sq = 0.0;
  for (const Tensor& g : grads) {
    for (int64_t i = 0; i < g.size(); ++i) sq += g[i] * g[i];
  }
  if (!std::isfinite(sq)) throw std::runtime_error("non-finite gradient");
  const double n = std::sqrt(sq);
  if (clip_norm > 0.0 && n > clip_norm) {
    const double s = clip_norm / n;
    for (Tensor& g : grads) {
      for (int64_t i = 0; i < g.size(); ++i) g[i] *= s;
    }
  }
  return n;
}

AdamW::AdamW(OptimizerConfig cfg, const std::vector<Tensor*>& params) : cfg_(cfg) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Tensor* p : params) {
    m_.push_back(Tensor::zeros(p->shape()));
    v_.push_back(Tensor::zeros(p->shape()));
  }
}

void AdamW::step(const std::vector<Tensor*>& params, std::vector<Tensor>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw std::invalid_argument("optimizer parameter count mismatch");
  }
  clip_global_norm(grads, cfg_.clip_norm);

  const double lr = schedule_lr(cfg_, step_);
  const int t = step_ + 1;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t);

  for (size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = grads[k];
    if (!p.same_shape(g)) throw std::invalid_argument("gradient shape mismatch");
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (int64_t i = 0; i < p.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p[i]);
    }
  }
  ++step_;
}

void AdamW::restore(int step, std::vector<Tensor> m, std::vector<Tensor> v) {
  if (m.size() != m_.size() || v.size() != v_.size()) {
    throw std::invalid_argument("optimizer state size mismatch");
  }
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace resbridge
