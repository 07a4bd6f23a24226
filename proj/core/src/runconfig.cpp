#include "resbridge/runconfig.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "resbridge/hash.hpp"

namespace resbridge {

using nlohmann::json;

namespace {

std::string source_mode_str(SourceMode m) {
  return m == SourceMode::kAnchored ? "anchored" : "gaussian";
}

SourceMode source_mode_from_str(const std::string& s) {
  if (s == "anchored") return SourceMode::kAnchored;
  if (s == "gaussian") return SourceMode::kGaussian;
  throw std::invalid_argument("unknown source mode: " + s);
}

json to_json(const RunConfig& c) {
  json j;
  j["task"] = {
      {"name", task_name_str(c.task.name)},
      {"horizon", c.task.horizon},
      {"action_dim", c.task.action_dim},
      {"cond_dim", c.task.cond_dim},
      {"a_hf", c.task.a_hf},
      {"m_hf", c.task.m_hf},
      {"noise_floor", c.task.noise_floor},
      {"sample_count", c.task.sample_count},
      {"val_fraction", c.task.val_fraction},
  };
  j["bridge"] = {
      {"sigma_min", c.bridge.sigma_min},
      {"lambda_sem", c.bridge.lambda_sem},
      {"cutoff", c.bridge.cutoff},
      {"source_mode", source_mode_str(c.bridge.source_mode)},
      {"anchor_stopgrad", c.bridge.anchor_stopgrad},
  };
  j["model"] = {{"hidden", c.hidden}};
  j["optim"] = {
      {"base_lr", c.optim.base_lr},
      {"lr_scale", c.optim.lr_scale},
      {"beta1", c.optim.beta1},
      {"beta2", c.optim.beta2},
      {"weight_decay", c.optim.weight_decay},
      {"eps", c.optim.eps},
      {"warmup_steps", c.optim.warmup_steps},
      {"total_steps", c.optim.total_steps},
      {"clip_norm", c.optim.clip_norm},
  };
  j["train"] = {
      {"batch_size", c.train.batch_size},
      {"eval_every", c.train.eval_every},
      {"eval_nfe", c.train.eval_nfe},
      {"eval_tol", c.train.eval_tol},
      {"flow_enabled", c.train.flow_enabled},
  };
  j["seed"] = c.seed;
  return j;
}

template <class T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

RunConfig from_json(const json& j) {
  RunConfig c;
  if (j.contains("task")) {
    const json& t = j.at("task");
    if (t.contains("name")) c.task.name = task_name_from_str(t.at("name").get<std::string>());
    maybe(t, "horizon", c.task.horizon);
    maybe(t, "action_dim", c.task.action_dim);
    maybe(t, "cond_dim", c.task.cond_dim);
    maybe(t, "a_hf", c.task.a_hf);
    maybe(t, "m_hf", c.task.m_hf);
    maybe(t, "noise_floor", c.task.noise_floor);
    maybe(t, "sample_count", c.task.sample_count);
    maybe(t, "val_fraction", c.task.val_fraction);
  }
  if (j.contains("bridge")) {
    const json& b = j.at("bridge");
    maybe(b, "sigma_min", c.bridge.sigma_min);
    maybe(b, "lambda_sem", c.bridge.lambda_sem);
    maybe(b, "cutoff", c.bridge.cutoff);
    if (b.contains("source_mode")) {
      c.bridge.source_mode = source_mode_from_str(b.at("source_mode").get<std::string>());
    }
    maybe(b, "anchor_stopgrad", c.bridge.anchor_stopgrad);
  }
  if (j.contains("model")) maybe(j.at("model"), "hidden", c.hidden);
  if (j.contains("optim")) {
    const json& o = j.at("optim");
    maybe(o, "base_lr", c.optim.base_lr);
    maybe(o, "lr_scale", c.optim.lr_scale);
    maybe(o, "beta1", c.optim.beta1);
    maybe(o, "beta2", c.optim.beta2);
    maybe(o, "weight_decay", c.optim.weight_decay);
    maybe(o, "eps", c.optim.eps);
    maybe(o, "warmup_steps", c.optim.warmup_steps);
    maybe(o, "total_steps", c.optim.total_steps);
    maybe(o, "clip_norm", c.optim.clip_norm);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    maybe(t, "batch_size", c.train.batch_size);
    maybe(t, "eval_every", c.train.eval_every);
    maybe(t, "eval_nfe", c.train.eval_nfe);
    maybe(t, "eval_tol", c.train.eval_tol);
    maybe(t, "flow_enabled", c.train.flow_enabled);
  }
  maybe(j, "seed", c.seed);
  return c;
}

}  // namespace

std::string RunConfig::canonical_json() const {
  // nlohmann objects are key-sorted, so dump() is already canonical.
  return to_json(*this).dump(2) + "\n";
}

uint64_t RunConfig::hash() const { return fnv1a(canonical_json()); }

RunConfig RunConfig::from_json_text(const std::string& text) {
  return from_json(json::parse(text));
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_json_text(ss.str());
}

void RunConfig::save(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << canonical_json();
}

}  // namespace resbridge
