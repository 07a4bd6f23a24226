#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "resbridge/bridge.hpp"
#include "resbridge/optimizer.hpp"
#include "resbridge/synth.hpp"

namespace resbridge {

inline constexpr const char* kArtifactVersion = "0.1.0";

struct TrainSettings {
  int batch_size = 64;
  int eval_every = 250;
  int eval_nfe = 8;
  double eval_tol = 0.1;
  bool flow_enabled = true;
};

// Everything a run needs, serializable to a canonical JSON form. The hash of
// that form is stamped into every output so runs are identifiable.
struct RunConfig {
  TaskSpec task;
  BridgeConfig bridge;
  std::vector<int> hidden{128, 128};
  OptimizerConfig optim;
  TrainSettings train;
  uint64_t seed = 0;

  std::string canonical_json() const;
  uint64_t hash() const;

  static RunConfig from_json_text(const std::string& text);
  static RunConfig load(const std::string& path);
  void save(const std::string& path) const;
};

}  // namespace resbridge
