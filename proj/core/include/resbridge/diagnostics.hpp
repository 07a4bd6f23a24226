#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "resbridge/bridge.hpp"
#include "resbridge/runconfig.hpp"
#include "resbridge/svg.hpp"
#include "resbridge/synth.hpp"
#include "resbridge/trainer.hpp"

namespace resbridge {

struct Verdict {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  std::string relation;  // "<", ">", "<=", ">="
  bool pass = false;
};

Verdict make_verdict(std::string name, double value, std::string relation, double threshold);

// Pure function of (config, seed): every number in here reproduces bit-exactly
// on a re-run. Wall-clock timings live in a separate sidecar structure.
struct DiagnosticReport {
  std::string name;
  std::map<std::string, double> metrics;
  std::vector<PlotSeries> curves;
  std::vector<Verdict> verdicts;
  uint64_t config_hash = 0;
  uint64_t seed = 0;

  bool passed() const;
  std::string to_json() const;
};

// Writes <name>.json, one CSV per series, and (when curves exist) a single
// SVG chart with all series.
void write_report(const std::string& dir, const DiagnosticReport& report);

// --- Statistical checks -----------------------------------------------------

// Mid-rise uniform quantization Monte-Carlo vs the analytic floor delta^2/12.
DiagnosticReport quantization_floor(double delta, int64_t n, RngStream& stream);
// Combined report over several resolutions.
DiagnosticReport quantization_floor_suite(const std::vector<double>& deltas, int64_t n,
                                          RngStream& stream);

// Mean kinetic cost E||x1 - x0||^2 over the validation split under the
// anchored and gaussian sources, plus the independence expansion
// E||x1||^2 + T*A for the gaussian case. Normalized units.
DiagnosticReport transport_cost_report(const Dataset& ds, const ModelBundle& bundle,
                                       const BridgeConfig& config, RngStream& stream);

// Mean condition-input gradient norm of the per-sample flow loss at fixed t,
// anchored vs gaussian (each with its own trained bundle). The gradient flows
// through every path that touches the condition, including the anchor.
DiagnosticReport loss_collapse_probe(const ModelBundle& anchored_bundle,
                                     const ModelBundle& gaussian_bundle, const Dataset& ds,
                                     const std::vector<double>& t_values,
                                     const BridgeConfig& config, uint64_t seed);

struct NfeTiming {
  std::vector<int> nfe;
  std::vector<double> seconds_per_sample_anchored;
  std::vector<double> seconds_per_sample_gaussian;
  double affine_fit_r2_anchored = 0.0;
  double affine_fit_r2_gaussian = 0.0;
  std::string to_json() const;
};

// Success rate and mean endpoint error per NFE for both source modes.
// Timings (non-reproducible) go to *timing, not into the report payload.
DiagnosticReport nfe_sweep(const ModelBundle& anchored_bundle,
                           const ModelBundle& gaussian_bundle, const Dataset& ds,
                           const std::vector<int>& nfe_list, double tol,
                           const BridgeConfig& config, uint64_t seed,
                           NfeTiming* timing = nullptr);

// Mean (arc length / chord length - 1) of finely integrated sampling paths.
DiagnosticReport straightness_report(const ModelBundle& anchored_bundle,
                                     const ModelBundle& gaussian_bundle, const Dataset& ds,
                                     int nfe, const BridgeConfig& config, uint64_t seed);

struct AbResult {
  DiagnosticReport report;
  ModelBundle anchored;
  ModelBundle gaussian;
  std::vector<MetricsRow> anchored_rows;
  std::vector<MetricsRow> gaussian_rows;
};

// Trains the anchored and gaussian variants with identical seed, data, arch
// and budget; compares the first step at which each reaches target_success.
AbResult convergence_ab(const Dataset& ds, const RunConfig& config,
                        double target_success = 0.8);

// First row step with success >= target, or -1.
int first_step_at_success(const std::vector<MetricsRow>& rows, double target);

}  // namespace resbridge
