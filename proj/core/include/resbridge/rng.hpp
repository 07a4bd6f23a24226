#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "resbridge/tensor.hpp"

namespace resbridge {

// Seedable xoshiro256** stream. Streams are keyed by (seed, label) so that
// independent purposes (data / init / source-noise / time-sampling / ...)
// never share a sequence. Identical (seed, label, call sequence) is
// bit-identical across runs and platforms.
class RngStream {
 public:
  RngStream(uint64_t seed, std::string_view label);

  uint64_t next_u64();
  // Uniform in [0, 1), 53-bit resolution.
  double uniform();
  // Standard normal via Box-Muller; one value per pair of uniforms, the sine
  // half is discarded so the stream state stays a plain 4-word vector.
  double normal();

  Tensor normal_tensor(std::vector<int64_t> shape);
  Tensor uniform_tensor(std::vector<int64_t> shape);
  // Uniform integer in [0, n).
  int64_t uniform_index(int64_t n);

  std::array<uint64_t, 4> state() const { return s_; }
  void set_state(const std::array<uint64_t, 4>& s) { s_ = s; }

 private:
  std::array<uint64_t, 4> s_{};
};

}  // namespace resbridge
