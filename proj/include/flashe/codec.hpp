#pragma once

#include <cstdint>
#include <vector>

namespace flashe::codec {

struct QuantParams {
  double clip = 1.0;   // alpha: values are clamped to [-alpha, alpha]
  unsigned bits = 16;  // M: codes occupy [0, 2^M - 1]

  uint64_t levels() const { return (uint64_t{1} << bits) - 1; }
  void validate() const;
  bool operator==(const QuantParams&) const = default;
};

// Affine map of [-alpha, alpha] onto [0, 2^M - 1] with round-half-even.
uint64_t quantize(double v, const QuantParams& p);
std::vector<uint64_t> quantize(const std::vector<double>& v, const QuantParams& p);

// Exact sum of k affine-encoded values given the summed codes: undoes the k
// accumulated zero-point offsets. contributors must be >= 1.
double dequantize_sum(uint64_t q_sum, uint64_t contributors, const QuantParams& p);

struct RoundStats {
  double mean = 0.0;
  double stddev = 0.0;
  double max_abs = 0.0;
};

RoundStats summarize(const std::vector<double>& global_update);

// Summary statistics of past global (aggregated) updates only; client-local
// data never feeds the clip rule.
struct ClipHistory {
  std::vector<RoundStats> rounds;
  void push(const std::vector<double>& global_update) { rounds.push_back(summarize(global_update)); }
  bool empty() const { return rounds.empty(); }
};

struct ClipConfig {
  double bootstrap = 1.0;     // alpha for round 1, when no history exists
  double clip_factor = 12.0;  // alpha = clip_factor * stddev of the latest global update
};

double fit_clip_threshold(const ClipHistory& history, unsigned bits, const ClipConfig& cfg = {});

}  // namespace flashe::codec
