#include "flashe/codec.hpp"

#include <algorithm>
#include <cmath>

#include "flashe/error.hpp"

namespace flashe::codec {

void QuantParams::validate() const {
  if (!(clip > 0.0) || !std::isfinite(clip)) fail(ErrorCode::InvalidArgument, "clip must be finite and positive");
  if (bits < 1 || bits > 32) fail(ErrorCode::InvalidArgument, "quantization bits must be in 1..32");
}

uint64_t quantize(double v, const QuantParams& p) {
  p.validate();
  if (!std::isfinite(v)) fail(ErrorCode::InvalidArgument, "cannot quantize non-finite value");
  double clamped = std::clamp(v, -p.clip, p.clip);
  double x = ((clamped + p.clip) / (2.0 * p.clip)) * static_cast<double>(p.levels());
  // nearbyint under the default FE_TONEAREST mode rounds half to even.
  double q = std::nearbyint(x);
  if (q < 0.0) q = 0.0;
  double top = static_cast<double>(p.levels());
  if (q > top) q = top;
  return static_cast<uint64_t>(q);
}

std::vector<uint64_t> quantize(const std::vector<double>& v, const QuantParams& p) {
  std::vector<uint64_t> out;
  out.reserve(v.size());
  for (double x : v) out.push_back(quantize(x, p));
  return out;
}

double dequantize_sum(uint64_t q_sum, uint64_t contributors, const QuantParams& p) {
  p.validate();
  if (contributors == 0)
    fail(ErrorCode::InvalidArgument, "dequantize_sum needs at least one contributor");
  if (q_sum > contributors * p.levels())
    fail(ErrorCode::InvalidArgument, "summed code exceeds contributor capacity");
  return (static_cast<double>(q_sum) / static_cast<double>(p.levels())) * 2.0 * p.clip -
         static_cast<double>(contributors) * p.clip;
}

RoundStats summarize(const std::vector<double>& global_update) {
  RoundStats s;
  if (global_update.empty()) return s;
  double n = static_cast<double>(global_update.size());
  double sum = 0.0;
  for (double v : global_update) {
    sum += v;
    s.max_abs = std::max(s.max_abs, std::fabs(v));
  }
  s.mean = sum / n;
  double sq = 0.0;
  for (double v : global_update) sq += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(sq / n);
  return s;
}

double fit_clip_threshold(const ClipHistory& history, unsigned bits, const ClipConfig& cfg) {
  if (bits < 1 || bits > 32) fail(ErrorCode::InvalidArgument, "quantization bits must be in 1..32");
  if (history.empty()) return cfg.bootstrap;
  double sigma = history.rounds.back().stddev;
  double alpha = cfg.clip_factor * sigma;
  // A flat global update would yield alpha = 0, which no quantizer accepts.
  return alpha > 0.0 ? alpha : cfg.bootstrap;
}

}  // namespace flashe::codec
