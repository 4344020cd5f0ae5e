#include "flashe/plan.hpp"

#include <cmath>

#include "flashe/error.hpp"
#include "flashe/rng.hpp"

namespace flashe::plan {

std::string to_string(Scheme s) { return s == Scheme::Double ? "double" : "single"; }

void DropoutScenario::validate() const {
  if (total_clients < 2) fail(ErrorCode::InvalidArgument, "need at least 2 clients");
  if (!(dropout_rate >= 0.0 && dropout_rate <= 1.0)) fail(ErrorCode::InvalidArgument, "dropout rate in [0,1]");
  if (coords < 1) fail(ErrorCode::InvalidArgument, "need at least 1 coordinate");
}

double expected_masks_double(uint32_t n, double d, uint64_t coords) {
  DropoutScenario{n, d, coords}.validate();
  double nn = static_cast<double>(n);
  return 2.0 * (-nn * d * d + (nn - 1.0) * d + 2.0) * static_cast<double>(coords);
}

double expected_masks_single(uint32_t n, double d, uint64_t coords) {
  DropoutScenario{n, d, coords}.validate();
  double nn = static_cast<double>(n);
  return (-nn * d + nn + 1.0) * static_cast<double>(coords);
}

uint64_t runs(const std::set<uint32_t>& survivors) {
  uint64_t r = 0;
  uint32_t prev = 0;
  bool first = true;
  for (uint32_t j : survivors) {
    if (first || j != prev + 1) ++r;
    prev = j;
    first = false;
  }
  return r;
}

uint64_t count_masks_exact(const std::set<uint32_t>& survivors, uint32_t n, uint64_t coords, Scheme scheme) {
  if (survivors.empty()) fail(ErrorCode::InvalidArgument, "survivor set must be nonempty");
  if (coords < 1) fail(ErrorCode::InvalidArgument, "need at least 1 coordinate");
  if (*survivors.begin() < 1 || *survivors.rbegin() > n)
    fail(ErrorCode::InvalidArgument, "survivors must lie in 1..N");
  if (scheme == Scheme::Double) return coords * (2 + 2 * runs(survivors));
  return coords * (1 + survivors.size());
}

MonteCarloResult monte_carlo_masks(uint32_t n, double d, uint64_t coords, uint32_t trials, uint64_t seed) {
  DropoutScenario{n, d, coords}.validate();
  if (trials < 1) fail(ErrorCode::InvalidArgument, "need at least 1 trial");

  double sum_d = 0.0, sum_s = 0.0, sq_d = 0.0, sq_s = 0.0;
  for (uint32_t t = 0; t < trials; ++t) {
    rng::Engine eng(rng::derive_seed(seed, t));
    std::set<uint32_t> survivors;
    // Condition on at least one survivor; near d=1 fall back to the limit law
    // (a single uniformly-chosen survivor).
    for (int attempt = 0; attempt < 10000 && survivors.empty(); ++attempt) {
      for (uint32_t j = 1; j <= n; ++j)
        if (!eng.bernoulli(d)) survivors.insert(j);
    }
    if (survivors.empty()) survivors.insert(1 + static_cast<uint32_t>(eng.below(n)));

    double cd = static_cast<double>(count_masks_exact(survivors, n, coords, Scheme::Double));
    double cs = static_cast<double>(count_masks_exact(survivors, n, coords, Scheme::Single));
    sum_d += cd;
    sum_s += cs;
    sq_d += cd * cd;
    sq_s += cs * cs;
  }

  MonteCarloResult r;
  double nt = static_cast<double>(trials);
  r.mean_double = sum_d / nt;
  r.mean_single = sum_s / nt;
  if (trials > 1) {
    double var_d = (sq_d - nt * r.mean_double * r.mean_double) / (nt - 1.0);
    double var_s = (sq_s - nt * r.mean_single * r.mean_single) / (nt - 1.0);
    r.stderr_double = std::sqrt(std::max(var_d, 0.0) / nt);
    r.stderr_single = std::sqrt(std::max(var_s, 0.0) / nt);
  }
  return r;
}

double crossover_estimate(uint32_t n, uint64_t coords, uint32_t trials, uint64_t seed) {
  for (int step = 0; step <= 100; ++step) {
    double d = static_cast<double>(step) / 100.0;
    MonteCarloResult mc = monte_carlo_masks(n, d, coords, trials, rng::derive_seed(seed, 1000 + step));
    if (mc.mean_double >= mc.mean_single) return d;
  }
  return 1.0;
}

MaskingCosts masking_costs(const std::vector<std::vector<uint8_t>>& masks, uint32_t n_decryptors) {
  MaskingCosts costs;
  if (masks.empty()) return costs;
  size_t d_count = masks[0].size();
  for (const auto& m : masks)
    if (m.size() != d_count) fail(ErrorCode::LengthMismatch, "mask lengths differ");

  for (size_t d = 0; d < d_count; ++d) {
    uint64_t members = 0, run_count = 0;
    bool in_run = false;
    for (const auto& m : masks) {
      if (m[d]) {
        ++members;
        if (!in_run) ++run_count;
        in_run = true;
      } else {
        in_run = false;
      }
    }
    costs.cost_double += 2 * members + 2 * static_cast<uint64_t>(n_decryptors) * run_count;
    costs.cost_single += members * (1 + static_cast<uint64_t>(n_decryptors));
  }
  return costs;
}

Scheme decide_masking(const std::vector<std::vector<uint8_t>>& masks, uint32_t n_decryptors) {
  MaskingCosts costs = masking_costs(masks, n_decryptors);
  return costs.cost_double <= costs.cost_single ? Scheme::Double : Scheme::Single;
}

}  // namespace flashe::plan
