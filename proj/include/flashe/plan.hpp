#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace flashe::plan {

enum class Scheme { Double, Single };

std::string to_string(Scheme s);

struct DropoutScenario {
  uint32_t total_clients = 2;  // N >= 2
  double dropout_rate = 0.0;   // d in [0, 1]
  uint64_t coords = 1;         // D >= 1
  void validate() const;
};

// Closed forms for the expected per-surviving-client mask count.
double expected_masks_double(uint32_t n, double d, uint64_t coords);  // 2(-Nd^2 + (N-1)d + 2)D
double expected_masks_single(uint32_t n, double d, uint64_t coords);  // (-Nd + N + 1)D

// Number of maximal consecutive-index blocks in the survivor set.
uint64_t runs(const std::set<uint32_t>& survivors);

// Exact per-surviving-client mask count for a concrete survivor set:
// Double -> D*(2 + 2*runs), Single -> D*(1 + |survivors|).
uint64_t count_masks_exact(const std::set<uint32_t>& survivors, uint32_t n, uint64_t coords, Scheme scheme);

struct MonteCarloResult {
  double mean_double = 0.0;
  double mean_single = 0.0;
  double stderr_double = 0.0;
  double stderr_single = 0.0;
};

// Averages count_masks_exact over Bernoulli(1-d) survivor draws conditioned on
// at least one survivor; seeded and reproducible.
MonteCarloResult monte_carlo_masks(uint32_t n, double d, uint64_t coords, uint32_t trials, uint64_t seed);

// Smallest d on a 0.01 grid where the Monte-Carlo double estimate is >= the
// single estimate; 1.0 if the curves never cross.
double crossover_estimate(uint32_t n, uint64_t coords, uint32_t trials, uint64_t seed);

struct MaskingCosts {
  uint64_t cost_double = 0;
  uint64_t cost_single = 0;
};

// Federation-wide mask-generation totals given per-client coordinate masks
// (masks[p] belongs to client p+1; entries are 0/1). Per coordinate with
// participant set S: Double = 2|S| + 2*n_decryptors*runs(S); Single = |S|*(1 + n_decryptors).
MaskingCosts masking_costs(const std::vector<std::vector<uint8_t>>& masks, uint32_t n_decryptors);

// Cheaper scheme per masking_costs; ties go to Double (better decryption locality).
Scheme decide_masking(const std::vector<std::vector<uint8_t>>& masks, uint32_t n_decryptors);

}  // namespace flashe::plan
