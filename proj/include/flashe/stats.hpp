#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace flashe::stats {

// Regularized upper incomplete gamma Q(a, x) = Γ(a, x) / Γ(a), a > 0, x >= 0.
double regularized_gamma_q(double a, double x);

// Survival function of the chi-square distribution: P[X > stat] with dof degrees of freedom.
double chi_square_sf(double stat, unsigned dof);

struct ChiSquareResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

// Pearson chi-square against a uniform distribution over 256 byte values.
ChiSquareResult chi_square_uniform_bytes(const std::vector<uint8_t>& data);

}  // namespace flashe::stats
