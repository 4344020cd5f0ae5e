#include "flashe/stats.hpp"

#include <array>
#include <cmath>
#include <limits>

#include "flashe/error.hpp"

namespace flashe::stats {
namespace {

// Lower regularized gamma P(a, x) by series expansion; converges fast for x < a + 1.
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int i = 0; i < 1000; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper regularized gamma Q(a, x) by Lentz continued fraction; converges fast for x >= a + 1.
double gamma_q_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 1000; ++i) {
    double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double regularized_gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0 || !std::isfinite(a) || !std::isfinite(x))
    fail(ErrorCode::InvalidArgument, "regularized_gamma_q domain error");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_cf(a, x);
}

double chi_square_sf(double stat, unsigned dof) {
  if (dof == 0) fail(ErrorCode::InvalidArgument, "chi_square_sf needs dof >= 1");
  if (stat <= 0.0) return 1.0;
  return regularized_gamma_q(dof / 2.0, stat / 2.0);
}

ChiSquareResult chi_square_uniform_bytes(const std::vector<uint8_t>& data) {
  if (data.empty()) fail(ErrorCode::InvalidArgument, "empty sample");
  std::array<uint64_t, 256> counts{};
  for (uint8_t b : data) counts[b]++;
  double expected = static_cast<double>(data.size()) / 256.0;
  double stat = 0.0;
  for (uint64_t c : counts) {
    double diff = static_cast<double>(c) - expected;
    stat += diff * diff / expected;
  }
  return {stat, chi_square_sf(stat, 255)};
}

}  // namespace flashe::stats
