#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "flashe/error.hpp"
#include "flashe/plan.hpp"
#include "flashe/rng.hpp"

using namespace flashe;
using plan::Scheme;

TEST_SUITE("plan") {
  TEST_CASE("closed forms reproduce direct substitution") {
    CHECK(plan::expected_masks_double(10, 0.0, 1) == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(plan::expected_masks_double(10, 1.0, 1) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(plan::expected_masks_double(10, 0.2, 100) == doctest::Approx(680.0).epsilon(1e-12));

    CHECK(plan::expected_masks_single(10, 0.0, 1) == doctest::Approx(11.0).epsilon(1e-12));
    CHECK(plan::expected_masks_single(10, 1.0, 1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(plan::expected_masks_single(10, 0.2, 100) == doctest::Approx(900.0).epsilon(1e-12));

    // Boundary identities for a sweep of N.
    for (uint32_t n = 2; n <= 100; ++n) {
      CHECK(plan::expected_masks_double(n, 0.0, 3) == doctest::Approx(12.0).epsilon(1e-12));
      CHECK(plan::expected_masks_single(n, 0.0, 3) == doctest::Approx(3.0 * (n + 1)).epsilon(1e-12));
    }

    CHECK_THROWS_AS(plan::expected_masks_double(1, 0.0, 1), Error);
    CHECK_THROWS_AS(plan::expected_masks_double(4, 1.5, 1), Error);
    CHECK_THROWS_AS(plan::expected_masks_double(4, 0.5, 0), Error);
  }

  TEST_CASE("exact counting over concrete survivor sets") {
    CHECK(plan::count_masks_exact({1, 2, 3, 4}, 4, 1, Scheme::Double) == 4);
    CHECK(plan::count_masks_exact({1, 3}, 4, 1, Scheme::Double) == 6);
    CHECK(plan::count_masks_exact({1, 3}, 4, 1, Scheme::Single) == 3);
    std::set<uint32_t> all;
    for (uint32_t j = 1; j <= 9; ++j) all.insert(j);
    CHECK(plan::count_masks_exact(all, 9, 1, Scheme::Single) == 10);
    CHECK(plan::count_masks_exact(all, 9, 5, Scheme::Double) == 5 * 4);

    CHECK(plan::runs({}) == 0);
    CHECK(plan::runs({4}) == 1);
    CHECK(plan::runs({1, 2, 3}) == 1);
    CHECK(plan::runs({1, 3, 5}) == 3);
    CHECK(plan::runs({1, 2, 4, 5, 9}) == 3);

    CHECK_THROWS_AS(plan::count_masks_exact({}, 4, 1, Scheme::Double), Error);
    CHECK_THROWS_AS(plan::count_masks_exact({5}, 4, 1, Scheme::Double), Error);
  }

  TEST_CASE("adding an adjacent survivor never increases runs") {
    rng::Engine eng(31337);
    for (int trial = 0; trial < 200; ++trial) {
      std::set<uint32_t> s;
      for (uint32_t j = 1; j <= 12; ++j)
        if (eng.bernoulli(0.4)) s.insert(j);
      if (s.empty()) s.insert(1);
      uint64_t before = plan::runs(s);
      // Extend an existing run to the right.
      uint32_t tail = *s.rbegin() + 1;
      std::set<uint32_t> grown = s;
      grown.insert(tail);
      CHECK(plan::runs(grown) <= before);
    }
  }

  TEST_CASE("monte carlo at d=0 is exact with zero variance") {
    plan::MonteCarloResult mc = plan::monte_carlo_masks(8, 0.0, 5, 50, 1);
    std::set<uint32_t> all;
    for (uint32_t j = 1; j <= 8; ++j) all.insert(j);
    CHECK(mc.mean_double == doctest::Approx(plan::count_masks_exact(all, 8, 5, Scheme::Double)));
    CHECK(mc.mean_single == doctest::Approx(plan::count_masks_exact(all, 8, 5, Scheme::Single)));
    CHECK(mc.stderr_double == doctest::Approx(0.0));
    CHECK(mc.stderr_single == doctest::Approx(0.0));
  }

  TEST_CASE("monte carlo single mean matches the closed form within 3 sigma") {
    plan::MonteCarloResult mc = plan::monte_carlo_masks(20, 0.3, 1, 10000, 7);
    double closed = plan::expected_masks_single(20, 0.3, 1);
    CHECK(std::abs(mc.mean_single - closed) <= 3.0 * mc.stderr_single);
    CHECK(mc.stderr_single > 0.0);
  }

  TEST_CASE("monte carlo double mean sits 2d(1-d)D below the closed form") {
    // The closed double-mask form counts one extra boundary pair relative to
    // linear placement; the gap is exactly 2d(1-d) per coordinate.
    const double d = 0.3;
    plan::MonteCarloResult mc = plan::monte_carlo_masks(20, d, 1, 10000, 11);
    double adjusted = plan::expected_masks_double(20, d, 1) - 2.0 * d * (1.0 - d);
    CHECK(std::abs(mc.mean_double - adjusted) <= 4.0 * mc.stderr_double);
  }

  TEST_CASE("monte carlo is reproducible under the same seed") {
    plan::MonteCarloResult a = plan::monte_carlo_masks(12, 0.4, 2, 500, 99);
    plan::MonteCarloResult b = plan::monte_carlo_masks(12, 0.4, 2, 500, 99);
    CHECK(a.mean_double == b.mean_double);
    CHECK(a.mean_single == b.mean_single);
  }

  TEST_CASE("crossover estimate lands in the claimed band") {
    double d20 = plan::crossover_estimate(20, 1, 2000, 5);
    CHECK(d20 >= 0.3);
    CHECK(d20 <= 0.5);
    // Degenerate scale: report only, no band assertion.
    double d2 = plan::crossover_estimate(2, 1, 500, 5);
    CHECK(d2 >= 0.0);
    CHECK(d2 <= 1.0);
  }

  TEST_CASE("scheme decision worked examples") {
    // Two clients, D=4: per coordinate one participant in one run.
    // Double: 4 * (2*1 + 2*2*1) = 24; Single: 4 * 1 * (1 + 2) = 12.
    std::vector<std::vector<uint8_t>> masks = {{1, 1, 0, 0}, {0, 0, 1, 1}};
    plan::MaskingCosts costs = plan::masking_costs(masks, 2);
    CHECK(costs.cost_double == 24);
    CHECK(costs.cost_single == 12);
    CHECK(plan::decide_masking(masks, 2) == Scheme::Single);

    // Ten clients, dense: per coordinate Double 2*10 + 2*10*1 = 40, Single 10*11 = 110.
    std::vector<std::vector<uint8_t>> dense(10, std::vector<uint8_t>(1, 1));
    costs = plan::masking_costs(dense, 10);
    CHECK(costs.cost_double == 40);
    CHECK(costs.cost_single == 110);
    CHECK(plan::decide_masking(dense, 10) == Scheme::Double);

    // All-zero masks tie at zero; tie goes to Double.
    std::vector<std::vector<uint8_t>> zero(3, std::vector<uint8_t>(4, 0));
    CHECK(plan::decide_masking(zero, 3) == Scheme::Double);

    CHECK_THROWS_AS(plan::masking_costs({{1, 0}, {1}}, 2), Error);
  }

  TEST_CASE("decision agrees with brute-force cost evaluation") {
    rng::Engine eng(2024);
    for (int trial = 0; trial < 100; ++trial) {
      uint32_t n = 2 + static_cast<uint32_t>(eng.below(9));
      uint64_t coords = 1 + eng.below(40);
      std::vector<std::vector<uint8_t>> masks(n, std::vector<uint8_t>(coords, 0));
      for (auto& m : masks)
        for (auto& bit : m) bit = eng.bernoulli(0.5) ? 1 : 0;
      uint32_t n_dec = 1 + static_cast<uint32_t>(eng.below(n));

      uint64_t brute_double = 0, brute_single = 0;
      for (uint64_t d = 0; d < coords; ++d) {
        std::set<uint32_t> s;
        for (uint32_t j = 0; j < n; ++j)
          if (masks[j][d]) s.insert(j + 1);
        brute_double += 2 * s.size() + 2 * static_cast<uint64_t>(n_dec) * plan::runs(s);
        brute_single += s.size() * (1 + static_cast<uint64_t>(n_dec));
      }
      plan::MaskingCosts costs = plan::masking_costs(masks, n_dec);
      CHECK(costs.cost_double == brute_double);
      CHECK(costs.cost_single == brute_single);
      Scheme expect = brute_double <= brute_single ? Scheme::Double : Scheme::Single;
      CHECK(plan::decide_masking(masks, n_dec) == expect);
    }
  }
}
