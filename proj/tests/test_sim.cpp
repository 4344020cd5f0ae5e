#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "flashe/cipher.hpp"
#include "flashe/codec.hpp"
#include "flashe/rng.hpp"
#include "flashe/sim.hpp"
#include "flashe/sparse.hpp"
#include "helpers.hpp"

using namespace flashe;
using namespace flashe::sim;
using flashe::test::code_of;

namespace {

// One LAN-only site so round trip time is a pure function of the byte counts.
BandwidthMatrix single_site(double mbps) {
  BandwidthMatrix bw;
  bw.sites = {"lan"};
  bw.mbps = {{mbps}};
  return bw;
}

FederationConfig small_config() {
  FederationConfig cfg;
  cfg.clients = 4;
  cfg.layers = {256};
  cfg.rounds = 3;
  cfg.policy = Policy::Double;
  cfg.dropout_rate = 0.0;
  cfg.modulus_bits = 32;
  cfg.quant_bits = 16;
  cfg.update_sigma = 0.01;
  cfg.pricing.instances = 5;
  cfg.seed = 42;
  return cfg;
}

}  // namespace

TEST_SUITE("sim") {

  TEST_CASE("five-site fixture statistics") {
    auto bw = BandwidthMatrix::aws_five_site();
    bw.validate();
    CHECK(bw.sites.size() == 5);
    CHECK(bw.lan_mean() == doctest::Approx(9600.0));
    CHECK(bw.wan_mean() == doctest::Approx(80.0));
    CHECK(bw.lan_mean() / bw.wan_mean() == doctest::Approx(120.0));
    CHECK(bw.wan_min() == doctest::Approx(40.0));
  }

  TEST_CASE("communication time model") {
    auto bw = BandwidthMatrix::aws_five_site();
    CHECK(simulate_comm(0, 0, 1, 0, bw) == 0.0);

    // Doubling the link speed halves the transfer time.
    double slow = simulate_comm(1000000, 1000000, 0, 0, single_site(10.0));
    double fast = simulate_comm(1000000, 1000000, 0, 0, single_site(20.0));
    CHECK(slow == doctest::Approx(2.0 * fast));

    // 112 MB each way over the 40 Mb/s tail pair takes 22.4 s per direction.
    double t = simulate_comm(112000000, 112000000, 4, 0, bw);
    CHECK(t == doctest::Approx(44.8));

    CHECK(code_of([&] { simulate_comm(1, 1, 5, 0, bw); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([&] { simulate_comm(1, 1, 0, 9, bw); }) == ErrorCode::InvalidArgument);
  }

  TEST_CASE("config parsing applies defaults and derives instances") {
    auto j = nlohmann::json::parse(R"({"clients": 6, "layers": [16, 16]})");
    FederationConfig cfg = FederationConfig::from_json(j);
    CHECK(cfg.clients == 6);
    CHECK(cfg.coords() == 32);
    CHECK(cfg.rounds == 3);
    CHECK(cfg.policy == Policy::Adaptive);
    CHECK(cfg.modulus_bits == 32);
    CHECK(cfg.quant_bits == 16);
    CHECK(cfg.normalize == sparse::Normalize::Mean);
    CHECK(cfg.precompute);
    CHECK(cfg.seed == 42);
    CHECK(cfg.pricing.instances == 7);  // clients + 1 when unset

    auto j2 = nlohmann::json::parse(
        R"({"clients": 2, "layers": [8], "pricing": {"instances": 3}, "policy": "single",
            "sparsity": [[2, 25.0]], "normalize": "sum", "seed": 7})");
    FederationConfig cfg2 = FederationConfig::from_json(j2);
    CHECK(cfg2.pricing.instances == 3);
    CHECK(cfg2.policy == Policy::Single);
    CHECK(cfg2.normalize == sparse::Normalize::Sum);
    CHECK(cfg2.sparsity_for_round(1) == 0.0);
    CHECK(cfg2.sparsity_for_round(2) == 25.0);
    CHECK(cfg2.sparsity_for_round(9) == 25.0);
  }

  TEST_CASE("config round-trips through json") {
    FederationConfig cfg = small_config();
    cfg.sparsity = {{2, 50.0}};
    cfg.client_site = {0, 1, 2, 3};
    FederationConfig back = FederationConfig::from_json(cfg.to_json());
    CHECK(back.to_json() == cfg.to_json());
  }

  TEST_CASE("config validation") {
    CHECK(code_of([] {
            auto j = nlohmann::json::parse(R"({"clients": 0, "layers": [4]})");
            FederationConfig::from_json(j);
          }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] {
            auto j = nlohmann::json::parse(R"({"clients": 2, "layers": []})");
            FederationConfig::from_json(j);
          }) == ErrorCode::InvalidArgument);
    // 2 clients of 16-bit codes can wrap a 16-bit modulus.
    CHECK(code_of([] {
            auto j = nlohmann::json::parse(R"({"clients": 2, "layers": [4], "modulus_bits": 16})");
            FederationConfig::from_json(j);
          }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] {
            auto j = nlohmann::json::parse(R"({"clients": 2, "layers": [4], "sparsity": [[2, 50.0], [2, 60.0]]})");
            FederationConfig::from_json(j);
          }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] {
            auto j = nlohmann::json::parse(R"({"clients": 2, "layers": [4], "dropout_rate": 1.5})");
            FederationConfig::from_json(j);
          }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] {
            auto j = nlohmann::json::parse(R"({"clients": 2, "layers": [4], "client_site": [0]})");
            FederationConfig::from_json(j);
          }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] {
            auto j = nlohmann::json::parse(R"({"clients": 2, "layers": [4], "policy": "fancy"})");
            FederationConfig::from_json(j);
          }) == ErrorCode::Parse);
  }

  TEST_CASE("dense round aggregates exactly and reports a verifiable global update") {
    FederationConfig cfg = small_config();
    Simulation sim(cfg);
    RoundReport rep = sim.run_round();
    CHECK(rep.oracle_ok);
    CHECK(!rep.aborted);
    CHECK(rep.scheme == "double");
    CHECK(!rep.sparse);
    CHECK(rep.alpha == doctest::Approx(1.0));  // bootstrap on round 1

    // External oracle: regenerate the synthetic client updates from the seed
    // streams and mirror quantize / sum / decode / normalize.
    codec::QuantParams qp{1.0, cfg.quant_bits};
    uint64_t rmask = (uint64_t{1} << 32) - 1;
    std::vector<uint64_t> sums(256, 0);
    for (uint32_t j = 1; j <= 4; ++j) {
      rng::Engine eng(rng::derive_seed(cfg.seed, (uint64_t{1} << 32) | j));
      for (size_t d = 0; d < 256; ++d) {
        double v = eng.gaussian(0.0, cfg.update_sigma);
        sums[d] = (sums[d] + codec::quantize(v, qp)) & rmask;
      }
    }
    std::vector<double> expect(256);
    for (size_t d = 0; d < 256; ++d) expect[d] = codec::dequantize_sum(sums[d], 4, qp) / 4.0;
    auto stats = codec::summarize(expect);
    CHECK(rep.global_stats.mean == stats.mean);
    CHECK(rep.global_stats.stddev == stats.stddev);
    CHECK(rep.global_stats.max_abs == stats.max_abs);

    // Later rounds refit the clip threshold from that global update.
    RoundReport rep2 = sim.run_round();
    CHECK(rep2.oracle_ok);
    CHECK(rep2.alpha == doctest::Approx(12.0 * stats.stddev));
    CHECK(rep2.idle_s == rep.comm_s);
  }

  TEST_CASE("dense traffic accounting matches the wire layout") {
    FederationConfig cfg = small_config();
    Simulation sim(cfg);
    RoundReport rep = sim.run_round();
    // Uplink: one record entry; downlink: the four-entry aggregate, per client.
    uint64_t up_each = header_bytes(1) + 256 * 4;
    uint64_t down_each = header_bytes(4) + 256 * 4;
    for (const auto& c : rep.clients) {
      CHECK(c.up_bytes == up_each);
      CHECK(c.down_bytes == down_each);
    }
    CHECK(rep.up_bytes_total == 4 * up_each);
    CHECK(rep.down_bytes_total == 4 * down_each);
    CHECK(rep.comm_s > 0.0);
  }

  TEST_CASE("sparse rounds carry compact frames and index-encoded masks") {
    FederationConfig cfg = small_config();
    cfg.layers = {40, 60};
    cfg.sparsity = {{1, 25.0}};
    Simulation sim(cfg);
    RoundReport rep = sim.run_round();
    CHECK(rep.sparse);
    CHECK(rep.s_percent == doctest::Approx(25.0));
    CHECK(rep.oracle_ok);

    // ceil(25% of 40) + ceil(25% of 60) = 10 + 15 selected coordinates.
    uint64_t up_each = 22 + 25 * 4 + 4 + 4 * 25;
    for (const auto& c : rep.clients) CHECK(c.up_bytes == up_each);
    // Downlink: one aggregate frame plus each survivor's packed support bitmask.
    for (const auto& c : rep.clients) {
      CHECK(c.down_bytes >= 22 + 25 * 4 + 4 * 13);
      CHECK(c.down_bytes <= 22 + 100 * 4 + 4 * 13);
    }
  }

  TEST_CASE("adaptive policy matches a brute-force cost comparison") {
    FederationConfig base = small_config();
    base.clients = 6;
    base.layers = {32};
    base.rounds = 6;
    base.dropout_rate = 0.35;
    base.sparsity = {{3, 40.0}};
    base.seed = 2;  // yields a mix of contiguous and fragmented survivor sets
    base.pricing.instances = 7;

    FederationConfig adaptive = base;
    adaptive.policy = Policy::Adaptive;
    FederationConfig dbl = base;
    dbl.policy = Policy::Double;
    FederationConfig sgl = base;
    sgl.policy = Policy::Single;

    Simulation sa(adaptive), sd(dbl), ss(sgl);
    auto ra = sa.run_all(), rd = sd.run_all(), rs = ss.run_all();
    REQUIRE(ra.size() == 6);
    bool saw_single = false, saw_double = false;
    for (size_t r = 0; r < 6; ++r) {
      if (ra[r].aborted) {
        CHECK(ra[r].scheme == "-");
        continue;
      }
      // Masks and survivor sets are policy independent, so the fixed-policy
      // runs supply the exact costs the adaptive rule must minimize.
      uint64_t cost_double = rd[r].masks_planned;
      uint64_t cost_single = rs[r].masks_planned;
      std::string expect = cost_double <= cost_single ? "double" : "single";
      CHECK(ra[r].scheme == expect);
      CHECK(ra[r].masks_planned == std::min(cost_double, cost_single));
      if (ra[r].scheme == "single") saw_single = true;
      if (ra[r].scheme == "double") saw_double = true;
    }
    // The schedule above exercises both branches; if not, the test is vacuous.
    CHECK(saw_single);
    CHECK(saw_double);
  }

  TEST_CASE("full dropout aborts the round but not the run") {
    FederationConfig cfg = small_config();
    cfg.dropout_rate = 1.0;
    cfg.layers = {16};
    Simulation sim(cfg);
    auto reports = sim.run_all();
    REQUIRE(reports.size() == 3);
    for (const auto& r : reports) {
      CHECK(r.aborted);
      CHECK(r.scheme == "-");
      CHECK(r.up_bytes_total == 0);
      CHECK(r.comm_s == 0.0);
      for (const auto& c : r.clients) CHECK(!c.survived);
    }
  }

  TEST_CASE("dropout frequency tracks the configured rate") {
    FederationConfig cfg = small_config();
    cfg.clients = 10;
    cfg.layers = {4};
    cfg.rounds = 120;
    cfg.dropout_rate = 0.3;
    cfg.precompute = false;
    cfg.pricing.instances = 11;
    Simulation sim(cfg);
    uint64_t survived = 0;
    for (auto& r : sim.run_all())
      for (auto& c : r.clients) survived += c.survived ? 1 : 0;
    // Binomial(1200, 0.7): mean 840, sigma ~15.9; allow 3 sigma.
    CHECK(survived > 840 - 48);
    CHECK(survived < 840 + 48);
  }

  TEST_CASE("identical configs replay identical simulated histories") {
    FederationConfig cfg = small_config();
    cfg.clients = 5;
    cfg.layers = {24, 40};
    cfg.rounds = 4;
    cfg.policy = Policy::Adaptive;
    cfg.dropout_rate = 0.25;
    cfg.sparsity = {{2, 30.0}};
    cfg.pricing.instances = 6;
    Simulation a(cfg), b(cfg);
    for (int r = 0; r < 4; ++r) {
      auto ra = a.run_round(), rb = b.run_round();
      CHECK(ra.stable_json().dump() == rb.stable_json().dump());
    }
  }

  TEST_CASE("idle-window precompute takes encryption off the critical path") {
    FederationConfig cfg = small_config();  // 4 clients, 256 coords, 32-bit: 64 blocks/client
    cfg.prf_blocks_per_sec = 1e9;           // idle window affords the full span

    Simulation sim(cfg);
    RoundReport r1 = sim.run_round();
    // Cold round: 4 encrypts and 4 decrypts, each touching 2 streams of 64 blocks.
    CHECK(r1.on_path_aes_blocks == 1024);
    CHECK(r1.lane_evals == 4096);
    CHECK(r1.precomputed_blocks == 0);

    RoundReport r2 = sim.run_round();
    // Clients 1..4 plus boundary stream 5, 64 blocks each, all prebuilt.
    CHECK(r2.precomputed_blocks == 320);
    CHECK(r2.on_path_aes_blocks == 0);
    CHECK(r2.lane_evals == 4096);  // logical evaluations still happen, from cache
    CHECK(r2.precompute_hidden == (r2.precompute_s <= r2.idle_s));
  }

  TEST_CASE("a short idle window yields a partial cache") {
    FederationConfig cfg = small_config();
    // Round-trip bytes per client: up 1054 + down 1078 = 17056 bits, so this
    // link speed pins the simulated round time at 1.0 s.
    cfg.bandwidth = single_site(0.017056);
    cfg.client_site = {0, 0, 0, 0};
    cfg.server_site = 0;
    cfg.prf_blocks_per_sec = 201.0;  // affords 201 blocks: 40 per stream across 5 streams

    Simulation sim(cfg);
    RoundReport r1 = sim.run_round();
    CHECK(r1.comm_s == doctest::Approx(1.0));
    CHECK(r1.on_path_aes_blocks == 1024);

    RoundReport r2 = sim.run_round();
    CHECK(r2.idle_s == doctest::Approx(1.0));
    CHECK(r2.precomputed_blocks == 200);  // 40 blocks for each of 5 streams
    // Blocks 40..63 of each stream stay on-path: 8 encrypt + 8 decrypt streams.
    CHECK(r2.on_path_aes_blocks == 384);
    CHECK(r2.oracle_ok);
  }

  TEST_CASE("precompute can be disabled") {
    FederationConfig cfg = small_config();
    cfg.precompute = false;
    Simulation sim(cfg);
    sim.run_round();
    RoundReport r2 = sim.run_round();
    CHECK(r2.precomputed_blocks == 0);
    CHECK(r2.on_path_aes_blocks == 1024);
  }

  TEST_CASE("runs are bounded by the configured round count") {
    FederationConfig cfg = small_config();
    cfg.layers = {8};
    Simulation sim(cfg);
    auto reports = sim.run_all();
    CHECK(reports.size() == 3);
    CHECK(sim.next_round() == 4);
    CHECK(code_of([&] { sim.run_round(); }) == ErrorCode::InvalidArgument);
  }

  TEST_CASE("cost projection scales mean round cost to a training span") {
    PricingConfig pricing{0.68, 0.09, 5};
    CHECK(project_cost({}, 10, pricing).total_usd == 0.0);

    RoundReport r;
    r.comm_s = 3600.0;
    r.up_bytes_total = 600000000;
    r.down_bytes_total = 400000000;
    auto c = project_cost({r}, 2, pricing);
    CHECK(c.compute_usd == doctest::Approx(6.8));   // 2 hours x 0.68 x 5 instances
    CHECK(c.egress_usd == doctest::Approx(0.18));   // 2 GB x 0.09
    CHECK(c.total_usd == doctest::Approx(6.98));
    CHECK(project_cost({r}, 0, pricing).total_usd == 0.0);

    auto c2 = project_cost({r}, 4, pricing);
    CHECK(c2.total_usd == doctest::Approx(2.0 * c.total_usd));
  }

  TEST_CASE("csv rows line up with the header") {
    FederationConfig cfg = small_config();
    cfg.layers = {8};
    Simulation sim(cfg);
    RoundReport rep = sim.run_round();
    std::string header = RoundReport::csv_header();
    std::string row = rep.csv_row();
    CHECK(std::count(header.begin(), header.end(), ',') == std::count(row.begin(), row.end(), ','));
    CHECK(header.substr(0, 6) == "round,");
    CHECK(row.substr(0, 2) == "1,");
  }

}  // TEST_SUITE
