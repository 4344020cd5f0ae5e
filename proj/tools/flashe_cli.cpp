#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "flashe/cipher.hpp"
#include "flashe/codec.hpp"
#include "flashe/error.hpp"
#include "flashe/paillier.hpp"
#include "flashe/plan.hpp"
#include "flashe/rng.hpp"
#include "flashe/sim.hpp"
#include "flashe/sparse.hpp"
#include "flashe/stats.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

struct BenchRow {
  std::string scheme;
  uint64_t size = 0;
  uint64_t bytes = 0;
  double enc_s = 0.0, dec_s = 0.0, add_s = 0.0;
  bool ok = true;
};

struct BenchSpec {
  std::vector<uint64_t> sizes{16384, 65536, 262144};
  std::vector<std::string> schemes{"flashe-double", "flashe-single", "paillier", "paillier-batched"};
  unsigned addends = 10;
  unsigned reps = 3;
  unsigned key_bits = 2048;
  unsigned modulus_bits = 16;
  std::string format = "table";
  uint64_t seed = 42;
};

BenchRow bench_flashe(const BenchSpec& spec, uint64_t size, bool double_mask) {
  using namespace flashe;
  BenchRow row;
  row.scheme = double_mask ? "flashe-double" : "flashe-single";
  row.size = size;

  SecretKey key = SecretKey::from_seed(rng::derive_seed(spec.seed, 1),
                                       SchemeParams{static_cast<uint8_t>(spec.modulus_bits)});
  uint64_t mask = key.params().residue_mask();

  std::vector<std::vector<uint64_t>> pts(spec.addends);
  for (unsigned a = 0; a < spec.addends; ++a) {
    rng::Engine eng(rng::derive_seed(spec.seed, 100 + a));
    pts[a].resize(size);
    for (auto& v : pts[a]) v = eng.next_u64() & mask;
  }
  std::vector<uint64_t> expected(size, 0);
  for (unsigned a = 0; a < spec.addends; ++a)
    for (uint64_t d = 0; d < size; ++d) expected[d] = (expected[d] + pts[a][d]) & mask;

  auto enc = [&](uint32_t client, const std::vector<uint64_t>& pt) {
    return double_mask ? encrypt_double(key, 1, client, pt) : encrypt_single(key, 1, client, pt);
  };

  std::vector<double> enc_t, add_t, dec_t;
  for (unsigned rep = 0; rep < spec.reps; ++rep) {
    auto t0 = Clock::now();
    Ciphertext first = enc(1, pts[0]);
    enc_t.push_back(seconds_since(t0));

    std::vector<Ciphertext> rest;
    for (unsigned a = 1; a < spec.addends; ++a) rest.push_back(enc(a + 1, pts[a]));

    t0 = Clock::now();
    Ciphertext agg = first;
    for (auto& ct : rest) agg = hom_add(agg, ct);
    add_t.push_back(seconds_since(t0));

    t0 = Clock::now();
    std::vector<uint64_t> dec = double_mask ? decrypt_double(key, agg) : decrypt_single(key, agg);
    dec_t.push_back(seconds_since(t0));
    if (dec != expected) row.ok = false;

    if (rep == 0) row.bytes = serialize(first).size();
  }
  row.enc_s = median(enc_t);
  row.add_s = median(add_t);
  row.dec_s = median(dec_t);
  return row;
}

BenchRow bench_paillier(const BenchSpec& spec, uint64_t size, bool batched) {
  using namespace flashe;
  namespace pal = flashe::paillier;
  BenchRow row;
  row.scheme = batched ? "paillier-batched" : "paillier";
  row.size = size;

  pal::Keypair kp = pal::Keypair::generate(spec.key_bits, rng::derive_seed(spec.seed, 2));
  const uint64_t ct_bytes = (2 * static_cast<uint64_t>(spec.key_bits) + 7) / 8;

  std::vector<std::vector<uint64_t>> vals(spec.addends);
  for (unsigned a = 0; a < spec.addends; ++a) {
    rng::Engine eng(rng::derive_seed(spec.seed, 300 + a));
    vals[a].resize(size);
    for (auto& v : vals[a]) v = eng.next_u64() & 0xFFFFu;
  }

  pal::BatchLayout layout = pal::BatchLayout::fit(spec.key_bits, 16, 4);
  if (batched && layout.slots == 0) {
    row.ok = false;
    return row;
  }

  // One logical upload = the element-wise (or slot-packed) ciphertext vector.
  auto encrypt_vector = [&](const std::vector<uint64_t>& v, pal::Rng& prng) {
    std::vector<mpz_class> out;
    if (batched) {
      for (size_t off = 0; off < v.size(); off += layout.slots) {
        size_t len = std::min<size_t>(layout.slots, v.size() - off);
        std::vector<uint64_t> chunk(v.begin() + off, v.begin() + off + len);
        out.push_back(pal::encrypt(kp.pub, pal::batch_pack(chunk, layout), prng));
      }
    } else {
      out.reserve(v.size());
      for (uint64_t m : v) out.push_back(pal::encrypt(kp.pub, mpz_class(static_cast<unsigned long>(m)), prng));
    }
    return out;
  };

  std::vector<double> enc_t, add_t, dec_t;
  for (unsigned rep = 0; rep < spec.reps; ++rep) {
    pal::Rng prng(rng::derive_seed(spec.seed, 400 + rep));

    auto t0 = Clock::now();
    std::vector<mpz_class> first = encrypt_vector(vals[0], prng);
    enc_t.push_back(seconds_since(t0));

    std::vector<std::vector<mpz_class>> rest;
    for (unsigned a = 1; a < spec.addends; ++a) rest.push_back(encrypt_vector(vals[a], prng));

    t0 = Clock::now();
    std::vector<mpz_class> agg = first;
    for (auto& v : rest)
      for (size_t i = 0; i < agg.size(); ++i) agg[i] = pal::hom_add(kp.pub, agg[i], v[i]);
    add_t.push_back(seconds_since(t0));

    t0 = Clock::now();
    std::vector<uint64_t> dec;
    dec.reserve(size);
    if (batched) {
      for (size_t i = 0; i < agg.size(); ++i) {
        size_t len = std::min<size_t>(layout.slots, size - i * layout.slots);
        std::vector<uint64_t> part = pal::batch_unpack(pal::decrypt(kp, agg[i]), layout, len);
        dec.insert(dec.end(), part.begin(), part.end());
      }
    } else {
      for (const auto& c : agg) dec.push_back(mpz_class(pal::decrypt(kp, c)).get_ui());
    }
    dec_t.push_back(seconds_since(t0));

    for (uint64_t d = 0; d < size; ++d) {
      uint64_t sum = 0;
      for (unsigned a = 0; a < spec.addends; ++a) sum += vals[a][d];
      if (d < dec.size() ? dec[d] != sum : true) row.ok = false;
    }
    if (size == 0 && !dec.empty()) row.ok = false;

    if (rep == 0) row.bytes = static_cast<uint64_t>(first.size()) * ct_bytes;
  }
  row.enc_s = median(enc_t);
  row.add_s = median(add_t);
  row.dec_s = median(dec_t);
  return row;
}

void print_bench(const std::vector<BenchRow>& rows, const std::string& format) {
  if (format == "json") {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows)
      arr.push_back({{"scheme", r.scheme},
                     {"size", r.size},
                     {"bytes", r.bytes},
                     {"enc_s", r.enc_s},
                     {"dec_s", r.dec_s},
                     {"add_s", r.add_s},
                     {"ok", r.ok}});
    std::cout << arr.dump(2) << "\n";
    return;
  }
  if (format == "csv") {
    std::cout << "scheme,size,bytes,enc_s,dec_s,add_s,ok\n";
    for (const auto& r : rows)
      std::cout << r.scheme << ',' << r.size << ',' << r.bytes << ',' << r.enc_s << ',' << r.dec_s << ','
                << r.add_s << ',' << (r.ok ? 1 : 0) << "\n";
    return;
  }
  std::printf("%-18s %10s %14s %12s %12s %12s %4s\n", "scheme", "size", "bytes", "enc_s", "dec_s", "add_s",
              "ok");
  for (const auto& r : rows)
    std::printf("%-18s %10llu %14llu %12.6f %12.6f %12.6f %4s\n", r.scheme.c_str(),
                static_cast<unsigned long long>(r.size), static_cast<unsigned long long>(r.bytes), r.enc_s,
                r.dec_s, r.add_s, r.ok ? "yes" : "NO");
}

int cmd_bench(const BenchSpec& spec) {
  for (const auto& s : spec.schemes)
    if (s != "flashe-double" && s != "flashe-single" && s != "paillier" && s != "paillier-batched") {
      std::cerr << "unknown scheme: " << s << "\n";
      return 2;
    }
  if (spec.reps < 1 || spec.addends < 1) {
    std::cerr << "reps and addends must be at least 1\n";
    return 2;
  }
  std::vector<BenchRow> rows;
  for (uint64_t size : spec.sizes)
    for (const auto& s : spec.schemes) {
      if (s == "flashe-double")
        rows.push_back(bench_flashe(spec, size, true));
      else if (s == "flashe-single")
        rows.push_back(bench_flashe(spec, size, false));
      else if (s == "paillier")
        rows.push_back(bench_paillier(spec, size, false));
      else
        rows.push_back(bench_paillier(spec, size, true));
    }
  print_bench(rows, spec.format);
  for (const auto& r : rows)
    if (!r.ok) {
      std::cerr << "roundtrip mismatch in " << r.scheme << " at size " << r.size << "\n";
      return 1;
    }
  return 0;
}

int cmd_simulate(const std::string& config_path, const std::string& out_path, uint32_t rounds_override,
                 bool seed_given, uint64_t seed, uint64_t default_seed) {
  using namespace flashe;
  std::ifstream in(config_path);
  if (!in) {
    std::cerr << "cannot open config: " << config_path << "\n";
    return 2;
  }
  sim::FederationConfig cfg;
  try {
    nlohmann::json j = nlohmann::json::parse(in);
    bool had_seed = j.contains("seed");
    cfg = sim::FederationConfig::from_json(j);
    if (!had_seed) cfg.seed = default_seed;
    if (seed_given) cfg.seed = seed;
    if (rounds_override > 0) cfg.rounds = rounds_override;
    cfg.validate();
  } catch (const std::exception& e) {
    std::cerr << "bad config: " << e.what() << "\n";
    return 2;
  }

  sim::Simulation simulation(cfg);
  std::vector<sim::RoundReport> reports = simulation.run_all();

  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) {
      std::cerr << "cannot write: " << out_path << "\n";
      return 2;
    }
    out = &file;
  }
  for (const auto& r : reports) *out << r.to_json().dump() << "\n";
  if (!out_path.empty()) {
    std::ofstream csv(out_path + ".csv");
    csv << sim::RoundReport::csv_header() << "\n";
    for (const auto& r : reports) csv << r.csv_row() << "\n";
  }

  bool all_ok = true;
  uint64_t bytes = 0;
  for (const auto& r : reports) {
    all_ok = all_ok && r.oracle_ok;
    bytes += r.up_bytes_total + r.down_bytes_total;
  }
  sim::CostProjection cost = sim::project_cost(reports, cfg.rounds, cfg.pricing);
  char cost_line[160];
  std::snprintf(cost_line, sizeof(cost_line), "projected $%.6f (compute $%.6f, egress $%.6f)",
                cost.total_usd, cost.compute_usd, cost.egress_usd);
  std::cerr << "simulated " << reports.size() << " rounds, " << bytes << " bytes on the wire, " << cost_line
            << "\n";
  if (!all_ok) {
    std::cerr << "plaintext oracle mismatch\n";
    return 1;
  }
  return 0;
}

bool report(bool ok, const std::string& name, const std::string& detail = "") {
  std::cout << (ok ? "[PASS] " : "[FAIL] ") << name;
  if (!detail.empty()) std::cout << " (" << detail << ")";
  std::cout << "\n";
  return ok;
}

bool verify_roundtrip(uint64_t seed) {
  using namespace flashe;
  bool ok = true;
  for (uint8_t b : {16, 32, 64}) {
    SecretKey key = SecretKey::from_seed(rng::derive_seed(seed, b), SchemeParams{b});
    uint64_t mask = key.params().residue_mask();
    rng::Engine eng(rng::derive_seed(seed, 1000 + b));
    const uint64_t coords = 257;
    const uint32_t n = 5;
    std::vector<std::vector<uint64_t>> pts(n);
    std::vector<uint64_t> expect(coords, 0);
    for (uint32_t j = 0; j < n; ++j) {
      pts[j].resize(coords);
      for (uint64_t d = 0; d < coords; ++d) {
        pts[j][d] = eng.next_u64() & mask;
        expect[d] = (expect[d] + pts[j][d]) & mask;
      }
    }
    for (bool double_mask : {true, false}) {
      Ciphertext agg;
      for (uint32_t j = 0; j < n; ++j) {
        Ciphertext ct = double_mask ? encrypt_double(key, 7, j + 1, pts[j])
                                    : encrypt_single(key, 7, j + 1, pts[j]);
        agg = j == 0 ? ct : hom_add(agg, ct);
      }
      Ciphertext back = deserialize(serialize(agg));
      std::vector<uint64_t> dec = double_mask ? decrypt_double(key, back) : decrypt_single(key, back);
      ok &= report(dec == expect,
                   std::string("roundtrip b=") + std::to_string(b) +
                       (double_mask ? " double" : " single"));
    }
  }
  return ok;
}

bool verify_oracle() {
  using namespace flashe;
  auto hex = [](const std::array<uint8_t, 16>& block) {
    static const char* digits = "0123456789abcdef";
    std::string s;
    for (uint8_t byte : block) {
      s.push_back(digits[byte >> 4]);
      s.push_back(digits[byte & 0xF]);
    }
    return s;
  };
  bool ok = true;

  std::array<uint8_t, 32> zero_key{};
  std::array<uint8_t, 16> zero_block{};
  ok &= report(hex(aes::encrypt_block(aes::expand(zero_key), zero_block)) ==
                   "dc95c078a2408989ad48a21492842087",
               "block cipher zero-key vector");

  std::array<uint8_t, 32> seq_key;
  for (int i = 0; i < 32; ++i) seq_key[i] = static_cast<uint8_t>(i);
  std::array<uint8_t, 16> seq_pt;
  for (int i = 0; i < 16; ++i) seq_pt[i] = static_cast<uint8_t>(0x11 * i);
  ok &= report(hex(aes::encrypt_block(aes::expand(seq_key), seq_pt)) ==
                   "8ea2b7ca516745bfeafc49904b496089",
               "block cipher standard vector");

  codec::QuantParams qp{1.0, 16};
  ok &= report(codec::quantize(1.0, qp) == 65535 && codec::quantize(-1.0, qp) == 0 &&
                   codec::quantize(-2.0, qp) == 0,
               "quantizer saturation");
  double two = codec::dequantize_sum(codec::quantize(0.25, qp) + codec::quantize(0.75, qp), 2, qp);
  ok &= report(std::abs(two - 1.0) <= 2.0 / 65535.0, "dequantized pair sum");

  double p = stats::chi_square_sf(330.5197436340, 255);
  ok &= report(std::abs(p - 0.001) < 1e-6, "chi-square critical point");
  return ok;
}

bool verify_crossover(uint64_t seed) {
  using namespace flashe;
  bool ok = true;
  plan::MonteCarloResult mc = plan::monte_carlo_masks(20, 0.3, 1, 4000, seed);
  double closed_d = plan::expected_masks_double(20, 0.3, 1);
  double closed_s = plan::expected_masks_single(20, 0.3, 1);
  ok &= report(std::abs(mc.mean_single - closed_s) <= 4 * mc.stderr_single + 1e-9,
               "single-mask closed form within Monte-Carlo error");
  // The closed double-mask form sits exactly 2d(1-d)D above the per-draw expectation.
  double adjusted_d = closed_d - 2.0 * 0.3 * 0.7;
  ok &= report(std::abs(mc.mean_double - adjusted_d) <= 4 * mc.stderr_double + 1e-6,
               "double-mask closed form within Monte-Carlo error");
  double cross = plan::crossover_estimate(20, 1, 2000, seed);
  std::ostringstream oss;
  oss << "d* = " << cross;
  ok &= report(cross >= 0.3 && cross <= 0.5, "crossover dropout N=20", oss.str());
  return ok;
}

bool verify_uniformity(uint64_t seed) {
  using namespace flashe;
  SecretKey key = SecretKey::from_seed(rng::derive_seed(seed, 99), SchemeParams{16});
  const uint64_t coords = 50000;
  std::vector<uint64_t> pt(coords, 12345 & key.params().residue_mask());
  Ciphertext ct = encrypt_double(key, 3, 1, pt);
  std::vector<uint8_t> bytes;
  bytes.reserve(2 * coords);
  for (uint64_t r : ct.residues) {
    bytes.push_back(static_cast<uint8_t>(r));
    bytes.push_back(static_cast<uint8_t>(r >> 8));
  }
  stats::ChiSquareResult chi = stats::chi_square_uniform_bytes(bytes);
  std::ostringstream oss;
  oss << "stat = " << chi.statistic << ", p = " << chi.p_value;
  return report(chi.statistic < 330.5197436340, "ciphertext byte uniformity", oss.str());
}

int cmd_verify(const std::string& suite, uint64_t seed) {
  bool ok = true;
  bool known = false;
  if (suite == "roundtrip" || suite == "all") {
    ok &= verify_roundtrip(seed);
    known = true;
  }
  if (suite == "oracle" || suite == "all") {
    ok &= verify_oracle();
    known = true;
  }
  if (suite == "crossover" || suite == "all") {
    ok &= verify_crossover(seed);
    known = true;
  }
  if (suite == "uniformity" || suite == "all") {
    ok &= verify_uniformity(seed);
    known = true;
  }
  if (!known) {
    std::cerr << "unknown suite: " << suite << " (expected roundtrip, oracle, crossover, uniformity, all)\n";
    return 2;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  uint64_t default_seed = 42;
  if (const char* env = std::getenv("FLASHE_SEED")) {
    try {
      default_seed = std::stoull(env);
    } catch (...) {
      std::cerr << "FLASHE_SEED must be an integer\n";
      return 2;
    }
  }

  CLI::App app{"Additively symmetric homomorphic encryption for cross-silo federated aggregation"};
  app.require_subcommand(1);

  BenchSpec spec;
  spec.seed = default_seed;
  CLI::App* bench = app.add_subcommand("bench", "Micro-benchmarks: bytes and enc/dec/add wall time");
  bench->add_option("--sizes", spec.sizes, "Vector lengths to benchmark")->delimiter(',');
  bench->add_option("--schemes", spec.schemes, "Subset of flashe-double, flashe-single, paillier, paillier-batched")
      ->delimiter(',');
  bench->add_option("--addends", spec.addends, "Ciphertexts folded by the add benchmark");
  bench->add_option("--reps", spec.reps, "Repetitions per measurement (median reported)");
  bench->add_option("--key-bits", spec.key_bits, "Paillier modulus bits");
  bench->add_option("-b,--modulus-bits", spec.modulus_bits, "Symmetric residue width (16, 32, 64)");
  bench->add_option("--format", spec.format, "Output format")
      ->check(CLI::IsMember({"table", "json", "csv"}));
  bench->add_option("--seed", spec.seed, "Deterministic seed");

  std::string config_path, out_path;
  uint32_t rounds_override = 0;
  uint64_t sim_seed = default_seed;
  CLI::App* simulate = app.add_subcommand("simulate", "Run a federation round simulation from a JSON config");
  simulate->add_option("--config", config_path, "Config JSON path")->required();
  simulate->add_option("--out", out_path, "JSONL output path (a .csv sibling is written next to it)");
  simulate->add_option("--rounds", rounds_override, "Override the configured round count");
  CLI::Option* sim_seed_opt = simulate->add_option("--seed", sim_seed, "Override the configured seed");

  std::string suite = "all";
  uint64_t verify_seed = default_seed;
  CLI::App* verify = app.add_subcommand("verify", "Self-checks: roundtrip, oracle, crossover, uniformity");
  verify->add_option("--suite", suite, "Suite name or 'all'");
  verify->add_option("--seed", verify_seed, "Deterministic seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (bench->parsed()) return cmd_bench(spec);
    if (simulate->parsed())
      return cmd_simulate(config_path, out_path, rounds_override, sim_seed_opt->count() > 0, sim_seed,
                          default_seed);
    if (verify->parsed()) return cmd_verify(suite, verify_seed);
  } catch (const flashe::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == flashe::ErrorCode::InvalidArgument || e.code() == flashe::ErrorCode::Parse ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
