#include <doctest.h>

#include "helpers.hpp"

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "flashe/cipher.hpp"
#include "flashe/rng.hpp"

using namespace flashe;

namespace {

std::string hex(const std::vector<uint8_t>& data) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (uint8_t byte : data) {
    s.push_back(digits[byte >> 4]);
    s.push_back(digits[byte & 0xF]);
  }
  return s;
}

SecretKey test_key(uint8_t bits) { return SecretKey::from_seed(0xFEEDull + bits, SchemeParams{bits}); }

}  // namespace

TEST_SUITE("cipher") {
  TEST_CASE("modular wrap arithmetic") {
    // 5 + 3 - 10 wraps to 2^16 - 2 in Z_{2^16}.
    CHECK(((uint64_t{5} + 3 - 10) & 0xFFFFull) == 65534);
  }

  TEST_CASE("double masking is plaintext plus own mask minus successor mask") {
    SecretKey key = test_key(16);
    uint64_t mask = key.params().residue_mask();
    std::vector<uint64_t> m = {0, 1, 65535, 12345};
    Ciphertext ct = encrypt_double(key, 2, 3, m);
    REQUIRE(ct.residues.size() == m.size());
    CHECK(ct.round == 2);
    CHECK(ct.record.multiplicity == std::map<uint32_t, uint32_t>{{3, 1}});
    for (uint64_t d = 0; d < m.size(); ++d) {
      uint64_t expect = (m[d] + prf_eval(key, {2, 3, d}) - prf_eval(key, {2, 4, d})) & mask;
      CHECK(ct.residues[d] == expect);
    }
  }

  TEST_CASE("single masking adds one mask") {
    SecretKey key = test_key(32);
    uint64_t mask = key.params().residue_mask();
    std::vector<uint64_t> m = {7, 4294967295ull, 0};
    Ciphertext ct = encrypt_single(key, 5, 9, m);
    for (uint64_t d = 0; d < m.size(); ++d)
      CHECK(ct.residues[d] == ((m[d] + prf_eval(key, {5, 9, d})) & mask));
  }

  TEST_CASE("empty plaintext is legal") {
    SecretKey key = test_key(16);
    Ciphertext ct = encrypt_double(key, 1, 1, {});
    CHECK(ct.residues.empty());
    CHECK(decrypt_double(key, ct).empty());
    Ciphertext back = deserialize(serialize(ct));
    CHECK(back.residues.empty());
    CHECK(back.record == ct.record);
  }

  TEST_CASE("encrypt rejects bad inputs") {
    SecretKey key = test_key(16);
    CHECK_THROWS_AS(encrypt_double(key, 1, 0, {1}), Error);
    CHECK_THROWS_AS(encrypt_double(key, 1, UINT32_MAX, {1}), Error);
    CHECK_THROWS_AS(encrypt_double(key, 1, 1, {uint64_t{1} << 16}), Error);
    CHECK_THROWS_AS(encrypt_single(key, 1, 1, {uint64_t{1} << 16}), Error);
  }

  TEST_CASE("random aggregate roundtrips, both schemes, all widths") {
    rng::Engine eng(424242);
    for (int trial = 0; trial < 150; ++trial) {
      uint8_t bits = std::array<uint8_t, 3>{16, 32, 64}[trial % 3];
      SecretKey key = test_key(bits);
      uint64_t mask = key.params().residue_mask();
      uint64_t coords = 1 + eng.below(64);
      uint32_t n = 1 + static_cast<uint32_t>(eng.below(6));
      uint32_t round = static_cast<uint32_t>(eng.below(1000));
      bool double_mask = trial % 2 == 0;

      std::vector<uint64_t> expect(coords, 0);
      Ciphertext agg;
      for (uint32_t j = 1; j <= n; ++j) {
        std::vector<uint64_t> m(coords);
        for (auto& v : m) {
          v = eng.next_u64() & mask;
          }
        for (uint64_t d = 0; d < coords; ++d) expect[d] = (expect[d] + m[d]) & mask;
        Ciphertext ct =
            double_mask ? encrypt_double(key, round, j, m) : encrypt_single(key, round, j, m);
        agg = j == 1 ? ct : hom_add(agg, ct);
      }
      std::vector<uint64_t> dec = double_mask ? decrypt_double(key, agg) : decrypt_single(key, agg);
      REQUIRE(dec == expect);
      CHECK(agg.record.total() == n);
    }
  }

  TEST_CASE("hom_add merges records as a multiset") {
    SecretKey key = test_key(16);
    Ciphertext a = encrypt_double(key, 1, 1, {10});
    Ciphertext b = encrypt_double(key, 1, 2, {20});
    Ciphertext ab = hom_add(a, b);
    CHECK(ab.record.multiplicity == std::map<uint32_t, uint32_t>{{1, 1}, {2, 1}});

    Ciphertext aa = hom_add(a, a);
    CHECK(aa.record.multiplicity == std::map<uint32_t, uint32_t>{{1, 2}});
    CHECK(decrypt_double(key, aa) == std::vector<uint64_t>{20});

    // Residues add mod 2^b.
    Ciphertext x = a, y = a;
    x.residues = {0xFFFF};
    y.residues = {0x0002};
    CHECK(hom_add(x, y).residues == std::vector<uint64_t>{1});
  }

  TEST_CASE("hom_add failure modes are distinct") {
    SecretKey k16 = test_key(16);
    SecretKey k32 = test_key(32);
    Ciphertext a = encrypt_double(k16, 1, 1, {1, 2});
    Ciphertext other_round = encrypt_double(k16, 2, 2, {1, 2});
    Ciphertext other_len = encrypt_double(k16, 1, 2, {1});
    Ciphertext other_params = encrypt_double(k32, 1, 2, {1, 2});
    using flashe::test::code_of;
    CHECK(code_of([&] { hom_add(a, other_round); }) == ErrorCode::RoundMismatch);
    CHECK(code_of([&] { hom_add(a, other_len); }) == ErrorCode::LengthMismatch);
    CHECK(code_of([&] { hom_add(a, other_params); }) == ErrorCode::ParamsMismatch);
  }

  TEST_CASE("participation record validation") {
    ParticipationRecord rec;
    CHECK_THROWS_AS(rec.add(0), Error);
    CHECK_THROWS_AS(rec.add(1, 0), Error);
    rec.add(1, UINT32_MAX);
    CHECK_THROWS_AS(rec.add(1), Error);
    CHECK(rec.total() == UINT32_MAX);
  }

  TEST_CASE("boundary plan collapses contiguous survivor blocks") {
    ParticipationRecord contiguous;
    for (uint32_t j = 1; j <= 10; ++j) contiguous.add(j);
    CHECK(boundary_plan(contiguous) == BoundaryPlan{{1, -1}, {11, 1}});

    ParticipationRecord gaps;
    for (uint32_t j : {1u, 3u, 5u}) gaps.add(j);
    CHECK(boundary_plan(gaps) == BoundaryPlan{{1, -1}, {2, 1}, {3, -1}, {4, 1}, {5, -1}, {6, 1}});

    CHECK(boundary_plan({}).empty());

    ParticipationRecord mult;
    mult.add(1, 2);
    CHECK(boundary_plan(mult) == BoundaryPlan{{1, -2}, {2, 2}});
  }

  TEST_CASE("decryption equals the telescoped mask sum") {
    SecretKey key = test_key(32);
    uint64_t mask = key.params().residue_mask();
    const uint32_t round = 77;
    const uint64_t coords = 9;

    ParticipationRecord rec;
    rec.add(2, 1);
    rec.add(3, 2);
    rec.add(7, 1);
    Ciphertext ct;
    ct.round = round;
    ct.params = key.params();
    ct.record = rec;
    rng::Engine eng(5);
    ct.residues.resize(coords);
    for (auto& r : ct.residues) r = eng.next_u64() & mask;

    std::vector<uint64_t> naive = ct.residues;
    for (auto [j, count] : rec.multiplicity)
      for (uint64_t d = 0; d < coords; ++d)
        naive[d] = (naive[d] +
                    count * ((prf_eval(key, {round, j + 1, d}) - prf_eval(key, {round, j, d})) & mask)) &
                   mask;
    CHECK(decrypt_double(key, ct) == naive);

    std::vector<uint64_t> naive_single = ct.residues;
    for (auto [j, count] : rec.multiplicity)
      for (uint64_t d = 0; d < coords; ++d)
        naive_single[d] = (naive_single[d] - count * prf_eval(key, {round, j, d})) & mask;
    CHECK(decrypt_single(key, ct) == naive_single);
  }

  TEST_CASE("decrypt rejects a key with different parameters") {
    SecretKey k16 = test_key(16);
    SecretKey k32 = test_key(32);
    Ciphertext ct = encrypt_double(k16, 1, 1, {1});
    CHECK_THROWS_AS(decrypt_double(k32, ct), Error);
  }

  TEST_CASE("wire format golden bytes") {
    Ciphertext ct;
    ct.params = SchemeParams{16};
    ct.round = 0x01020304;
    ct.record.add(1);
    ct.residues = {0x1122, 0x3344};
    CHECK(hex(serialize(ct)) ==
          "464c5348011001020304000000010000000100000001000000000000000222114433");
    CHECK(serialize(ct).size() == header_bytes(1) + 2 * 2);
  }

  TEST_CASE("serialization roundtrip preserves every field") {
    SecretKey key = test_key(64);
    Ciphertext ct = encrypt_double(key, 123456, 7, {1, uint64_t(-2), 3});
    ct.record.add(9, 4);
    std::vector<uint8_t> wire = serialize(ct);
    Ciphertext back = deserialize(wire);
    CHECK(back.residues == ct.residues);
    CHECK(back.round == ct.round);
    CHECK(back.record == ct.record);
    CHECK(back.params == ct.params);
  }

  TEST_CASE("deserialize rejects malformed frames") {
    SecretKey key = test_key(16);
    std::vector<uint8_t> wire = serialize(encrypt_double(key, 1, 1, {5, 6}));
    auto expect_parse = [](std::vector<uint8_t> data) {
      try {
        deserialize(data);
        return false;
      } catch (const Error& e) {
        return e.code() == ErrorCode::Parse;
      }
    };

    std::vector<uint8_t> truncated(wire.begin(), wire.end() - 1);
    CHECK(expect_parse(truncated));

    std::vector<uint8_t> extra = wire;
    extra.push_back(0);
    CHECK(expect_parse(extra));

    std::vector<uint8_t> bad_magic = wire;
    bad_magic[0] = 'X';
    CHECK(expect_parse(bad_magic));

    std::vector<uint8_t> bad_version = wire;
    bad_version[4] = 0x02;
    CHECK(expect_parse(bad_version));

    std::vector<uint8_t> compact_flagged = wire;
    compact_flagged[4] = 0x81;
    CHECK(expect_parse(compact_flagged));

    std::vector<uint8_t> bad_width = wire;
    bad_width[5] = 24;
    CHECK(expect_parse(bad_width));

    std::vector<uint8_t> zero_client = wire;
    zero_client[14 + 3] = 0;  // record entry client id -> 0
    CHECK(expect_parse(zero_client));

    CHECK(expect_parse({}));
  }

  TEST_CASE("aggregation order does not matter") {
    SecretKey key = test_key(32);
    std::vector<Ciphertext> cts;
    for (uint32_t j = 1; j <= 3; ++j) cts.push_back(encrypt_double(key, 4, j, {j, 10 * j}));
    Ciphertext left = hom_add(hom_add(cts[0], cts[1]), cts[2]);
    Ciphertext right = hom_add(hom_add(cts[2], cts[0]), cts[1]);
    CHECK(left.residues == right.residues);
    CHECK(left.record == right.record);
    CHECK(decrypt_double(key, left) == std::vector<uint64_t>{6, 60});
  }
}
