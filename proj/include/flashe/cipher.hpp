#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "flashe/prf.hpp"

namespace flashe {

// Multiset of contributing client indices, kept as a multiplicity map so the
// telescoping coefficient mult(j-1) - mult(j) falls out of one ordered pass.
struct ParticipationRecord {
  std::map<uint32_t, uint32_t> multiplicity;

  void add(uint32_t client, uint32_t count = 1);
  ParticipationRecord& merge(const ParticipationRecord& other);  // multiset union
  uint64_t total() const;
  bool operator==(const ParticipationRecord&) const = default;
};

struct Ciphertext {
  std::vector<uint64_t> residues;  // values in Z_{2^b}, upper bits zero
  uint32_t round = 0;
  ParticipationRecord record;
  SchemeParams params;
};

struct BoundaryTerm {
  uint32_t client = 0;
  int64_t coeff = 0;
  bool operator==(const BoundaryTerm&) const = default;
};
using BoundaryPlan = std::vector<BoundaryTerm>;

// Reduces sum_{j in record} mult(j) * (F(j+1) - F(j)) to the minimal signed
// combination of boundary masks; decryption adds coeff * F(client) per term.
BoundaryPlan boundary_plan(const ParticipationRecord& record);

Ciphertext encrypt_double(const SecretKey& key, uint32_t round, uint32_t client,
                          const std::vector<uint64_t>& plaintext, const MaskCache* cache = nullptr);
Ciphertext encrypt_single(const SecretKey& key, uint32_t round, uint32_t client,
                          const std::vector<uint64_t>& plaintext, const MaskCache* cache = nullptr);

Ciphertext hom_add(const Ciphertext& a, const Ciphertext& b);

std::vector<uint64_t> decrypt_double(const SecretKey& key, const Ciphertext& ct,
                                     const MaskCache* cache = nullptr);
std::vector<uint64_t> decrypt_single(const SecretKey& key, const Ciphertext& ct,
                                     const MaskCache* cache = nullptr);

// Wire format (all header integers big-endian, residues little-endian):
//   "FLSH" | version u8 | b u8 | round u32 | record count u32 | (client u32, mult u32)* |
//   D u64 | residues (D values, b/8 bytes each)
// Version 0x01 is this dense frame; bit 7 marks the compact frame (see sparse.hpp).
inline constexpr uint8_t kWireVersion = 0x01;
inline constexpr uint8_t kCompactFlag = 0x80;

std::vector<uint8_t> serialize(const Ciphertext& ct);
Ciphertext deserialize(const std::vector<uint8_t>& data);

// Dense header byte count for a record with the given number of entries.
inline constexpr size_t header_bytes(size_t record_entries) { return 22 + 8 * record_entries; }

namespace detail {
// dst[d] = (dst[d] + coeff * F(round, client, d)) mod 2^b for d in [0, dst.size()).
void apply_mask_term(std::vector<uint64_t>& dst, const SecretKey& key, uint32_t round, uint32_t client,
                     int64_t coeff, const MaskCache* cache);
}  // namespace detail

}  // namespace flashe
