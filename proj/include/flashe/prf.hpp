#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <vector>

#include "flashe/aes.hpp"
#include "flashe/error.hpp"

namespace flashe {

// Coordinates (and therefore block indices) stay below 2^60.
inline constexpr uint64_t kMaxCoordinate = uint64_t{1} << 60;

struct SchemeParams {
  uint8_t modulus_bits = 32;  // residues live in Z_{2^b}, b in {16, 32, 64}

  unsigned lanes_per_block() const { return 128u / modulus_bits; }
  uint64_t residue_mask() const {
    return modulus_bits == 64 ? ~uint64_t{0} : (uint64_t{1} << modulus_bits) - 1;
  }
  void validate() const;
  bool operator==(const SchemeParams&) const = default;
};

class SecretKey {
 public:
  SecretKey(const std::array<uint8_t, 32>& key_bytes, SchemeParams params);
  // Deterministically expands a 64-bit seed into key material (tests, simulator).
  static SecretKey from_seed(uint64_t seed, SchemeParams params);

  const SchemeParams& params() const { return params_; }
  const aes::Key256& schedule() const { return schedule_; }
  const std::array<uint8_t, 32>& key_bytes() const { return key_bytes_; }

 private:
  std::array<uint8_t, 32> key_bytes_;
  SchemeParams params_;
  aes::Key256 schedule_;
};

struct PrfIndex {
  uint32_t round = 0;
  uint32_t client = 0;
  uint64_t coordinate = 0;
};

// Process-wide instrumentation. aes_blocks counts actual block-cipher invocations;
// lane_evals counts logical per-coordinate mask evaluations (cache hits included).
struct PrfCounters {
  uint64_t aes_blocks = 0;
  uint64_t lane_evals = 0;
};
PrfCounters prf_counters();
void reset_prf_counters();

namespace detail {
void add_aes_blocks(uint64_t n);
void add_lane_evals(uint64_t n);
// lane 0 = most significant b bits of the 128-bit block, big-endian slicing.
uint64_t lane_value(const uint8_t* block16, unsigned lane, unsigned modulus_bits);
}  // namespace detail

std::array<uint8_t, 16> prf_block(const SecretKey& key, uint32_t round, uint32_t client, uint64_t block);
uint64_t prf_eval(const SecretKey& key, const PrfIndex& idx);
std::vector<uint64_t> mask_stream(const SecretKey& key, uint32_t round, uint32_t client, uint64_t d_lo,
                                  uint64_t d_hi);

inline constexpr uint64_t kDefaultCacheCapacityBlocks = uint64_t{1} << 22;  // 64 MiB of mask blocks

// Read-only after construction. Stores PRF blocks for a contiguous client span so
// the lookup on the encryption/decryption path is pure pointer arithmetic.
class MaskCache {
 public:
  MaskCache() = default;

  uint32_t round() const { return round_; }
  uint64_t block_count() const { return blocks_.size(); }
  uint64_t blocks_per_client() const { return blocks_per_client_; }

  // nullptr on miss; otherwise 16 bytes equal to prf_block(key, round_, client, block).
  const uint8_t* find(uint32_t client, uint64_t block) const {
    if (client < client_lo_ || client > client_hi_ || block >= blocks_per_client_) return nullptr;
    return blocks_[(client - client_lo_) * blocks_per_client_ + block].data();
  }
  bool covers(uint32_t client, uint64_t num_coords, unsigned lanes) const {
    return client >= client_lo_ && client <= client_hi_ &&
           (num_coords + lanes - 1) / lanes <= blocks_per_client_;
  }

  friend MaskCache precompute(const SecretKey& key, uint32_t round, const std::set<uint32_t>& clients,
                              uint64_t num_coords, uint64_t capacity_blocks);

 private:
  uint32_t round_ = 0;
  uint32_t client_lo_ = 1;
  uint32_t client_hi_ = 0;  // empty span by default
  uint64_t blocks_per_client_ = 0;
  std::vector<std::array<uint8_t, 16>> blocks_;
};

// Fills the cache with every block encrypt/decrypt can touch for the listed clients
// in this round (each client j also needs index j+1). Throws CacheOverflow when the
// span does not fit in capacity_blocks.
MaskCache precompute(const SecretKey& key, uint32_t round, const std::set<uint32_t>& clients,
                     uint64_t num_coords, uint64_t capacity_blocks = kDefaultCacheCapacityBlocks);

}  // namespace flashe
