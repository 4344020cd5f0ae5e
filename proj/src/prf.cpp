#include "flashe/prf.hpp"

#include <atomic>

#include "flashe/bytes.hpp"

namespace flashe {
namespace {

std::atomic<uint64_t> g_aes_blocks{0};
std::atomic<uint64_t> g_lane_evals{0};

std::array<uint8_t, 16> prf_input(uint32_t round, uint32_t client, uint64_t block) {
  // [round u32 BE | client u32 BE | block u64 BE] fills the cipher block exactly.
  std::array<uint8_t, 16> in;
  bytes::store_be32(in.data(), round);
  bytes::store_be32(in.data() + 4, client);
  bytes::store_be64(in.data() + 8, block);
  return in;
}

uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

void SchemeParams::validate() const {
  if (modulus_bits != 16 && modulus_bits != 32 && modulus_bits != 64)
    fail(ErrorCode::InvalidArgument, "modulus_bits must be one of 16, 32, 64");
}

SecretKey::SecretKey(const std::array<uint8_t, 32>& key_bytes, SchemeParams params)
    : key_bytes_(key_bytes), params_(params), schedule_(aes::expand(key_bytes)) {
  params_.validate();
}

SecretKey SecretKey::from_seed(uint64_t seed, SchemeParams params) {
  std::array<uint8_t, 32> kb;
  uint64_t state = seed;
  for (int i = 0; i < 4; ++i) {
    uint64_t w = splitmix64(state);
    bytes::store_be64(kb.data() + 8 * i, w);
  }
  return SecretKey(kb, params);
}

PrfCounters prf_counters() {
  return {g_aes_blocks.load(std::memory_order_relaxed), g_lane_evals.load(std::memory_order_relaxed)};
}

void reset_prf_counters() {
  g_aes_blocks.store(0, std::memory_order_relaxed);
  g_lane_evals.store(0, std::memory_order_relaxed);
}

namespace detail {

void add_aes_blocks(uint64_t n) { g_aes_blocks.fetch_add(n, std::memory_order_relaxed); }
void add_lane_evals(uint64_t n) { g_lane_evals.fetch_add(n, std::memory_order_relaxed); }

uint64_t lane_value(const uint8_t* block16, unsigned lane, unsigned modulus_bits) {
  const uint8_t* p = block16 + lane * (modulus_bits / 8);
  switch (modulus_bits) {
    case 16: return bytes::load_be16(p);
    case 32: return bytes::load_be32(p);
    default: return bytes::load_be64(p);
  }
}

}  // namespace detail

std::array<uint8_t, 16> prf_block(const SecretKey& key, uint32_t round, uint32_t client, uint64_t block) {
  detail::add_aes_blocks(1);
  return aes::encrypt_block(key.schedule(), prf_input(round, client, block));
}

uint64_t prf_eval(const SecretKey& key, const PrfIndex& idx) {
  if (idx.coordinate >= kMaxCoordinate) fail(ErrorCode::InvalidArgument, "coordinate out of range");
  unsigned lanes = key.params().lanes_per_block();
  auto block = prf_block(key, idx.round, idx.client, idx.coordinate / lanes);
  detail::add_lane_evals(1);
  return detail::lane_value(block.data(), static_cast<unsigned>(idx.coordinate % lanes),
                            key.params().modulus_bits);
}

std::vector<uint64_t> mask_stream(const SecretKey& key, uint32_t round, uint32_t client, uint64_t d_lo,
                                  uint64_t d_hi) {
  if (d_lo > d_hi) fail(ErrorCode::InvalidArgument, "d_lo > d_hi");
  if (d_hi > kMaxCoordinate) fail(ErrorCode::InvalidArgument, "coordinate out of range");
  std::vector<uint64_t> out;
  out.reserve(d_hi - d_lo);
  unsigned lanes = key.params().lanes_per_block();
  unsigned bits = key.params().modulus_bits;
  for (uint64_t d = d_lo; d < d_hi;) {
    auto block = prf_block(key, round, client, d / lanes);
    unsigned lane = static_cast<unsigned>(d % lanes);
    for (; lane < lanes && d < d_hi; ++lane, ++d) out.push_back(detail::lane_value(block.data(), lane, bits));
  }
  detail::add_lane_evals(d_hi - d_lo);
  return out;
}

MaskCache precompute(const SecretKey& key, uint32_t round, const std::set<uint32_t>& clients,
                     uint64_t num_coords, uint64_t capacity_blocks) {
  if (num_coords == 0) fail(ErrorCode::InvalidArgument, "num_coords must be positive");
  if (clients.empty()) fail(ErrorCode::InvalidArgument, "client set must be nonempty");
  uint32_t lo = *clients.begin();
  uint32_t hi = *clients.rbegin();
  if (hi == UINT32_MAX) fail(ErrorCode::InvalidArgument, "client index too large");
  hi += 1;  // double masking touches j+1 for every listed j

  unsigned lanes = key.params().lanes_per_block();
  uint64_t bpc = (num_coords + lanes - 1) / lanes;
  uint64_t span = static_cast<uint64_t>(hi) - lo + 1;
  if (bpc != 0 && span > capacity_blocks / bpc)
    fail(ErrorCode::CacheOverflow, "precompute request exceeds cache capacity");

  MaskCache cache;
  cache.round_ = round;
  cache.client_lo_ = lo;
  cache.client_hi_ = hi;
  cache.blocks_per_client_ = bpc;
  cache.blocks_.resize(span * bpc);
  for (uint64_t c = 0; c < span; ++c)
    for (uint64_t b = 0; b < bpc; ++b)
      cache.blocks_[c * bpc + b] = prf_block(key, round, static_cast<uint32_t>(lo + c), b);
  return cache;
}

}  // namespace flashe
