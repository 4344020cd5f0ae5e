#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "flashe/cipher.hpp"
#include "flashe/codec.hpp"
#include "flashe/error.hpp"
#include "flashe/plan.hpp"

namespace flashe::sparse {

// One byte per coordinate, 0 or 1. Wire encodings below.
using Mask = std::vector<uint8_t>;

size_t popcount(const Mask& mask);

struct LayeredUpdate {
  std::vector<std::vector<double>> layers;
  uint32_t round = 0;
  uint32_t client = 0;

  size_t total_len() const;
};

struct SparseUpdate {
  Mask mask;                     // flattened, one bit per coordinate
  std::vector<double> values;    // selected entries in ascending coordinate order
  std::vector<double> residual;  // dense; zero exactly where mask is set
};

// Error feedback first (update + carried residual), then per layer keeps the
// k = ceil(s% * layer_len) largest-magnitude entries, ties to the lower index.
SparseUpdate topk_sparsify(const LayeredUpdate& update, const std::vector<double>& residual,
                           double s_percent);

struct PermutationSeed {
  std::array<uint8_t, 32> secret{};
  uint32_t round = 0;
};

// Fisher-Yates order driven by the PRF keyed with the shared secret; every
// holder of the seed derives the identical permutation.
std::vector<uint32_t> permutation_indices(size_t n, const PermutationSeed& seed);

template <typename T>
std::vector<T> permute(const std::vector<T>& x, const std::vector<uint32_t>& pi) {
  if (x.size() != pi.size()) fail(ErrorCode::LengthMismatch, "permutation length mismatch");
  std::vector<T> y(x.size());
  for (size_t i = 0; i < x.size(); ++i) y[i] = x[pi[i]];
  return y;
}

template <typename T>
std::vector<T> inverse_permute(const std::vector<T>& y, const std::vector<uint32_t>& pi) {
  if (y.size() != pi.size()) fail(ErrorCode::LengthMismatch, "permutation length mismatch");
  std::vector<T> x(y.size());
  for (size_t i = 0; i < y.size(); ++i) x[pi[i]] = y[i];
  return x;
}

template <typename T>
std::vector<T> compact(const Mask& mask, const std::vector<T>& dense) {
  if (mask.size() != dense.size()) fail(ErrorCode::LengthMismatch, "mask/vector length mismatch");
  std::vector<T> out;
  for (size_t d = 0; d < mask.size(); ++d)
    if (mask[d]) out.push_back(dense[d]);
  return out;
}

template <typename T>
std::vector<T> expand(const Mask& mask, const std::vector<T>& values) {
  if (values.size() != popcount(mask)) fail(ErrorCode::LengthMismatch, "values do not match mask popcount");
  std::vector<T> out(mask.size(), T{});
  size_t v = 0;
  for (size_t d = 0; d < mask.size(); ++d)
    if (mask[d]) out[d] = values[v++];
  return out;
}

// Sparse-mode ciphertext: compacted residues plus (round, client); the
// participation record is dropped, masks carry the support instead.
struct CompactCiphertext {
  std::vector<uint64_t> residues;
  uint32_t round = 0;
  uint32_t client = 0;  // 0 marks a server-side aggregate
  SchemeParams params;
};

CompactCiphertext encrypt_compact(const SecretKey& key, uint32_t round, uint32_t client, const Mask& mask,
                                  const std::vector<uint64_t>& values, plan::Scheme scheme,
                                  const MaskCache* cache = nullptr);

struct AlignedAggregate {
  std::vector<uint32_t> counts;  // per dense coordinate, number of contributors
  Mask union_mask;
  CompactCiphertext sum;  // residues over the union support, ascending coordinate order
};

AlignedAggregate aggregate_aligned(const std::vector<std::pair<Mask, CompactCiphertext>>& inputs);

// Rebuilds S_d from the per-client masks, removes masks per scheme, then
// dequantizes with k = counts[d]; zero-count coordinates decode to 0.
std::vector<double> decrypt_sparse(const SecretKey& key, const CompactCiphertext& aggregated,
                                   const std::vector<std::pair<uint32_t, Mask>>& client_masks,
                                   const std::vector<uint32_t>& counts, plan::Scheme scheme,
                                   const codec::QuantParams& qp, const MaskCache* cache = nullptr);

enum class Normalize { Sum, Mean };

std::vector<double> normalize(const std::vector<double>& sums, const std::vector<uint32_t>& counts,
                              Normalize mode);

// D bits packed little-endian within bytes (bit d lives at byte d/8, bit d%8).
std::vector<uint8_t> pack_bitmask(const Mask& mask);
Mask unpack_bitmask(const std::vector<uint8_t>& data, size_t n);

// Uplink mask encoding: u32 BE count followed by the ascending u32 BE coordinates.
std::vector<uint8_t> encode_mask_indices(const Mask& mask);
Mask decode_mask_indices(const std::vector<uint8_t>& data, size_t n);

// Compact frame: "FLSH" | version 0x81 | b | round u32 | client u32 | count u64 | residues.
std::vector<uint8_t> serialize_compact(const CompactCiphertext& ct);
CompactCiphertext deserialize_compact(const std::vector<uint8_t>& data);

// Measured wire bytes for one client's sparse uplink (compact frame + index-encoded mask)
// and for the dense equivalent.
size_t sparse_uplink_bytes(const CompactCiphertext& ct, const Mask& mask);
size_t dense_uplink_bytes(const Ciphertext& ct);

}  // namespace flashe::sparse
