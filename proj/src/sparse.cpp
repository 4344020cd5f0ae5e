#include "flashe/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <set>

#include "flashe/bytes.hpp"

namespace flashe::sparse {

size_t popcount(const Mask& mask) {
  size_t n = 0;
  for (uint8_t b : mask) n += (b != 0);
  return n;
}

size_t LayeredUpdate::total_len() const {
  size_t n = 0;
  for (const auto& l : layers) n += l.size();
  return n;
}

SparseUpdate topk_sparsify(const LayeredUpdate& update, const std::vector<double>& residual,
                           double s_percent) {
  if (!(s_percent > 0.0 && s_percent <= 100.0))
    fail(ErrorCode::InvalidArgument, "sparsity percent must be in (0, 100]");
  size_t d_count = update.total_len();
  if (!residual.empty() && residual.size() != d_count)
    fail(ErrorCode::LengthMismatch, "residual length mismatch");

  // Error feedback: selection operates on update + carried residual.
  std::vector<double> work;
  work.reserve(d_count);
  for (const auto& layer : update.layers) work.insert(work.end(), layer.begin(), layer.end());
  if (!residual.empty())
    for (size_t d = 0; d < d_count; ++d) work[d] += residual[d];

  SparseUpdate out;
  out.mask.assign(d_count, 0);
  out.residual.assign(d_count, 0.0);

  size_t offset = 0;
  for (const auto& layer : update.layers) {
    size_t len = layer.size();
    if (len == 0) continue;
    size_t k = static_cast<size_t>(std::ceil(s_percent / 100.0 * static_cast<double>(len)));
    k = std::min(k, len);

    std::vector<uint32_t> idx(len);
    std::iota(idx.begin(), idx.end(), 0u);
    auto larger = [&](uint32_t a, uint32_t b) {
      double ma = std::fabs(work[offset + a]), mb = std::fabs(work[offset + b]);
      return ma > mb || (ma == mb && a < b);  // magnitude, ties to the lower index
    };
    if (k < len) std::nth_element(idx.begin(), idx.begin() + (k - 1), idx.end(), larger);
    for (size_t i = 0; i < k; ++i) out.mask[offset + idx[i]] = 1;
    offset += len;
  }

  for (size_t d = 0; d < d_count; ++d) {
    if (out.mask[d])
      out.values.push_back(work[d]);
    else
      out.residual[d] = work[d];
  }
  return out;
}

std::vector<uint32_t> permutation_indices(size_t n, const PermutationSeed& seed) {
  if (n > UINT32_MAX) fail(ErrorCode::InvalidArgument, "permutation too long");
  std::vector<uint32_t> pi(n);
  std::iota(pi.begin(), pi.end(), 0u);
  if (n < 2) return pi;

  // client 0 is reserved as the permutation stream; real clients start at 1.
  SecretKey key(seed.secret, SchemeParams{64});
  uint64_t ctr = 0;
  auto next = [&] { return prf_eval(key, {seed.round, 0, ctr++}); };
  for (size_t i = n - 1; i > 0; --i) {
    uint64_t bound = i + 1;
    uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t v;
    do {
      v = next();
    } while (v >= limit);
    std::swap(pi[i], pi[v % bound]);
  }
  return pi;
}

namespace {

uint64_t eval_coord(const SecretKey& key, uint32_t round, uint32_t client, uint64_t d,
                    const MaskCache* cache) {
  if (cache && cache->round() != round) cache = nullptr;
  unsigned lanes = key.params().lanes_per_block();
  uint64_t blk = d / lanes;
  unsigned lane = static_cast<unsigned>(d % lanes);
  const uint8_t* src = cache ? cache->find(client, blk) : nullptr;
  std::array<uint8_t, 16> tmp;
  if (!src) {
    tmp = prf_block(key, round, client, blk);
    src = tmp.data();
  }
  detail::add_lane_evals(1);
  return detail::lane_value(src, lane, key.params().modulus_bits);
}

}  // namespace

CompactCiphertext encrypt_compact(const SecretKey& key, uint32_t round, uint32_t client, const Mask& mask,
                                  const std::vector<uint64_t>& values, plan::Scheme scheme,
                                  const MaskCache* cache) {
  if (client == 0) fail(ErrorCode::InvalidArgument, "client indices start at 1");
  if (values.size() != popcount(mask)) fail(ErrorCode::LengthMismatch, "values do not match mask popcount");
  if (mask.size() > kMaxCoordinate) fail(ErrorCode::InvalidArgument, "vector too long");
  uint64_t rmask = key.params().residue_mask();

  CompactCiphertext ct;
  ct.round = round;
  ct.client = client;
  ct.params = key.params();
  ct.residues.reserve(values.size());
  size_t v = 0;
  for (size_t d = 0; d < mask.size(); ++d) {
    if (!mask[d]) continue;
    uint64_t m = values[v++];
    if (m & ~rmask) fail(ErrorCode::InvalidArgument, "plaintext element exceeds modulus");
    uint64_t r = m + eval_coord(key, round, client, d, cache);
    if (scheme == plan::Scheme::Double) r -= eval_coord(key, round, client + 1, d, cache);
    ct.residues.push_back(r & rmask);
  }
  return ct;
}

AlignedAggregate aggregate_aligned(const std::vector<std::pair<Mask, CompactCiphertext>>& inputs) {
  if (inputs.empty()) fail(ErrorCode::InvalidArgument, "nothing to aggregate");
  size_t d_count = inputs[0].first.size();
  uint32_t round = inputs[0].second.round;
  SchemeParams params = inputs[0].second.params;
  uint64_t rmask = params.residue_mask();

  AlignedAggregate agg;
  agg.counts.assign(d_count, 0);
  agg.union_mask.assign(d_count, 0);
  std::vector<uint64_t> dense(d_count, 0);

  for (const auto& [mask, ct] : inputs) {
    if (mask.size() != d_count) fail(ErrorCode::LengthMismatch, "mask lengths differ");
    if (ct.round != round) fail(ErrorCode::RoundMismatch, "ciphertexts from different rounds");
    if (!(ct.params == params)) fail(ErrorCode::ParamsMismatch, "scheme parameters differ");
    if (ct.residues.size() != popcount(mask))
      fail(ErrorCode::LengthMismatch, "residues do not match mask popcount");
    size_t v = 0;
    for (size_t d = 0; d < d_count; ++d) {
      if (!mask[d]) continue;
      dense[d] = (dense[d] + ct.residues[v++]) & rmask;
      agg.counts[d]++;
      agg.union_mask[d] = 1;
    }
  }

  agg.sum.round = round;
  agg.sum.client = 0;  // server aggregate
  agg.sum.params = params;
  agg.sum.residues = compact(agg.union_mask, dense);
  return agg;
}

std::vector<double> decrypt_sparse(const SecretKey& key, const CompactCiphertext& aggregated,
                                   const std::vector<std::pair<uint32_t, Mask>>& client_masks,
                                   const std::vector<uint32_t>& counts, plan::Scheme scheme,
                                   const codec::QuantParams& qp, const MaskCache* cache) {
  if (!(key.params() == aggregated.params)) fail(ErrorCode::ParamsMismatch, "key/ciphertext parameter mismatch");
  size_t d_count = counts.size();
  for (const auto& [client, mask] : client_masks) {
    if (client == 0) fail(ErrorCode::InvalidArgument, "client indices start at 1");
    if (mask.size() != d_count) fail(ErrorCode::LengthMismatch, "mask lengths differ");
  }

  uint64_t rmask = key.params().residue_mask();
  std::vector<double> out(d_count, 0.0);
  size_t v = 0;
  for (size_t d = 0; d < d_count; ++d) {
    std::set<uint32_t> support;
    for (const auto& [client, mask] : client_masks)
      if (mask[d]) support.insert(client);
    if (support.size() != counts[d])
      fail(ErrorCode::Inconsistent, "masks disagree with contributor counts");
    if (counts[d] == 0) continue;
    if (v >= aggregated.residues.size()) fail(ErrorCode::LengthMismatch, "aggregate shorter than support");

    uint64_t r = aggregated.residues[v++];
    if (scheme == plan::Scheme::Double) {
      ParticipationRecord rec;
      for (uint32_t j : support) rec.add(j);
      for (const BoundaryTerm& term : boundary_plan(rec))
        r += static_cast<uint64_t>(term.coeff) * eval_coord(key, aggregated.round, term.client, d, cache);
    } else {
      for (uint32_t j : support) r -= eval_coord(key, aggregated.round, j, d, cache);
    }
    out[d] = codec::dequantize_sum(r & rmask, counts[d], qp);
  }
  if (v != aggregated.residues.size()) fail(ErrorCode::LengthMismatch, "aggregate longer than support");
  return out;
}

std::vector<double> normalize(const std::vector<double>& sums, const std::vector<uint32_t>& counts,
                              Normalize mode) {
  if (sums.size() != counts.size()) fail(ErrorCode::LengthMismatch, "sums/counts length mismatch");
  if (mode == Normalize::Sum) return sums;
  std::vector<double> out(sums.size(), 0.0);
  for (size_t d = 0; d < sums.size(); ++d)
    if (counts[d] > 0) out[d] = sums[d] / static_cast<double>(counts[d]);
  return out;
}

std::vector<uint8_t> pack_bitmask(const Mask& mask) {
  std::vector<uint8_t> out((mask.size() + 7) / 8, 0);
  for (size_t d = 0; d < mask.size(); ++d)
    if (mask[d]) out[d >> 3] |= static_cast<uint8_t>(1u << (d & 7));
  return out;
}

Mask unpack_bitmask(const std::vector<uint8_t>& data, size_t n) {
  if (data.size() != (n + 7) / 8) fail(ErrorCode::Parse, "bitmask byte length mismatch");
  Mask mask(n, 0);
  for (size_t d = 0; d < n; ++d) mask[d] = (data[d >> 3] >> (d & 7)) & 1;
  for (size_t d = n; d < data.size() * 8; ++d)
    if ((data[d >> 3] >> (d & 7)) & 1) fail(ErrorCode::Parse, "nonzero padding bits");
  return mask;
}

std::vector<uint8_t> encode_mask_indices(const Mask& mask) {
  size_t k = popcount(mask);
  if (mask.size() > UINT32_MAX || k > UINT32_MAX) fail(ErrorCode::InvalidArgument, "mask too long");
  std::vector<uint8_t> out(4 + 4 * k);
  bytes::store_be32(out.data(), static_cast<uint32_t>(k));
  size_t off = 4;
  for (size_t d = 0; d < mask.size(); ++d) {
    if (!mask[d]) continue;
    bytes::store_be32(out.data() + off, static_cast<uint32_t>(d));
    off += 4;
  }
  return out;
}

Mask decode_mask_indices(const std::vector<uint8_t>& data, size_t n) {
  if (data.size() < 4) fail(ErrorCode::Parse, "truncated index list");
  uint32_t k = bytes::load_be32(data.data());
  if (data.size() != 4 + static_cast<size_t>(k) * 4) fail(ErrorCode::Parse, "index list length mismatch");
  Mask mask(n, 0);
  uint64_t prev = 0;
  for (uint32_t i = 0; i < k; ++i) {
    uint32_t d = bytes::load_be32(data.data() + 4 + 4 * i);
    if (d >= n) fail(ErrorCode::Parse, "index out of range");
    if (i > 0 && d <= prev) fail(ErrorCode::Parse, "indices must be strictly ascending");
    mask[d] = 1;
    prev = d;
  }
  return mask;
}

std::vector<uint8_t> serialize_compact(const CompactCiphertext& ct) {
  ct.params.validate();
  unsigned width = ct.params.modulus_bits / 8u;
  std::vector<uint8_t> out(22 + ct.residues.size() * width);
  uint8_t* p = out.data();
  std::memcpy(p, "FLSH", 4);
  p += 4;
  *p++ = kWireVersion | kCompactFlag;
  *p++ = ct.params.modulus_bits;
  bytes::store_be32(p, ct.round);
  p += 4;
  bytes::store_be32(p, ct.client);
  p += 4;
  bytes::store_be64(p, ct.residues.size());
  p += 8;
  for (uint64_t v : ct.residues) {
    bytes::store_le(p, v, width);
    p += width;
  }
  return out;
}

CompactCiphertext deserialize_compact(const std::vector<uint8_t>& data) {
  if (data.size() < 22) fail(ErrorCode::Parse, "truncated ciphertext");
  if (std::memcmp(data.data(), "FLSH", 4) != 0) fail(ErrorCode::Parse, "bad magic");
  if (data[4] != (kWireVersion | kCompactFlag)) fail(ErrorCode::Parse, "not a compact frame");
  uint8_t b = data[5];
  if (b != 16 && b != 32 && b != 64) fail(ErrorCode::Parse, "bad modulus width");

  CompactCiphertext ct;
  ct.params.modulus_bits = b;
  ct.round = bytes::load_be32(data.data() + 6);
  ct.client = bytes::load_be32(data.data() + 10);
  uint64_t count = bytes::load_be64(data.data() + 14);
  if (count > kMaxCoordinate) fail(ErrorCode::Parse, "vector too long");
  unsigned width = b / 8u;
  if (data.size() - 22 != count * width) fail(ErrorCode::Parse, "payload size mismatch");
  ct.residues.resize(count);
  for (uint64_t i = 0; i < count; ++i) ct.residues[i] = bytes::load_le(data.data() + 22 + i * width, width);
  return ct;
}

size_t sparse_uplink_bytes(const CompactCiphertext& ct, const Mask& mask) {
  return serialize_compact(ct).size() + encode_mask_indices(mask).size();
}

size_t dense_uplink_bytes(const Ciphertext& ct) { return serialize(ct).size(); }

}  // namespace flashe::sparse
