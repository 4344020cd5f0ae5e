#include "flashe/cipher.hpp"

#include <cstring>
#include <set>

#include "flashe/bytes.hpp"

namespace flashe {

void ParticipationRecord::add(uint32_t client, uint32_t count) {
  if (client == 0) fail(ErrorCode::InvalidArgument, "client indices start at 1");
  if (count == 0) fail(ErrorCode::InvalidArgument, "multiplicity must be positive");
  uint32_t& slot = multiplicity[client];
  if (slot > UINT32_MAX - count) fail(ErrorCode::InvalidArgument, "multiplicity overflow");
  slot += count;
}

ParticipationRecord& ParticipationRecord::merge(const ParticipationRecord& other) {
  for (auto [client, count] : other.multiplicity) add(client, count);
  return *this;
}

uint64_t ParticipationRecord::total() const {
  uint64_t t = 0;
  for (auto [client, count] : multiplicity) t += count;
  return t;
}

BoundaryPlan boundary_plan(const ParticipationRecord& record) {
  auto get = [&](uint32_t j) -> int64_t {
    auto it = record.multiplicity.find(j);
    return it == record.multiplicity.end() ? 0 : static_cast<int64_t>(it->second);
  };
  std::set<uint32_t> candidates;
  for (auto [client, count] : record.multiplicity) {
    candidates.insert(client);
    candidates.insert(client + 1);
  }
  BoundaryPlan plan;
  for (uint32_t c : candidates) {
    int64_t coeff = get(c - 1) - get(c);
    if (coeff != 0) plan.push_back({c, coeff});
  }
  return plan;
}

namespace detail {

template <unsigned kBits>
uint64_t load_lane(const uint8_t* p) {
  if constexpr (kBits == 16) return bytes::load_be16(p);
  if constexpr (kBits == 32) return bytes::load_be32(p);
  return bytes::load_be64(p);
}

// Coordinate d of a client's contiguous cache row starts at byte d * (kBits / 8),
// because lanes_per_block * (kBits / 8) == 16. These row walks keep the warm path
// free of per-block lookups and per-lane width dispatch.
template <unsigned kBits>
void add_scaled_row(uint64_t* dst, const uint8_t* row, uint64_t scale, uint64_t mask, uint64_t d_count) {
  constexpr unsigned kStep = kBits / 8;
  for (uint64_t d = 0; d < d_count; ++d)
    dst[d] = (dst[d] + scale * load_lane<kBits>(row + d * kStep)) & mask;
}

void apply_mask_term(std::vector<uint64_t>& dst, const SecretKey& key, uint32_t round, uint32_t client,
                     int64_t coeff, const MaskCache* cache) {
  if (cache && cache->round() != round) cache = nullptr;
  const SchemeParams& p = key.params();
  unsigned lanes = p.lanes_per_block();
  unsigned bits = p.modulus_bits;
  uint64_t mask = p.residue_mask();
  uint64_t d_count = dst.size();
  uint64_t scale = static_cast<uint64_t>(coeff);  // two's complement gives coeff mod 2^64
  if (cache && d_count > 0 && cache->covers(client, d_count, lanes)) {
    const uint8_t* row = cache->find(client, 0);
    switch (bits) {
      case 16: add_scaled_row<16>(dst.data(), row, scale, mask, d_count); break;
      case 32: add_scaled_row<32>(dst.data(), row, scale, mask, d_count); break;
      default: add_scaled_row<64>(dst.data(), row, scale, mask, d_count); break;
    }
    add_lane_evals(d_count);
    return;
  }
  for (uint64_t d = 0, blk = 0; d < d_count; ++blk) {
    std::array<uint8_t, 16> tmp;
    const uint8_t* src = cache ? cache->find(client, blk) : nullptr;
    if (!src) {
      tmp = prf_block(key, round, client, blk);
      src = tmp.data();
    }
    for (unsigned l = 0; l < lanes && d < d_count; ++l, ++d)
      dst[d] = (dst[d] + scale * lane_value(src, l, bits)) & mask;
  }
  add_lane_evals(d_count);
}

}  // namespace detail

namespace {

template <unsigned kBits, bool kDouble>
void mask_rows(uint64_t* out, const uint64_t* pt, const uint8_t* a, const uint8_t* b, uint64_t mask,
               uint64_t d_count) {
  constexpr unsigned kStep = kBits / 8;
  for (uint64_t d = 0; d < d_count; ++d) {
    uint64_t v = pt[d];
    if (v & ~mask) fail(ErrorCode::InvalidArgument, "plaintext element exceeds modulus");
    uint64_t r = v + detail::load_lane<kBits>(a + d * kStep);
    if constexpr (kDouble) r -= detail::load_lane<kBits>(b + d * kStep);
    out[d] = r & mask;
  }
}

template <bool kDouble>
void mask_rows(uint64_t* out, const uint64_t* pt, const uint8_t* a, const uint8_t* b, uint64_t mask,
               uint64_t d_count, unsigned bits) {
  switch (bits) {
    case 16: mask_rows<16, kDouble>(out, pt, a, b, mask, d_count); break;
    case 32: mask_rows<32, kDouble>(out, pt, a, b, mask, d_count); break;
    default: mask_rows<64, kDouble>(out, pt, a, b, mask, d_count); break;
  }
}

Ciphertext encrypt_masked(const SecretKey& key, uint32_t round, uint32_t client,
                          const std::vector<uint64_t>& plaintext, const MaskCache* cache,
                          bool double_mask) {
  const SchemeParams& p = key.params();
  if (client == 0) fail(ErrorCode::InvalidArgument, "client indices start at 1");
  if (double_mask && client == UINT32_MAX) fail(ErrorCode::InvalidArgument, "client index too large");
  if (plaintext.size() > kMaxCoordinate) fail(ErrorCode::InvalidArgument, "vector too long");
  if (cache && cache->round() != round) cache = nullptr;

  unsigned lanes = p.lanes_per_block();
  unsigned bits = p.modulus_bits;
  uint64_t mask = p.residue_mask();
  uint64_t d_count = plaintext.size();

  Ciphertext ct;
  ct.round = round;
  ct.params = p;
  ct.record.add(client);
  ct.residues.resize(d_count);

  if (cache && d_count > 0 && cache->covers(client, d_count, lanes) &&
      (!double_mask || cache->covers(client + 1, d_count, lanes))) {
    const uint8_t* a = cache->find(client, 0);
    const uint8_t* b = double_mask ? cache->find(client + 1, 0) : nullptr;
    if (double_mask)
      mask_rows<true>(ct.residues.data(), plaintext.data(), a, b, mask, d_count, bits);
    else
      mask_rows<false>(ct.residues.data(), plaintext.data(), a, b, mask, d_count, bits);
    detail::add_lane_evals(double_mask ? 2 * d_count : d_count);
    return ct;
  }

  for (uint64_t d = 0, blk = 0; d < d_count; ++blk) {
    std::array<uint8_t, 16> ta, tb;
    const uint8_t* a = cache ? cache->find(client, blk) : nullptr;
    if (!a) {
      ta = prf_block(key, round, client, blk);
      a = ta.data();
    }
    const uint8_t* b = nullptr;
    if (double_mask) {
      b = cache ? cache->find(client + 1, blk) : nullptr;
      if (!b) {
        tb = prf_block(key, round, client + 1, blk);
        b = tb.data();
      }
    }
    for (unsigned l = 0; l < lanes && d < d_count; ++l, ++d) {
      uint64_t v = plaintext[d];
      if (v & ~mask) fail(ErrorCode::InvalidArgument, "plaintext element exceeds modulus");
      uint64_t r = v + detail::lane_value(a, l, bits);
      if (double_mask) r -= detail::lane_value(b, l, bits);
      ct.residues[d] = r & mask;
    }
  }
  detail::add_lane_evals(double_mask ? 2 * d_count : d_count);
  return ct;
}

}  // namespace

Ciphertext encrypt_double(const SecretKey& key, uint32_t round, uint32_t client,
                          const std::vector<uint64_t>& plaintext, const MaskCache* cache) {
  return encrypt_masked(key, round, client, plaintext, cache, true);
}

Ciphertext encrypt_single(const SecretKey& key, uint32_t round, uint32_t client,
                          const std::vector<uint64_t>& plaintext, const MaskCache* cache) {
  return encrypt_masked(key, round, client, plaintext, cache, false);
}

Ciphertext hom_add(const Ciphertext& a, const Ciphertext& b) {
  if (a.round != b.round) fail(ErrorCode::RoundMismatch, "ciphertexts from different rounds");
  if (a.residues.size() != b.residues.size()) fail(ErrorCode::LengthMismatch, "residue lengths differ");
  if (!(a.params == b.params)) fail(ErrorCode::ParamsMismatch, "scheme parameters differ");
  Ciphertext out;
  out.round = a.round;
  out.params = a.params;
  out.record = a.record;
  out.record.merge(b.record);
  uint64_t mask = a.params.residue_mask();
  out.residues.resize(a.residues.size());
  for (size_t d = 0; d < a.residues.size(); ++d)
    out.residues[d] = (a.residues[d] + b.residues[d]) & mask;
  return out;
}

std::vector<uint64_t> decrypt_double(const SecretKey& key, const Ciphertext& ct, const MaskCache* cache) {
  if (!(key.params() == ct.params)) fail(ErrorCode::ParamsMismatch, "key/ciphertext parameter mismatch");
  std::vector<uint64_t> out = ct.residues;
  for (const BoundaryTerm& term : boundary_plan(ct.record))
    detail::apply_mask_term(out, key, ct.round, term.client, term.coeff, cache);
  return out;
}

std::vector<uint64_t> decrypt_single(const SecretKey& key, const Ciphertext& ct, const MaskCache* cache) {
  if (!(key.params() == ct.params)) fail(ErrorCode::ParamsMismatch, "key/ciphertext parameter mismatch");
  std::vector<uint64_t> out = ct.residues;
  for (auto [client, count] : ct.record.multiplicity)
    detail::apply_mask_term(out, key, ct.round, client, -static_cast<int64_t>(count), cache);
  return out;
}

std::vector<uint8_t> serialize(const Ciphertext& ct) {
  ct.params.validate();
  unsigned width = ct.params.modulus_bits / 8u;
  size_t entries = ct.record.multiplicity.size();
  std::vector<uint8_t> out(header_bytes(entries) + ct.residues.size() * width);
  uint8_t* p = out.data();
  std::memcpy(p, "FLSH", 4);
  p += 4;
  *p++ = kWireVersion;
  *p++ = ct.params.modulus_bits;
  bytes::store_be32(p, ct.round);
  p += 4;
  bytes::store_be32(p, static_cast<uint32_t>(entries));
  p += 4;
  for (auto [client, count] : ct.record.multiplicity) {
    bytes::store_be32(p, client);
    p += 4;
    bytes::store_be32(p, count);
    p += 4;
  }
  bytes::store_be64(p, ct.residues.size());
  p += 8;
  for (uint64_t v : ct.residues) {
    bytes::store_le(p, v, width);
    p += width;
  }
  return out;
}

Ciphertext deserialize(const std::vector<uint8_t>& data) {
  auto need = [&](size_t offset, size_t n) {
    if (data.size() < offset || data.size() - offset < n) fail(ErrorCode::Parse, "truncated ciphertext");
  };
  need(0, 22);
  if (std::memcmp(data.data(), "FLSH", 4) != 0) fail(ErrorCode::Parse, "bad magic");
  uint8_t version = data[4];
  if (version & kCompactFlag) fail(ErrorCode::Parse, "compact frame; use deserialize_compact");
  if (version != kWireVersion) fail(ErrorCode::Parse, "unsupported version");
  uint8_t b = data[5];
  if (b != 16 && b != 32 && b != 64) fail(ErrorCode::Parse, "bad modulus width");

  Ciphertext ct;
  ct.params.modulus_bits = b;
  ct.round = bytes::load_be32(data.data() + 6);
  uint32_t entries = bytes::load_be32(data.data() + 10);
  size_t off = 14;
  need(off, static_cast<size_t>(entries) * 8 + 8);
  for (uint32_t i = 0; i < entries; ++i) {
    uint32_t client = bytes::load_be32(data.data() + off);
    uint32_t count = bytes::load_be32(data.data() + off + 4);
    off += 8;
    if (client == 0 || count == 0) fail(ErrorCode::Parse, "bad record entry");
    if (ct.record.multiplicity.count(client)) fail(ErrorCode::Parse, "duplicate record entry");
    ct.record.multiplicity[client] = count;
  }
  uint64_t d_count = bytes::load_be64(data.data() + off);
  off += 8;
  if (d_count > kMaxCoordinate) fail(ErrorCode::Parse, "vector too long");
  unsigned width = b / 8u;
  if (data.size() - off != d_count * width) fail(ErrorCode::Parse, "payload size mismatch");
  ct.residues.resize(d_count);
  for (uint64_t d = 0; d < d_count; ++d) ct.residues[d] = bytes::load_le(data.data() + off + d * width, width);
  return ct;
}

}  // namespace flashe
