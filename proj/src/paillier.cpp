#include "flashe/paillier.hpp"

#include "flashe/error.hpp"

namespace flashe::paillier {
namespace {

constexpr int kMillerRabinRounds = 64;

mpz_class random_prime(Rng& rng, unsigned bits) {
  // Random odd candidate with both top bits set (keeps n at full width), then
  // scan upward; Miller-Rabin with 64 rounds decides.
  mpz_class c = rng.bits(bits);
  mpz_setbit(c.get_mpz_t(), bits - 1);
  if (bits >= 2) mpz_setbit(c.get_mpz_t(), bits - 2);
  mpz_setbit(c.get_mpz_t(), 0);
  while (mpz_probab_prime_p(c.get_mpz_t(), kMillerRabinRounds) == 0) c += 2;
  return c;
}

}  // namespace

Rng::Rng(uint64_t seed) : state_(gmp_randinit_mt) { state_.seed(static_cast<unsigned long>(seed)); }

mpz_class Rng::bits(unsigned count) { return state_.get_z_bits(count); }

mpz_class Rng::below(const mpz_class& bound) {
  if (bound <= 0) fail(ErrorCode::InvalidArgument, "bound must be positive");
  return state_.get_z_range(bound);
}

Keypair Keypair::from_primes(const mpz_class& p, const mpz_class& q) {
  if (p == q) fail(ErrorCode::InvalidArgument, "primes must differ");
  if (mpz_probab_prime_p(p.get_mpz_t(), kMillerRabinRounds) == 0 ||
      mpz_probab_prime_p(q.get_mpz_t(), kMillerRabinRounds) == 0)
    fail(ErrorCode::InvalidArgument, "factors must be prime");

  Keypair kp;
  kp.pub.n = p * q;
  kp.pub.n2 = kp.pub.n * kp.pub.n;
  kp.pub.key_bits = static_cast<unsigned>(mpz_sizeinbase(kp.pub.n.get_mpz_t(), 2));

  mpz_class pm1 = p - 1, qm1 = q - 1;
  mpz_class totient = pm1 * qm1;
  mpz_class g;
  mpz_gcd(g.get_mpz_t(), kp.pub.n.get_mpz_t(), totient.get_mpz_t());
  if (g != 1) fail(ErrorCode::InvalidArgument, "gcd(n, (p-1)(q-1)) must be 1");

  mpz_lcm(kp.lambda.get_mpz_t(), pm1.get_mpz_t(), qm1.get_mpz_t());
  if (mpz_invert(kp.mu.get_mpz_t(), kp.lambda.get_mpz_t(), kp.pub.n.get_mpz_t()) == 0)
    fail(ErrorCode::InvalidArgument, "lambda not invertible mod n");
  return kp;
}

Keypair Keypair::generate(unsigned bits, uint64_t seed) {
  if (bits < 64) fail(ErrorCode::InvalidArgument, "key length below 64 bits");
  Rng rng(seed);
  unsigned half = bits / 2;
  for (;;) {
    mpz_class p = random_prime(rng, half);
    mpz_class q = random_prime(rng, bits - half);
    if (p == q) continue;
    Keypair kp = from_primes(p, q);
    if (kp.pub.key_bits == bits) return kp;
  }
}

mpz_class encrypt_with_r(const PublicKey& pk, const mpz_class& m, const mpz_class& r) {
  if (m < 0 || m >= pk.n) fail(ErrorCode::InvalidArgument, "plaintext out of range");
  if (r <= 0 || r >= pk.n) fail(ErrorCode::InvalidArgument, "nonce out of range");
  // g = n+1 shortcut: g^m mod n^2 = 1 + m*n.
  mpz_class gm = (1 + m * pk.n) % pk.n2;
  mpz_class rn;
  mpz_powm(rn.get_mpz_t(), r.get_mpz_t(), pk.n.get_mpz_t(), pk.n2.get_mpz_t());
  return (gm * rn) % pk.n2;
}

mpz_class encrypt(const PublicKey& pk, const mpz_class& m, Rng& rng) {
  for (;;) {
    mpz_class r = rng.below(pk.n - 1) + 1;
    mpz_class g;
    mpz_gcd(g.get_mpz_t(), r.get_mpz_t(), pk.n.get_mpz_t());
    if (g == 1) return encrypt_with_r(pk, m, r);
  }
}

mpz_class decrypt(const Keypair& kp, const mpz_class& c) {
  if (c <= 0 || c >= kp.pub.n2) fail(ErrorCode::InvalidArgument, "ciphertext out of range");
  mpz_class u;
  mpz_powm(u.get_mpz_t(), c.get_mpz_t(), kp.lambda.get_mpz_t(), kp.pub.n2.get_mpz_t());
  mpz_class l = (u - 1) / kp.pub.n;  // L(u) = (u - 1) / n
  return (l * kp.mu) % kp.pub.n;
}

mpz_class hom_add(const PublicKey& pk, const mpz_class& c1, const mpz_class& c2) {
  return (c1 * c2) % pk.n2;
}

BatchLayout BatchLayout::fit(unsigned key_bits, unsigned slot_bits, unsigned guard_bits) {
  if (slot_bits == 0 || slot_bits + guard_bits > 64)
    fail(ErrorCode::InvalidArgument, "slot layout must fit in 64-bit values");
  BatchLayout l{slot_bits, guard_bits, 0};
  unsigned stride = slot_bits + guard_bits;
  if (key_bits < stride + 2) fail(ErrorCode::InvalidArgument, "key too small for one slot");
  l.slots = (key_bits - 2) / stride;  // slots * stride < key_bits - 1
  return l;
}

void BatchLayout::validate(unsigned key_bits) const {
  if (slots == 0) fail(ErrorCode::InvalidArgument, "layout has no slots");
  if (slot_bits == 0 || slot_bits + guard_bits > 64)
    fail(ErrorCode::InvalidArgument, "slot layout must fit in 64-bit values");
  if (static_cast<uint64_t>(slots) * (slot_bits + guard_bits) >= key_bits - 1)
    fail(ErrorCode::InvalidArgument, "layout exceeds plaintext capacity");
}

mpz_class batch_pack(const std::vector<uint64_t>& values, const BatchLayout& layout) {
  if (values.size() > layout.slots) fail(ErrorCode::InvalidArgument, "too many values for layout");
  unsigned stride = layout.slot_bits + layout.guard_bits;
  mpz_class packed = 0;
  for (size_t i = values.size(); i-- > 0;) {
    if (layout.slot_bits < 64 && values[i] >> layout.slot_bits)
      fail(ErrorCode::InvalidArgument, "value exceeds slot width");
    packed <<= stride;
    packed += mpz_class(static_cast<unsigned long>(values[i]));
  }
  return packed;
}

std::vector<uint64_t> batch_unpack(const mpz_class& packed, const BatchLayout& layout, size_t count) {
  if (count > layout.slots) fail(ErrorCode::InvalidArgument, "too many values for layout");
  unsigned stride = layout.slot_bits + layout.guard_bits;
  mpz_class rest = packed;
  mpz_class field_mask = (mpz_class(1) << stride) - 1;
  std::vector<uint64_t> out;
  out.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    mpz_class field = rest & field_mask;
    out.push_back(field.get_ui());
    rest >>= stride;
  }
  return out;
}

}  // namespace flashe::paillier
