#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <vector>

namespace flashe::paillier {

// Public parameters; g = n + 1 throughout, so g^m = 1 + m*n (mod n^2).
struct PublicKey {
  mpz_class n;
  mpz_class n2;
  unsigned key_bits = 0;
};

class Rng {
 public:
  explicit Rng(uint64_t seed);
  mpz_class bits(unsigned count);           // uniform with exactly `count` random bits
  mpz_class below(const mpz_class& bound);  // uniform in [0, bound)

 private:
  gmp_randclass state_;
};

struct Keypair {
  PublicKey pub;
  mpz_class lambda;  // lcm(p-1, q-1)
  mpz_class mu;      // lambda^{-1} mod n

  // Probabilistic prime generation (Miller-Rabin, 64 rounds), seeded. bits >= 64.
  static Keypair generate(unsigned bits, uint64_t seed);
  // Builds a keypair from given primes; used for toy moduli in tests.
  static Keypair from_primes(const mpz_class& p, const mpz_class& q);
};

mpz_class encrypt(const PublicKey& pk, const mpz_class& m, Rng& rng);
mpz_class encrypt_with_r(const PublicKey& pk, const mpz_class& m, const mpz_class& r);
mpz_class decrypt(const Keypair& kp, const mpz_class& c);
mpz_class hom_add(const PublicKey& pk, const mpz_class& c1, const mpz_class& c2);

// Concatenation batching: values packed low-to-high at a stride of
// slot_bits + guard_bits; guard bits absorb carries across homomorphic adds.
struct BatchLayout {
  unsigned slot_bits = 16;
  unsigned guard_bits = 4;
  unsigned slots = 0;

  static BatchLayout fit(unsigned key_bits, unsigned slot_bits, unsigned guard_bits);
  void validate(unsigned key_bits) const;  // slots * (slot_bits + guard_bits) < key_bits - 1
};

mpz_class batch_pack(const std::vector<uint64_t>& values, const BatchLayout& layout);
std::vector<uint64_t> batch_unpack(const mpz_class& packed, const BatchLayout& layout, size_t count);

}  // namespace flashe::paillier
