#pragma once

#include <array>
#include <cstdint>

namespace flashe::aes {

// Expanded AES-256 encryption key schedule: 14 rounds, 60 round-key words.
struct Key256 {
  std::array<uint32_t, 60> rk;
};

Key256 expand(const std::array<uint8_t, 32>& key);

// Encrypts one 16-byte block. Portable table-based implementation, encrypt-only.
std::array<uint8_t, 16> encrypt_block(const Key256& key, const std::array<uint8_t, 16>& in);

}  // namespace flashe::aes
