// SPDX-License-Identifier: MIT
//
// Thin OpenSSL wrappers: SHA-256, HMAC-SHA256, and a keyed-context MAC cache
// for the measurement hot path (one context setup per key, duplicated per
// fold; ~10^6 folds/s, which the large replica run needs).

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>

namespace cfa {

using Digest = std::array<std::uint8_t, 32>;

struct CryptoError : std::runtime_error {
  explicit CryptoError(const std::string& what) : std::runtime_error(what) {}
};

Digest sha256(std::span<const std::uint8_t> data);
Digest hmac_sha256(std::span<const std::uint8_t> key, std::span<const std::uint8_t> data);

// First four digest bytes read as a little-endian 32-bit value.
std::uint32_t low32_le(const Digest& d);

void random_bytes(std::span<std::uint8_t> out);

class KeyedMac {
 public:
  explicit KeyedMac(std::span<const std::uint8_t> key);
  ~KeyedMac();
  KeyedMac(const KeyedMac&) = delete;
  KeyedMac& operator=(const KeyedMac&) = delete;
  KeyedMac(KeyedMac&& other) noexcept;
  KeyedMac& operator=(KeyedMac&&) = delete;

  Digest mac(std::span<const std::uint8_t> data) const;

  // low32_le(HMAC(key, LE32(prev) ‖ LE32(dest))) — the chained measurement
  // step shared by prover and verifier.
  std::uint32_t fold32(std::uint32_t prev, std::uint32_t dest) const;

 private:
  void* ctx_ = nullptr;  // EVP_MAC_CTX, kept opaque here
  void* mac_ = nullptr;  // EVP_MAC
};

}  // namespace cfa
