// SPDX-License-Identifier: MIT

#include "cfa/hmac.hpp"

#include <openssl/core_names.h>
#include <openssl/evp.h>
#include <openssl/rand.h>

namespace cfa {

Digest sha256(std::span<const std::uint8_t> data) {
  Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != out.size())
    throw CryptoError("SHA-256 failed");
  return out;
}

Digest hmac_sha256(std::span<const std::uint8_t> key, std::span<const std::uint8_t> data) {
  KeyedMac m(key);
  return m.mac(data);
}

std::uint32_t low32_le(const Digest& d) {
  return static_cast<std::uint32_t>(d[0]) | static_cast<std::uint32_t>(d[1]) << 8 |
         static_cast<std::uint32_t>(d[2]) << 16 | static_cast<std::uint32_t>(d[3]) << 24;
}

void random_bytes(std::span<std::uint8_t> out) {
  if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1)
    throw CryptoError("RAND_bytes failed");
}

KeyedMac::KeyedMac(std::span<const std::uint8_t> key) {
  EVP_MAC* mac = EVP_MAC_fetch(nullptr, "HMAC", nullptr);
  if (!mac) throw CryptoError("HMAC fetch failed");
  EVP_MAC_CTX* ctx = EVP_MAC_CTX_new(mac);
  if (!ctx) {
    EVP_MAC_free(mac);
    throw CryptoError("HMAC context allocation failed");
  }
  char digest_name[] = "SHA256";
  OSSL_PARAM params[] = {
      OSSL_PARAM_construct_utf8_string(OSSL_MAC_PARAM_DIGEST, digest_name, 0),
      OSSL_PARAM_construct_end(),
  };
  if (EVP_MAC_init(ctx, key.data(), key.size(), params) != 1) {
    EVP_MAC_CTX_free(ctx);
    EVP_MAC_free(mac);
    throw CryptoError("HMAC init failed");
  }
  ctx_ = ctx;
  mac_ = mac;
}

KeyedMac::~KeyedMac() {
  if (ctx_) EVP_MAC_CTX_free(static_cast<EVP_MAC_CTX*>(ctx_));
  if (mac_) EVP_MAC_free(static_cast<EVP_MAC*>(mac_));
}

KeyedMac::KeyedMac(KeyedMac&& other) noexcept : ctx_(other.ctx_), mac_(other.mac_) {
  other.ctx_ = nullptr;
  other.mac_ = nullptr;
}

Digest KeyedMac::mac(std::span<const std::uint8_t> data) const {
  EVP_MAC_CTX* c = EVP_MAC_CTX_dup(static_cast<EVP_MAC_CTX*>(ctx_));
  if (!c) throw CryptoError("HMAC context dup failed");
  Digest out{};
  std::size_t outl = 0;
  int ok = EVP_MAC_update(c, data.data(), data.size()) == 1 &&
           EVP_MAC_final(c, out.data(), &outl, out.size()) == 1;
  EVP_MAC_CTX_free(c);
  if (!ok || outl != out.size()) throw CryptoError("HMAC computation failed");
  return out;
}

std::uint32_t KeyedMac::fold32(std::uint32_t prev, std::uint32_t dest) const {
  std::uint8_t buf[8];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<std::uint8_t>(prev >> (8 * i));
  for (int i = 0; i < 4; ++i) buf[4 + i] = static_cast<std::uint8_t>(dest >> (8 * i));
  return low32_le(mac(std::span<const std::uint8_t>(buf, sizeof buf)));
}

}  // namespace cfa
