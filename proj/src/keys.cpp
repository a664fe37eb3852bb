// SPDX-License-Identifier: MIT

#include "cfa/keys.hpp"

#include <fstream>
#include <random>
#include <span>
#include <stdexcept>

#include "cfa/hmac.hpp"

namespace cfa {

KeyPair generate_keys(std::optional<std::uint64_t> seed) {
  KeyPair kp;
  if (seed) {
    std::mt19937_64 rng(*seed);
    for (auto& b : kp.measurement.bytes) b = static_cast<std::uint8_t>(rng());
    for (auto& b : kp.attestation.bytes) b = static_cast<std::uint8_t>(rng());
  } else {
    random_bytes(kp.measurement.bytes);
    random_bytes(kp.attestation.bytes);
  }
  return kp;
}

KeyPair load_keys(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open key file: " + path);
  KeyPair kp;
  in.read(reinterpret_cast<char*>(kp.measurement.bytes.data()), 16);
  in.read(reinterpret_cast<char*>(kp.attestation.bytes.data()), 32);
  if (!in || in.peek() != EOF)
    throw std::runtime_error("key file must be exactly 48 bytes: " + path);
  return kp;
}

void save_keys(const std::string& path, const KeyPair& keys) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write key file: " + path);
  out.write(reinterpret_cast<const char*>(keys.measurement.bytes.data()), 16);
  out.write(reinterpret_cast<const char*>(keys.attestation.bytes.data()), 32);
  if (!out) throw std::runtime_error("short write to key file: " + path);
}

}  // namespace cfa
