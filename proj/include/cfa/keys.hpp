// SPDX-License-Identifier: MIT
//
// Shared secrets between prover and verifier. The measurement key drives the
// chained block measurements; the attestation key signs reports. Keys live in
// a flat 48-byte file (16-byte measurement key followed by the 32-byte
// attestation key) — provisioning is out of scope, files stand in for secure
// storage.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

namespace cfa {

struct MeasurementKey {
  std::array<std::uint8_t, 16> bytes{};
};

struct AttestationKey {
  std::array<std::uint8_t, 32> bytes{};
};

struct KeyPair {
  MeasurementKey measurement;
  AttestationKey attestation;
};

// Fresh keys from the system CSPRNG; with a seed, a deterministic test-only
// expansion (so fixtures are reproducible — not for real deployments).
KeyPair generate_keys(std::optional<std::uint64_t> seed = std::nullopt);

KeyPair load_keys(const std::string& path);
void save_keys(const std::string& path, const KeyPair& keys);

}  // namespace cfa
