// SPDX-License-Identifier: MIT
//
// Prover side: the attestation engine. Abstractly executes an instrumented
// program, maintaining the occurrence trace and the two chained keyed
// measurements, then signs the report against the verifier's nonce.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cfa/attack.hpp"
#include "cfa/instrument.hpp"
#include "cfa/ir.hpp"
#include "cfa/keys.hpp"

namespace cfa {

using Nonce = std::array<std::uint8_t, 16>;

// One chained step: low 32 bits (little-endian) of
// HMAC-SHA256(k_m, LE32(prev) ‖ LE32(dest)). prev = 0 starts a chain.
std::uint32_t measure_step(std::uint32_t prev, std::uint32_t dest, const MeasurementKey& key);

struct OccurrenceTrace {
  std::map<std::uint32_t, std::uint64_t> counts;  // block start → entries seen
  std::vector<std::uint32_t> illegal;             // out-of-ITL indirect targets, in order

  // Size accounting used for scheme comparison: 8 bytes per counted entry
  // (4-byte address + 4-byte count in the reference hardware layout).
  std::size_t payload_accounting_bytes() const { return 8 * counts.size(); }
};

struct AttestationReport {
  Nonce nonce{};
  OccurrenceTrace trace;
  std::uint32_t m_f = 0;
  std::uint32_t m_b = 0;
  std::array<std::uint8_t, 32> signature{};

  // Canonical little-endian wire form: "CFA1" ‖ nonce ‖ entry count ‖
  // (addr u32, count u64)* sorted by address ‖ illegal count ‖ illegal u32* ‖
  // m_f ‖ m_b ‖ signature. The signature covers every preceding byte.
  std::vector<std::uint8_t> serialize() const;
  std::vector<std::uint8_t> body_bytes() const;  // everything before the signature
  static AttestationReport deserialize(const std::vector<std::uint8_t>& bytes);
};

struct ReportFormatError : std::runtime_error {
  explicit ReportFormatError(const std::string& what) : std::runtime_error(what) {}
};

AttestationReport sign_report(const OccurrenceTrace& trace, std::uint32_t m_f,
                              std::uint32_t m_b, const Nonce& nonce,
                              const AttestationKey& key);

bool verify_signature(const AttestationReport& report, const AttestationKey& key,
                      const Nonce& expected_nonce);

// Ground-truth control transfers, for the comparison schemes. Forward events
// (n) are conditional-branch instances and indirect transfers; backward
// events (m) are returns; direct jumps and direct calls are compile-time
// fixed and logged by none of the schemes.
struct ExecutionLog {
  enum class Ev : std::uint8_t { CondTaken, CondFall, Indirect, Return };
  struct Event {
    Ev kind;
    std::uint32_t dest;  // destination address
    int block;           // site block (global id)
  };
  std::vector<Event> events;
  std::vector<int> block_entries;  // every block entered, in order

  std::uint64_t n() const;
  std::uint64_t m() const;
  std::uint64_t l() const { return n() + m(); }
};

struct ExecOptions {
  std::uint64_t fuel = 100'000'000;  // instruction budget
  int max_illegal = 16;
  bool training = false;    // collect indirect destinations, skip the ITL check
  bool log_events = false;  // record the ExecutionLog (off for the big runs)
  const AttackSpec* attack = nullptr;
};

struct ExecResult {
  AttestationReport report;
  ExecutionLog log;
  std::optional<std::string> abort_reason;  // "fuel-exhausted", "illegal-overflow",
                                            // "return-stack-underflow", "bad-transfer"
  std::set<std::uint32_t> observed_indirect;  // training mode
};

// Runs the program from its entry with the given register inputs. A report is
// produced even when execution aborts — attestation fails loudly at the
// verifier, not silently at the prover.
ExecResult execute(const ProgramCFG& cfg, const InstrumentationPlan& plan,
                   const IndirectTargetList& itl, const KeyPair& keys, const Nonce& nonce,
                   const std::map<int, std::uint32_t>& inputs, const ExecOptions& opts = {});

}  // namespace cfa
