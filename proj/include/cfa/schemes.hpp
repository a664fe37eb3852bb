// SPDX-License-Identifier: MIT
//
// The four rival authenticators built over one ExecutionLog, with byte-size
// accounting for the comparison tables. These reproduce each scheme's trace
// *structure* and sizes, not their full verification pipelines. All digests
// share the same 32-bit truncated SHA-256 primitive; the originals' cipher
// choices are irrelevant to size accounting.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cfa/analysis.hpp"
#include "cfa/hmac.hpp"
#include "cfa/ir.hpp"
#include "cfa/prover.hpp"

namespace cfa {

// low32_le(SHA256(LE32(h ^ v))) — the keyless chained fold used by the OAT
// return chain and the C-FLAT iteration hashes.
std::uint32_t fold32_xor(std::uint32_t h, std::uint32_t v);

// Full trace: every event destination, digested.
struct NaiveAuth {
  std::vector<std::uint32_t> destinations;
  Digest digest{};

  std::size_t size_bytes() const { return 4 * destinations.size() + digest.size(); }
  std::size_t trace_bytes() const { return 4 * destinations.size(); }  // growth component
};

NaiveAuth build_naive(const ExecutionLog& log);

// One bit per conditional decision, addresses only for indirect transfers,
// returns folded into a running keyless hash.
struct OatAuth {
  std::vector<bool> cond_bits;  // execution order; taken = 1
  std::vector<std::uint32_t> indirect_dests;
  std::uint32_t ret_chain = 0;

  std::size_t size_bytes() const {
    return (cond_bits.size() + 7) / 8 + 4 * indirect_dests.size() + 4;
  }
  std::size_t trace_bits() const { return cond_bits.size(); }  // growth component
};

OatAuth build_oat(const ExecutionLog& log);

// Cumulative path hash outside loops; per-loop sets of (iteration hash,
// count). An iteration's hash covers the blocks entered after the header up
// to the next back edge (or loop departure); iterations with identical paths
// coalesce. An inner loop contributes a header marker to the enclosing
// iteration's hash; its own iterations live in its own record set.
struct CflatAuth {
  std::uint32_t top_hash = 0;
  std::map<int, std::map<std::uint32_t, std::uint64_t>> loop_records;  // header block →
                                                                       // iter hash → count
  std::size_t record_count() const {
    std::size_t n = 0;
    for (const auto& [h, recs] : loop_records) n += recs.size();
    return n;
  }
  std::size_t size_bytes() const { return 4 + 8 * record_count(); }
};

CflatAuth build_cflat(const ExecutionLog& log, const ProgramCFG& cfg);

// Per-function path numbers: one entry per call site, loop back edge, and
// function exit. Repeated executions log separate entries, which is exactly
// why this trace grows with iteration count.
struct BlastAuth {
  std::vector<std::pair<std::uint32_t, std::uint64_t>> entries;  // (function, path number)
  std::uint32_t digest = 0;  // truncated digest over the serialized entries

  std::size_t size_bytes() const { return 8 * entries.size() + 4; }
};

// `numberings` is indexed by function; throws AnalysisError("irreducible-cfg")
// from the numbering stage for unsupported loop structure.
BlastAuth build_blast(const ExecutionLog& log, const ProgramCFG& cfg,
                      const std::vector<BallLarusNumbering>& numberings);

struct SizeReport {
  std::uint64_t n = 0, m = 0, l = 0;
  std::size_t num_blocks = 0;            // |V|
  std::size_t unique_instrumented = 0;   // u: distinct counted blocks in the trace
  std::size_t enola_bytes = 0;           // 8u + 8 (entries + both measurements)
  std::size_t naive_bytes = 0;
  std::size_t oat_bytes = 0;
  std::size_t cflat_bytes = 0;
  std::optional<std::size_t> blast_bytes;  // absent for irreducible functions
  std::size_t naive_trace_bytes = 0;
  std::size_t oat_trace_bits = 0;
  std::size_t cflat_records = 0;

  static std::string csv_header();
  std::string csv_rows(const std::string& program) const;  // one line per scheme
};

SizeReport size_report(const NaiveAuth& naive, const OatAuth& oat, const CflatAuth& cflat,
                       const std::optional<BlastAuth>& blast,
                       const AttestationReport& enola_report, const ExecutionLog& log,
                       const ProgramCFG& cfg);

}  // namespace cfa
