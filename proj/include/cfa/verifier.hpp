// SPDX-License-Identifier: MIT
//
// Report verification: authenticate, screen illegal targets, then decide path
// legitimacy by recomputing both measurement chains.
//
// Two modes:
//   * with replay inputs (VerifierContext::inputs set): deterministic
//     abstract replay of the program under the declared inputs, comparing the
//     expected trace and measurements — required to catch tampers that
//     produce self-consistent reports (biased loop bounds, swapped
//     branches), where the report matches *a* legitimate path, just not the
//     one those inputs take;
//   * count-guided backtracking search: explores successors whose residual
//     occurrence counts are positive (uninstrumented successors are free
//     moves), folding the forward/backward chains and accepting at an exit
//     with all residuals zero and both chains equal to the reported values.
//     Dead ends backtrack; subtrees proven infeasible by counts alone are
//     memoized (measurement-dependent failures are not — a different entry
//     chain may still succeed). Search cost scales with the event count; use
//     replay inputs for long traces.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cfa/instrument.hpp"
#include "cfa/ir.hpp"
#include "cfa/keys.hpp"
#include "cfa/prover.hpp"

namespace cfa {

struct VerifierContext {
  const ProgramCFG* cfg = nullptr;
  const InstrumentationPlan* plan = nullptr;
  const IndirectTargetList* itl = nullptr;
  KeyPair keys;
  Nonce expected_nonce{};
  std::optional<std::map<int, std::uint32_t>> inputs;  // enables replay mode
  std::uint64_t node_budget = 10'000'000;
};

struct Verdict {
  bool accepted = false;
  std::string reason;        // ok, bad-signature, stale-nonce, illegal-targets,
                             // trace-mismatch, measurement-mismatch, search-exhausted
  std::uint32_t m_f = 0;     // recomputed forward chain
  std::uint32_t m_b = 0;     // recomputed backward chain
  std::uint64_t nodes_expanded = 0;
  std::optional<std::vector<int>> witness;  // accepted search: block sequence

  std::string to_json() const;
};

Verdict verify(const AttestationReport& report, const VerifierContext& ctx);

// Independent test oracle: exhaustively enumerates execution paths consistent
// with the CFG and the reported counts (no memoization, no search ordering),
// returning true iff some path reproduces both measurement chains with every
// count consumed exactly. Practical only for small instances; throws
// "oracle-budget-exceeded" beyond ~10^4 events.
bool enumerate_paths_oracle(const VerifierContext& ctx, const AttestationReport& report);

struct OracleBudgetError : std::runtime_error {
  OracleBudgetError() : std::runtime_error("oracle-budget-exceeded") {}
};

}  // namespace cfa
