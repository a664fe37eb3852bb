// SPDX-License-Identifier: MIT
//
// Instrumentation-site selection, the indirect-target list, and the
// reserved-state lint.
//
// Site selection rules, applied per block:
//   * Successors of conditional branches are report sites ("the taken edge is
//     only identifiable at its destination"), except:
//       - degenerate straight-line joins, where every predecessor has that
//         block as its only successor (reason "join");
//       - fallthrough successors that end the function (Return/Exit
//         terminator) and are never the taken target of any conditional
//         branch (reason "return-path") — falling onto the epilogue crosses
//         no branch instruction, so there is no site to plant;
//   * conditional-branch blocks themselves are never sites — they immediately
//     dominate both outcomes (reason "dominator"), which covers loop
//     condition blocks;
//   * indirect call/jump blocks report their dynamic destination at the site;
//   * return blocks feed the backward measurement chain.

#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cfa/analysis.hpp"
#include "cfa/ir.hpp"

namespace cfa {

struct InstrumentationPlan {
  std::set<int> direct_report_blocks;            // global block ids
  std::vector<int> indirect_sites;               // blocks ending in icall/ijmp
  std::vector<int> return_sites;                 // blocks ending in ret
  std::map<int, std::string> skipped;            // block id → reason

  bool reports_direct(int block) const { return direct_report_blocks.count(block) != 0; }
  std::string to_json(const ProgramCFG& cfg) const;  // sorted keys, stable
};

InstrumentationPlan plan_instrumentation(const ProgramCFG& cfg, const DominatorInfo& dom);

struct IndirectTargetList {
  struct Provenance {
    bool from_static = false;
    bool from_dynamic = false;
  };
  std::map<std::uint32_t, Provenance> targets;  // block start addresses

  bool contains(std::uint32_t addr) const { return targets.count(addr) != 0; }
  std::string to_json() const;
};

// Static pass: for each indirect site using register rK, every address a
// `set rK = @...` places in that same function — no propagation through
// copies and no cross-call dataflow; anything subtler is left to dynamic
// training. Training inputs, when given, are executed (uninstrumented,
// collect-only) and the observed destinations are unioned in with dynamic
// provenance.
IndirectTargetList build_itl(const ProgramCFG& cfg,
                             const std::vector<std::map<int, std::uint32_t>>& training_inputs = {});

// A training run that aborts mid-execution raises this, carrying whatever was
// learned up to the fault.
struct ItlTrainingError : std::runtime_error {
  IndirectTargetList partial;
  ItlTrainingError(const std::string& what, IndirectTargetList itl)
      : std::runtime_error(what), partial(std::move(itl)) {}
};

// Register discipline enforced by the lint: the two measurement accumulators
// and the key slot belong to the attestation engine.
struct ReservedRegisters {
  int accumulator_f = 10;
  int accumulator_b = 11;
  int key_slot = 12;
};

struct LintFinding {
  std::string location;  // "func/block (line N)"
  std::string rule_id;   // "reserved-register-write" | "key-register-write"
  std::string message;
};

struct LintReport {
  std::vector<LintFinding> findings;
  bool clean() const { return findings.empty(); }
  std::string to_json() const;
};

LintReport scan_code(const ProgramCFG& cfg, const ReservedRegisters& reserved = {});

// SHA-256 over the canonical CFG JSON followed by the plan JSON; binds
// verifier sessions to exactly this program + plan.
std::array<std::uint8_t, 32> program_digest(const ProgramCFG& cfg,
                                            const InstrumentationPlan& plan);

}  // namespace cfa
