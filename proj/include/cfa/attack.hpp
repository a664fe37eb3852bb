// SPDX-License-Identifier: MIT
//
// Fault injection for detection tests. Attacks mutate the *execution* (the
// engine consults the spec at the matching step), so rejection exercises the
// verification algorithm rather than just the MAC; the two exceptions are
// signature-flip (applied to the signed report) and replay (a protocol-level
// resubmission).

#pragma once

#include <cstdint>
#include <string>

#include "cfa/ir.hpp"

namespace cfa {

struct AttackSpec {
  enum class Kind {
    IllegalIndirect,  // forces the first indirect transfer to `addr`
    LoopCountDelta,   // biases `block`'s comparison bound by `delta` iterations
    BranchSwap,       // negates every evaluation of `block`'s condition
    ReturnCorrupt,    // at call depth `depth`, folds (ret ^ 1) into the backward chain
    SignatureFlip,    // flips signature bit `bit` after signing
    Replay,           // resubmits a previously accepted report
  };

  Kind kind = Kind::Replay;
  std::uint32_t addr = 0;   // IllegalIndirect
  int block = -1;           // LoopCountDelta / BranchSwap: global block id
  std::int64_t delta = 0;   // LoopCountDelta: signed iteration bias
  int depth = 1;            // ReturnCorrupt: call-stack depth (1 = outermost call)
  int bit = 0;              // SignatureFlip: 0..255

  // Text forms: illegal-indirect(0x10000443), loop-count-delta(label,+7),
  // branch-swap(label), return-corrupt(2), signature-flip(13), replay.
  // Block labels may be qualified as func.label; unqualified labels must be
  // unique program-wide.
  static AttackSpec parse(const std::string& text, const ProgramCFG& cfg);

  std::string describe() const;
};

}  // namespace cfa
