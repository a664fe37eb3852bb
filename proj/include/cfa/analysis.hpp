// SPDX-License-Identifier: MIT
//
// Intra-function CFG analyses: dominators, post-dominators, natural loops,
// and Ball-Larus path numbering (used by the Blast comparison scheme).

#pragma once

#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "cfa/ir.hpp"

namespace cfa {

struct AnalysisError : std::runtime_error {
  explicit AnalysisError(const std::string& what) : std::runtime_error(what) {}
};

struct DominatorInfo {
  // Global block index → immediate (post-)dominator, -1 at tree roots. The
  // post-dominator of a terminal block (Return/Exit) is -1, standing for the
  // virtual sink.
  std::vector<int> idom;
  std::vector<int> ipostdom;

  bool dominates(int a, int b) const;       // a dominates b (reflexive)
  bool postdominates(int a, int b) const;   // a post-dominates b (reflexive)
};

DominatorInfo compute_dominators(const ProgramCFG& cfg);

struct BackEdge {
  int src = -1;
  int dst = -1;  // loop header; dominates src
};

// Edges (u → h) with h dominating u, over the intra-function successor
// relation. Deterministic order: by (src, successor ordinal).
std::vector<BackEdge> back_edges(const ProgramCFG& cfg, const DominatorInfo& dom);

struct Loop {
  int header = -1;
  std::vector<int> body;           // includes header; sorted
  std::vector<BackEdge> latches;   // back edges into this header
  bool contains(int block) const;
};

// Natural loops, one per header (multiple latches merged).
std::vector<Loop> natural_loops(const ProgramCFG& cfg, const DominatorInfo& dom);

// Ball-Larus numbering of one function, computed over the acyclic graph
// obtained by removing back edges and adding surrogate edges: a virtual entry
// feeding the real entry plus every loop header, and a virtual exit fed by
// every terminal block plus every latch. Increments are assigned so that the
// sums along distinct virtual-entry→virtual-exit paths form exactly
// [0, num_paths). The virtual-entry edge ordering puts the real entry first,
// which keeps every back-edge reset value non-zero.
struct BallLarusNumbering {
  std::uint64_t num_paths = 0;
  std::uint64_t entry_inc = 0;  // increment on virtual-entry → real entry (always 0)

  struct SuccEdge {
    int dst = -1;                // global block index
    bool is_back = false;
    std::uint64_t inc = 0;       // forward edge: increment
    std::uint64_t emit_inc = 0;  // back edge: increment of surrogate src → virtual exit
    std::uint64_t reset = 0;     // back edge: increment of virtual entry → header
  };
  // Per block, parallel to ProgramCFG::successors(block) ordinals.
  std::unordered_map<int, std::vector<SuccEdge>> succ;
  // Terminal (Return/Exit) block → increment of its edge to the virtual exit.
  std::unordered_map<int, std::uint64_t> final_inc;
};

// Throws AnalysisError("irreducible-cfg") when removing back edges leaves a
// cycle.
BallLarusNumbering ball_larus_number(const ProgramCFG& cfg, int func);

}  // namespace cfa
