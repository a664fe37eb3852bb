// SPDX-License-Identifier: MIT
//
// Indirect-target-list construction. The static pass lives here; the dynamic
// pass drives the engine in training mode, so this file sits above both the
// instrument and prover headers.

#include "cfa/instrument.hpp"
#include "cfa/prover.hpp"

namespace cfa {

namespace {

IndirectTargetList static_pass(const ProgramCFG& cfg) {
  IndirectTargetList itl;
  for (const auto& fn : cfg.functions) {
    // Addresses each register receives directly from a `set` in this
    // function. Deliberately no copy propagation: a target that only ever
    // reaches the branch register through a `compute` copy is a dynamic
    // discovery, not a static one.
    std::map<int, std::vector<std::uint32_t>> direct_defs;
    for (int bi : fn.blocks)
      for (const auto& ins : cfg.blocks[bi].instrs) {
        if (ins.kind != InstrKind::SetReg) continue;
        const auto& s = std::get<SetRegOp>(ins.op);
        if (s.kind == SetRegOp::Kind::BlockAddr) {
          int tgt = cfg.block_by_label(fn.index, s.sym);
          direct_defs[s.dst].push_back(cfg.blocks[tgt].start);
        } else if (s.kind == SetRegOp::Kind::FuncAddr) {
          int callee = cfg.function_by_name(s.sym);
          direct_defs[s.dst].push_back(cfg.blocks[cfg.functions[callee].entry].start);
        }
      }
    for (int bi : fn.blocks) {
      const auto& term = cfg.blocks[bi].terminator();
      if (term.kind != InstrKind::IndirectCall && term.kind != InstrKind::IndirectJump)
        continue;
      int reg = std::get<IndirectOp>(term.op).reg;
      auto it = direct_defs.find(reg);
      if (it == direct_defs.end()) continue;
      for (std::uint32_t addr : it->second) itl.targets[addr].from_static = true;
    }
  }
  return itl;
}

}  // namespace

IndirectTargetList build_itl(const ProgramCFG& cfg,
                             const std::vector<std::map<int, std::uint32_t>>& training_inputs) {
  IndirectTargetList itl = static_pass(cfg);
  if (training_inputs.empty()) return itl;

  // Training runs execute uninstrumented and collect whatever destinations the
  // indirect sites actually produce under benign inputs.
  InstrumentationPlan empty_plan;
  IndirectTargetList empty_itl;
  KeyPair keys;  // zero keys; measurements are discarded
  Nonce nonce{};
  ExecOptions opts;
  opts.training = true;
  for (const auto& inputs : training_inputs) {
    ExecResult res = execute(cfg, empty_plan, empty_itl, keys, nonce, inputs, opts);
    for (std::uint32_t addr : res.observed_indirect) itl.targets[addr].from_dynamic = true;
    if (res.abort_reason)
      throw ItlTrainingError("training run aborted: " + *res.abort_reason, itl);
  }
  return itl;
}

}  // namespace cfa
