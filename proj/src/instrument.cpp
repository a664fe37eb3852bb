// SPDX-License-Identifier: MIT

#include "cfa/instrument.hpp"

#include <algorithm>

#include "cfa/hmac.hpp"
#include "json.hpp"

namespace cfa {

InstrumentationPlan plan_instrumentation(const ProgramCFG& cfg, const DominatorInfo& dom) {
  (void)dom;  // the dominator structure justifies the rules; selection itself
              // only needs local edge shape
  const int n = static_cast<int>(cfg.blocks.size());
  std::vector<char> candidate(n, 0), taken_target(n, 0), fall_succ(n, 0);

  for (const auto& b : cfg.blocks) {
    if (b.terminator().kind != InstrKind::CondBranch) continue;
    const auto& succs = cfg.successors(b.index);
    candidate[succs[0]] = taken_target[succs[0]] = 1;
    candidate[succs[1]] = fall_succ[succs[1]] = 1;
  }

  InstrumentationPlan plan;
  for (const auto& b : cfg.blocks) {
    const auto term = b.terminator().kind;
    if (candidate[b.index]) {
      const auto& preds = cfg.predecessors(b.index);
      bool join = !preds.empty();
      for (int p : preds)
        for (int s : cfg.successors(p))
          if (s != b.index) join = false;
      bool return_path = !taken_target[b.index] && fall_succ[b.index] &&
                         (term == InstrKind::Return || term == InstrKind::Exit);
      if (join)
        plan.skipped[b.index] = "join";
      else if (return_path)
        plan.skipped[b.index] = "return-path";
      else
        plan.direct_report_blocks.insert(b.index);
    } else if (term == InstrKind::CondBranch) {
      plan.skipped[b.index] = "dominator";
    } else {
      // Real joins (two or more predecessors, each flowing here
      // unconditionally) are recorded even when no branch targets them — the
      // visit adds no path information either way.
      const auto& preds = cfg.predecessors(b.index);
      if (preds.size() >= 2) {
        bool join = true;
        for (int p : preds)
          for (int s : cfg.successors(p))
            if (s != b.index) join = false;
        if (join) plan.skipped[b.index] = "join";
      }
    }
    if (term == InstrKind::IndirectCall || term == InstrKind::IndirectJump)
      plan.indirect_sites.push_back(b.index);
    if (term == InstrKind::Return) plan.return_sites.push_back(b.index);
  }
  return plan;
}

std::string InstrumentationPlan::to_json(const ProgramCFG& cfg) const {
  using nlohmann::json;
  json j;
  json direct = json::array();
  for (int b : direct_report_blocks)
    direct.push_back({{"block", b},
                      {"label", cfg.blocks[b].label},
                      {"addr", cfg.blocks[b].start}});
  j["direct"] = std::move(direct);
  json ind = json::array();
  for (int b : indirect_sites)
    ind.push_back({{"block", b},
                   {"kind", to_string(cfg.blocks[b].terminator().kind)},
                   {"addr", cfg.blocks[b].end}});
  j["indirect"] = std::move(ind);
  j["return"] = return_sites;
  json sk;
  for (const auto& [b, reason] : skipped) sk[std::to_string(b)] = reason;
  j["skipped"] = std::move(sk);
  return j.dump();
}

std::string IndirectTargetList::to_json() const {
  using nlohmann::json;
  json arr = json::array();
  for (const auto& [addr, prov] : targets) {
    json p = json::array();
    if (prov.from_static) p.push_back("static");
    if (prov.from_dynamic) p.push_back("dynamic");
    arr.push_back({{"addr", addr}, {"provenance", std::move(p)}});
  }
  json j;
  j["targets"] = std::move(arr);
  return j.dump();
}

LintReport scan_code(const ProgramCFG& cfg, const ReservedRegisters& reserved) {
  LintReport rep;
  auto flag = [&](const BasicBlock& b, const Instruction& ins, int reg) {
    if (reg != reserved.accumulator_f && reg != reserved.accumulator_b &&
        reg != reserved.key_slot)
      return;
    LintFinding f;
    f.location = cfg.functions[b.func].name + "/" + b.label + " (line " +
                 std::to_string(ins.line) + ")";
    if (reg == reserved.key_slot) {
      f.rule_id = "key-register-write";
      f.message = "r" + std::to_string(reg) + " is the engine key slot";
    } else {
      f.rule_id = "reserved-register-write";
      f.message = "r" + std::to_string(reg) + " is a reserved measurement accumulator";
    }
    rep.findings.push_back(std::move(f));
  };

  for (const auto& b : cfg.blocks)
    for (const auto& ins : b.instrs) {
      if (ins.kind == InstrKind::SetReg)
        flag(b, ins, std::get<SetRegOp>(ins.op).dst);
      else if (ins.kind == InstrKind::Compute) {
        const auto& c = std::get<ComputeOp>(ins.op);
        if (c.form != ComputeOp::Form::Nop) flag(b, ins, c.dst);
      }
    }
  return rep;
}

std::string LintReport::to_json() const {
  using nlohmann::json;
  json arr = json::array();
  for (const auto& f : findings)
    arr.push_back({{"location", f.location}, {"rule", f.rule_id}, {"message", f.message}});
  json j;
  j["clean"] = clean();
  j["findings"] = std::move(arr);
  return j.dump();
}

std::array<std::uint8_t, 32> program_digest(const ProgramCFG& cfg,
                                            const InstrumentationPlan& plan) {
  std::string blob = cfg.to_json() + plan.to_json(cfg);
  return sha256(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(blob.data()), blob.size()));
}

}  // namespace cfa
