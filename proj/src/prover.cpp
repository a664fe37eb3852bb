// SPDX-License-Identifier: MIT

#include "cfa/prover.hpp"

#include <openssl/crypto.h>

#include <algorithm>

#include "cfa/hmac.hpp"

namespace cfa {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

struct Reader {
  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;
  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw ReportFormatError("truncated report");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos++]) << (8 * i);
    return v;
  }
};

bool eval(std::uint32_t lhs, CmpOp op, std::uint32_t rhs) {
  switch (op) {
    case CmpOp::Lt: return lhs < rhs;
    case CmpOp::Le: return lhs <= rhs;
    case CmpOp::Gt: return lhs > rhs;
    case CmpOp::Ge: return lhs >= rhs;
    case CmpOp::Eq: return lhs == rhs;
    case CmpOp::Ne: return lhs != rhs;
  }
  return false;
}

}  // namespace

std::uint32_t measure_step(std::uint32_t prev, std::uint32_t dest, const MeasurementKey& key) {
  return KeyedMac(key.bytes).fold32(prev, dest);
}

std::vector<std::uint8_t> AttestationReport::body_bytes() const {
  std::vector<std::uint8_t> out;
  out.reserve(36 + 12 * trace.counts.size() + 4 * trace.illegal.size() + 8);
  out.insert(out.end(), {'C', 'F', 'A', '1'});
  out.insert(out.end(), nonce.begin(), nonce.end());
  put_u32(out, static_cast<std::uint32_t>(trace.counts.size()));
  for (const auto& [addr, count] : trace.counts) {  // std::map: ascending addresses
    put_u32(out, addr);
    put_u64(out, count);
  }
  put_u32(out, static_cast<std::uint32_t>(trace.illegal.size()));
  for (std::uint32_t t : trace.illegal) put_u32(out, t);
  put_u32(out, m_f);
  put_u32(out, m_b);
  return out;
}

std::vector<std::uint8_t> AttestationReport::serialize() const {
  std::vector<std::uint8_t> out = body_bytes();
  out.insert(out.end(), signature.begin(), signature.end());
  return out;
}

AttestationReport AttestationReport::deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r{bytes};
  r.need(4);
  if (!(bytes[0] == 'C' && bytes[1] == 'F' && bytes[2] == 'A' && bytes[3] == '1'))
    throw ReportFormatError("bad magic");
  r.pos = 4;
  AttestationReport rep;
  r.need(rep.nonce.size());
  std::copy_n(bytes.begin() + static_cast<long>(r.pos), rep.nonce.size(), rep.nonce.begin());
  r.pos += rep.nonce.size();
  std::uint32_t entries = r.u32();
  std::uint32_t prev_addr = 0;
  for (std::uint32_t i = 0; i < entries; ++i) {
    std::uint32_t addr = r.u32();
    std::uint64_t count = r.u64();
    if (i > 0 && addr <= prev_addr) throw ReportFormatError("entries not strictly ascending");
    prev_addr = addr;
    rep.trace.counts[addr] = count;
  }
  std::uint32_t illegal = r.u32();
  for (std::uint32_t i = 0; i < illegal; ++i) rep.trace.illegal.push_back(r.u32());
  rep.m_f = r.u32();
  rep.m_b = r.u32();
  r.need(rep.signature.size());
  std::copy_n(bytes.begin() + static_cast<long>(r.pos), rep.signature.size(),
              rep.signature.begin());
  r.pos += rep.signature.size();
  if (r.pos != bytes.size()) throw ReportFormatError("trailing bytes");
  return rep;
}

AttestationReport sign_report(const OccurrenceTrace& trace, std::uint32_t m_f,
                              std::uint32_t m_b, const Nonce& nonce,
                              const AttestationKey& key) {
  AttestationReport rep;
  rep.nonce = nonce;
  rep.trace = trace;
  rep.m_f = m_f;
  rep.m_b = m_b;
  rep.signature = hmac_sha256(key.bytes, rep.body_bytes());
  return rep;
}

bool verify_signature(const AttestationReport& report, const AttestationKey& key,
                      const Nonce& expected_nonce) {
  if (CRYPTO_memcmp(report.nonce.data(), expected_nonce.data(), expected_nonce.size()) != 0)
    return false;
  Digest expect = hmac_sha256(key.bytes, report.body_bytes());
  return CRYPTO_memcmp(expect.data(), report.signature.data(), expect.size()) == 0;
}

std::uint64_t ExecutionLog::n() const {
  std::uint64_t c = 0;
  for (const auto& e : events)
    if (e.kind != Ev::Return) ++c;
  return c;
}

std::uint64_t ExecutionLog::m() const {
  std::uint64_t c = 0;
  for (const auto& e : events)
    if (e.kind == Ev::Return) ++c;
  return c;
}

ExecResult execute(const ProgramCFG& cfg, const InstrumentationPlan& plan,
                   const IndirectTargetList& itl, const KeyPair& keys, const Nonce& nonce,
                   const std::map<int, std::uint32_t>& inputs, const ExecOptions& opts) {
  ExecResult res;
  KeyedMac mac(keys.measurement.bytes);

  std::array<std::uint32_t, 16> regs{};
  for (const auto& [r, v] : inputs) regs.at(static_cast<std::size_t>(r)) = v;

  // Hot-path lookups as flat arrays; the per-address trace map is built once
  // at the end.
  std::vector<char> direct_flag(cfg.blocks.size(), 0);
  for (int b : plan.direct_report_blocks) direct_flag[b] = 1;
  std::vector<std::uint64_t> entry_counts(cfg.blocks.size(), 0);

  OccurrenceTrace trace;
  std::uint32_t m_f = 0, m_b = 0;
  std::vector<std::uint32_t> call_stack;
  std::uint64_t fuel = opts.fuel;
  const AttackSpec* atk = opts.attack;
  bool illegal_override_done = false;
  bool return_corrupt_done = false;

  int current = cfg.entry_block;
  std::optional<std::string> abort_reason;

  auto enter_block = [&](int b) {
    if (opts.log_events) res.log.block_entries.push_back(b);
    if (direct_flag[b]) {
      entry_counts[b] += 1;
      m_f = mac.fold32(m_f, cfg.blocks[b].start);
    }
  };

  enter_block(current);
  while (!abort_reason) {
    const BasicBlock& blk = cfg.blocks[current];
    bool transferred = false;
    for (const auto& ins : blk.instrs) {
      if (fuel == 0) {
        abort_reason = "fuel-exhausted";
        break;
      }
      --fuel;
      switch (ins.kind) {
        case InstrKind::Compute: {
          const auto& c = std::get<ComputeOp>(ins.op);
          switch (c.form) {
            case ComputeOp::Form::Nop: break;
            case ComputeOp::Form::Copy: regs[c.dst] = regs[c.src]; break;
            case ComputeOp::Form::AddReg: regs[c.dst] = regs[c.src] + regs[c.src2]; break;
            case ComputeOp::Form::AddImm: regs[c.dst] = regs[c.src] + c.imm; break;
            case ComputeOp::Form::SubImm: regs[c.dst] = regs[c.src] - c.imm; break;
          }
          break;
        }
        case InstrKind::SetReg: {
          const auto& s = std::get<SetRegOp>(ins.op);
          switch (s.kind) {
            case SetRegOp::Kind::Imm:
              regs[s.dst] = s.imm;
              break;
            case SetRegOp::Kind::BlockAddr:
              regs[s.dst] = cfg.blocks[cfg.block_by_label(blk.func, s.sym)].start;
              break;
            case SetRegOp::Kind::FuncAddr:
              regs[s.dst] =
                  cfg.blocks[cfg.functions[cfg.function_by_name(s.sym)].entry].start;
              break;
          }
          break;
        }
        case InstrKind::LoopHeaderHint:
          break;

        case InstrKind::CondBranch: {
          const auto& op = std::get<CondBranchOp>(ins.op);
          std::uint32_t lhs = regs[op.cond.lhs_reg];
          std::uint32_t rhs = op.cond.rhs_is_reg ? regs[op.cond.rhs] : op.cond.rhs;
          if (atk && atk->kind == AttackSpec::Kind::LoopCountDelta && atk->block == current)
            rhs = static_cast<std::uint32_t>(static_cast<std::int64_t>(rhs) + atk->delta);
          bool taken = eval(lhs, op.cond.op, rhs);
          if (atk && atk->kind == AttackSpec::Kind::BranchSwap && atk->block == current)
            taken = !taken;
          int dest = cfg.successors(current)[taken ? 0 : 1];
          if (opts.log_events)
            res.log.events.push_back({taken ? ExecutionLog::Ev::CondTaken
                                            : ExecutionLog::Ev::CondFall,
                                      cfg.blocks[dest].start, current});
          current = dest;
          enter_block(current);
          transferred = true;
          break;
        }
        case InstrKind::DirectJump: {
          current = cfg.successors(current)[0];
          enter_block(current);
          transferred = true;
          break;
        }
        case InstrKind::Call: {
          int cont = cfg.continuation(current);
          call_stack.push_back(cfg.blocks[cont].start);
          int callee = cfg.function_by_name(std::get<CallOp>(ins.op).callee);
          current = cfg.functions[callee].entry;
          enter_block(current);
          transferred = true;
          break;
        }
        case InstrKind::IndirectCall:
        case InstrKind::IndirectJump: {
          std::uint32_t dest = regs[std::get<IndirectOp>(ins.op).reg];
          if (atk && atk->kind == AttackSpec::Kind::IllegalIndirect && !illegal_override_done) {
            dest = atk->addr;
            illegal_override_done = true;
          }
          if (opts.log_events)
            res.log.events.push_back({ExecutionLog::Ev::Indirect, dest, current});
          m_f = mac.fold32(m_f, dest);
          if (opts.training) {
            res.observed_indirect.insert(dest);
          } else if (itl.contains(dest)) {
            trace.counts[dest] += 1;
          } else if (static_cast<int>(trace.illegal.size()) >= opts.max_illegal) {
            abort_reason = "illegal-overflow";
            break;
          } else {
            trace.illegal.push_back(dest);
          }
          int dest_block = cfg.block_index_at(dest);
          if (dest_block < 0) {
            abort_reason = "bad-transfer";
            break;
          }
          if (ins.kind == InstrKind::IndirectCall) {
            int cont = cfg.continuation(current);
            call_stack.push_back(cfg.blocks[cont].start);
          }
          current = dest_block;
          enter_block(current);
          transferred = true;
          break;
        }
        case InstrKind::Return: {
          if (call_stack.empty()) {
            abort_reason = "return-stack-underflow";
            break;
          }
          std::uint32_t ret = call_stack.back();
          call_stack.pop_back();
          std::uint32_t folded = ret;
          if (atk && atk->kind == AttackSpec::Kind::ReturnCorrupt && !return_corrupt_done &&
              static_cast<int>(call_stack.size()) + 1 == atk->depth) {
            folded = ret ^ 1u;
            return_corrupt_done = true;
          }
          m_b = mac.fold32(m_b, folded);
          if (opts.log_events)
            res.log.events.push_back({ExecutionLog::Ev::Return, ret, current});
          current = cfg.block_index_at(ret);
          enter_block(current);
          transferred = true;
          break;
        }
        case InstrKind::Exit:
          abort_reason = std::nullopt;
          transferred = false;
          goto done;
      }
      if (abort_reason || transferred) break;
    }
    if (!abort_reason && !transferred) {
      // Unreachable for validated programs: every block ends in a terminator.
      abort_reason = "bad-transfer";
    }
  }
done:

  for (const auto& b : cfg.blocks)
    if (entry_counts[b.index]) trace.counts[b.start] += entry_counts[b.index];

  res.report = sign_report(trace, m_f, m_b, nonce, keys.attestation);
  res.abort_reason = abort_reason;
  return res;
}

}  // namespace cfa
