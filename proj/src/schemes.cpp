// SPDX-License-Identifier: MIT

#include "cfa/schemes.hpp"

#include <cstring>
#include <sstream>
#include <stdexcept>

namespace cfa {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 24));
}

}  // namespace

std::uint32_t fold32_xor(std::uint32_t h, std::uint32_t v) {
  std::array<std::uint8_t, 4> buf{};
  std::uint32_t x = h ^ v;
  buf[0] = static_cast<std::uint8_t>(x);
  buf[1] = static_cast<std::uint8_t>(x >> 8);
  buf[2] = static_cast<std::uint8_t>(x >> 16);
  buf[3] = static_cast<std::uint8_t>(x >> 24);
  return low32_le(sha256(buf));
}

NaiveAuth build_naive(const ExecutionLog& log) {
  NaiveAuth out;
  out.destinations.reserve(log.events.size());
  std::vector<std::uint8_t> bytes;
  bytes.reserve(4 * log.events.size());
  for (const auto& ev : log.events) {
    out.destinations.push_back(ev.dest);
    put_u32(bytes, ev.dest);
  }
  out.digest = sha256(bytes);
  return out;
}

OatAuth build_oat(const ExecutionLog& log) {
  OatAuth out;
  for (const auto& ev : log.events) {
    switch (ev.kind) {
      case ExecutionLog::Ev::CondTaken:
        out.cond_bits.push_back(true);
        break;
      case ExecutionLog::Ev::CondFall:
        out.cond_bits.push_back(false);
        break;
      case ExecutionLog::Ev::Indirect:
        out.indirect_dests.push_back(ev.dest);
        break;
      case ExecutionLog::Ev::Return:
        out.ret_chain = fold32_xor(out.ret_chain, ev.dest);
        break;
    }
  }
  return out;
}

CflatAuth build_cflat(const ExecutionLog& log, const ProgramCFG& cfg) {
  CflatAuth out;
  const DominatorInfo dom = compute_dominators(cfg);
  const std::vector<Loop> loops = natural_loops(cfg, dom);
  std::unordered_map<int, const Loop*> by_header;
  for (const auto& l : loops) by_header.emplace(l.header, &l);

  // One open context per active loop, innermost on top. An iteration hash
  // covers the blocks entered after the header; a hash-0 iteration that
  // folded nothing is the final exit check, not an iteration, and is dropped
  // when the loop closes.
  struct Ctx {
    const Loop* loop;
    std::uint32_t hash = 0;
    bool folded = false;
  };
  std::vector<Ctx> active;

  auto fold_here = [&](std::uint32_t v) {
    if (active.empty()) {
      out.top_hash = fold32_xor(out.top_hash, v);
    } else {
      active.back().hash = fold32_xor(active.back().hash, v);
      active.back().folded = true;
    }
  };
  auto record = [&](Ctx& c) { ++out.loop_records[c.loop->header][c.hash]; };
  auto close_loop = [&](bool record_partial) {
    Ctx c = active.back();
    active.pop_back();
    if (record_partial || c.folded) record(c);
    // The enclosing path sees the loop as a single marker, independent of its
    // iteration count — that containment is the scheme's whole size argument.
    fold_here(cfg.blocks[static_cast<std::size_t>(c.loop->header)].start);
  };

  for (int b : log.block_entries) {
    const BasicBlock& blk = cfg.blocks[static_cast<std::size_t>(b)];
    while (!active.empty()) {
      const Loop* l = active.back().loop;
      const BasicBlock& hdr = cfg.blocks[static_cast<std::size_t>(l->header)];
      // Departure is only visible within the header's function; callee blocks
      // belong to the current iteration's sub-path.
      if (blk.func == hdr.func && !l->contains(b)) {
        close_loop(/*record_partial=*/false);
      } else {
        break;
      }
    }
    auto it = by_header.find(b);
    if (it == by_header.end()) {
      fold_here(blk.start);
      continue;
    }
    if (!active.empty() && active.back().loop == it->second) {
      // Back edge: the previous iteration is complete.
      record(active.back());
      active.back().hash = 0;
      active.back().folded = false;
    } else {
      active.push_back(Ctx{it->second});
    }
  }
  while (!active.empty()) close_loop(/*record_partial=*/false);
  return out;
}

BlastAuth build_blast(const ExecutionLog& log, const ProgramCFG& cfg,
                      const std::vector<BallLarusNumbering>& numberings) {
  BlastAuth out;
  if (log.block_entries.empty()) return out;

  struct Frame {
    int func;
    std::uint64_t p;
    int call_block = -1;  // block in this frame awaiting a return
  };
  std::vector<Frame> frames;
  {
    int f = cfg.blocks[static_cast<std::size_t>(log.block_entries.front())].func;
    frames.push_back(Frame{f, numberings.at(static_cast<std::size_t>(f)).entry_inc});
  }

  auto emit = [&](std::uint64_t p) {
    out.entries.emplace_back(static_cast<std::uint32_t>(frames.back().func), p);
  };
  auto cross = [&](const BallLarusNumbering::SuccEdge& e) {
    if (e.is_back) {
      emit(frames.back().p + e.emit_inc);
      frames.back().p = e.reset;
    } else {
      frames.back().p += e.inc;
    }
  };
  auto numbering_of = [&](int func) -> const BallLarusNumbering& {
    return numberings.at(static_cast<std::size_t>(func));
  };

  std::size_t ev = 0;
  auto next_event = [&](int block) -> const ExecutionLog::Event& {
    if (ev >= log.events.size() || log.events[ev].block != block)
      throw std::logic_error("execution log events out of step with block entries");
    return log.events[ev++];
  };

  for (std::size_t i = 0; i + 1 < log.block_entries.size(); ++i) {
    int b = log.block_entries[i];
    int nb = log.block_entries[i + 1];
    const BasicBlock& blk = cfg.blocks[static_cast<std::size_t>(b)];
    switch (blk.terminator().kind) {
      case InstrKind::CondBranch: {
        const auto& e = next_event(b);
        std::size_t ord = e.kind == ExecutionLog::Ev::CondTaken ? 0 : 1;
        cross(numbering_of(frames.back().func).succ.at(b).at(ord));
        break;
      }
      case InstrKind::DirectJump:
        cross(numbering_of(frames.back().func).succ.at(b).at(0));
        break;
      case InstrKind::IndirectJump: {
        next_event(b);
        const auto& edges = numbering_of(frames.back().func).succ.at(b);
        const auto& succs = cfg.successors(b);
        std::size_t ord = 0;
        while (ord < succs.size() && succs[ord] != nb) ++ord;
        if (ord == succs.size())
          throw std::logic_error("indirect jump left its candidate set");
        cross(edges.at(ord));
        break;
      }
      case InstrKind::Call:
      case InstrKind::IndirectCall: {
        if (blk.terminator().kind == InstrKind::IndirectCall) next_event(b);
        emit(frames.back().p);  // call-site entry; the path resumes after return
        frames.back().call_block = b;
        int callee = cfg.blocks[static_cast<std::size_t>(nb)].func;
        frames.push_back(Frame{callee, numbering_of(callee).entry_inc});
        break;
      }
      case InstrKind::Return: {
        next_event(b);
        emit(frames.back().p + numbering_of(frames.back().func).final_inc.at(b));
        frames.pop_back();
        if (frames.empty() || frames.back().call_block < 0)
          throw std::logic_error("return without a matching call in the log");
        cross(numbering_of(frames.back().func).succ.at(frames.back().call_block).at(0));
        frames.back().call_block = -1;
        break;
      }
      default:
        throw std::logic_error("non-terminator fell through the block walk");
    }
  }

  int last = log.block_entries.back();
  if (cfg.blocks[static_cast<std::size_t>(last)].terminator().kind == InstrKind::Exit)
    emit(frames.back().p + numbering_of(frames.back().func).final_inc.at(last));

  std::vector<std::uint8_t> bytes;
  bytes.reserve(8 * out.entries.size());
  for (const auto& [func, p] : out.entries) {
    put_u32(bytes, func);
    put_u32(bytes, static_cast<std::uint32_t>(p));
  }
  out.digest = low32_le(sha256(bytes));
  return out;
}

std::string SizeReport::csv_header() {
  return "program,scheme,bytes,n,m,l,blocks,unique_counted";
}

std::string SizeReport::csv_rows(const std::string& program) const {
  std::ostringstream os;
  auto row = [&](const char* scheme, std::size_t bytes) {
    os << program << ',' << scheme << ',' << bytes << ',' << n << ',' << m << ',' << l << ','
       << num_blocks << ',' << unique_instrumented << '\n';
  };
  row("enola", enola_bytes);
  row("naive", naive_bytes);
  row("oat", oat_bytes);
  row("cflat", cflat_bytes);
  if (blast_bytes) row("blast", *blast_bytes);
  return os.str();
}

SizeReport size_report(const NaiveAuth& naive, const OatAuth& oat, const CflatAuth& cflat,
                       const std::optional<BlastAuth>& blast,
                       const AttestationReport& enola_report, const ExecutionLog& log,
                       const ProgramCFG& cfg) {
  SizeReport r;
  r.n = log.n();
  r.m = log.m();
  r.l = log.l();
  r.num_blocks = cfg.blocks.size();
  r.unique_instrumented = enola_report.trace.counts.size();
  r.enola_bytes = 8 * r.unique_instrumented + 8;
  r.naive_bytes = naive.size_bytes();
  r.oat_bytes = oat.size_bytes();
  r.cflat_bytes = cflat.size_bytes();
  if (blast) r.blast_bytes = blast->size_bytes();
  r.naive_trace_bytes = naive.trace_bytes();
  r.oat_trace_bits = oat.trace_bits();
  r.cflat_records = cflat.record_count();
  return r;
}

}  // namespace cfa
