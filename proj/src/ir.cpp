// SPDX-License-Identifier: MIT

#include "cfa/ir.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace cfa {

namespace {

constexpr std::uint32_t kBaseAddr = 0x10000000u;
constexpr std::uint32_t kInstrSize = 4;
constexpr int kNumRegisters = 16;

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

[[noreturn]] void parse_fail(int line, const std::string& msg) {
  throw LoadError("parse error (line " + std::to_string(line) + "): " + msg);
}

[[noreturn]] void validation_fail(const std::string& msg) {
  throw LoadError("validation error: " + msg);
}

int parse_reg(const std::string& tok, int line) {
  if (tok.size() < 2 || tok[0] != 'r') parse_fail(line, "expected register, got '" + tok + "'");
  for (std::size_t i = 1; i < tok.size(); ++i)
    if (!std::isdigit(static_cast<unsigned char>(tok[i])))
      parse_fail(line, "bad register '" + tok + "'");
  int idx = std::stoi(tok.substr(1));
  if (idx < 0 || idx >= kNumRegisters)
    parse_fail(line, "register out of range (r0..r15): '" + tok + "'");
  return idx;
}

bool try_parse_u32(const std::string& tok, std::uint32_t& out) {
  if (tok.empty()) return false;
  try {
    std::size_t pos = 0;
    unsigned long long v = std::stoull(tok, &pos, 0);  // handles 0x prefix
    if (pos != tok.size() || v > 0xffffffffull) return false;
    out = static_cast<std::uint32_t>(v);
    return true;
  } catch (...) {
    return false;
  }
}

std::uint32_t parse_u32(const std::string& tok, int line) {
  std::uint32_t v = 0;
  if (!try_parse_u32(tok, v)) parse_fail(line, "expected integer, got '" + tok + "'");
  return v;
}

CmpOp parse_cmp(const std::string& tok, int line) {
  if (tok == "<") return CmpOp::Lt;
  if (tok == "<=") return CmpOp::Le;
  if (tok == ">") return CmpOp::Gt;
  if (tok == ">=") return CmpOp::Ge;
  if (tok == "==") return CmpOp::Eq;
  if (tok == "!=") return CmpOp::Ne;
  parse_fail(line, "bad comparison operator '" + tok + "'");
}

Instruction parse_instr(const std::string& text, int line) {
  auto toks = split_ws(text);
  Instruction ins;
  ins.line = line;
  const std::string& head = toks[0];

  if (head == "compute") {
    ComputeOp c;
    if (toks.size() == 1) {
      c.form = ComputeOp::Form::Nop;
    } else if (toks.size() == 4 && toks[2] == "=") {
      c.form = ComputeOp::Form::Copy;
      c.dst = parse_reg(toks[1], line);
      c.src = parse_reg(toks[3], line);
    } else if (toks.size() == 6 && toks[2] == "=" && (toks[4] == "+" || toks[4] == "-")) {
      c.dst = parse_reg(toks[1], line);
      c.src = parse_reg(toks[3], line);
      std::uint32_t imm = 0;
      if (toks[4] == "+" && toks[5][0] == 'r') {
        c.form = ComputeOp::Form::AddReg;
        c.src2 = parse_reg(toks[5], line);
      } else if (try_parse_u32(toks[5], imm)) {
        c.form = toks[4] == "+" ? ComputeOp::Form::AddImm : ComputeOp::Form::SubImm;
        c.imm = imm;
      } else {
        parse_fail(line, "bad compute operand '" + toks[5] + "'");
      }
    } else {
      parse_fail(line, "bad compute form");
    }
    ins.kind = InstrKind::Compute;
    ins.op = c;
    return ins;
  }

  if (head == "set") {
    // set rK = <u32> | @block | @func
    if (toks.size() != 4 || toks[2] != "=") parse_fail(line, "bad set form");
    SetRegOp s;
    s.dst = parse_reg(toks[1], line);
    if (toks[3][0] == '@') {
      s.sym = toks[3].substr(1);
      if (s.sym.empty()) parse_fail(line, "empty symbol in set");
      s.kind = SetRegOp::Kind::BlockAddr;  // refined to FuncAddr at validation
    } else {
      s.kind = SetRegOp::Kind::Imm;
      s.imm = parse_u32(toks[3], line);
    }
    ins.kind = InstrKind::SetReg;
    ins.op = s;
    return ins;
  }

  if (head == "cbr") {
    if (toks.size() != 2 && toks.size() != 6) parse_fail(line, "bad cbr form");
    CondBranchOp b;
    b.taken_label = toks[1];
    if (toks.size() == 6) {
      if (toks[2] != "if") parse_fail(line, "expected 'if' in cbr");
      b.cond.lhs_reg = parse_reg(toks[3], line);
      b.cond.op = parse_cmp(toks[4], line);
      if (toks[5][0] == 'r') {
        b.cond.rhs_is_reg = true;
        b.cond.rhs = static_cast<std::uint32_t>(parse_reg(toks[5], line));
      } else {
        b.cond.rhs_is_reg = false;
        b.cond.rhs = parse_u32(toks[5], line);
      }
    }  // bare cbr: default r0 != 0
    ins.kind = InstrKind::CondBranch;
    ins.op = b;
    return ins;
  }

  if (head == "jmp") {
    if (toks.size() != 2) parse_fail(line, "bad jmp form");
    ins.kind = InstrKind::DirectJump;
    ins.op = DirectJumpOp{toks[1]};
    return ins;
  }
  if (head == "call") {
    if (toks.size() != 2) parse_fail(line, "bad call form");
    ins.kind = InstrKind::Call;
    ins.op = CallOp{toks[1]};
    return ins;
  }
  if (head == "icall" || head == "ijmp") {
    if (toks.size() != 2) parse_fail(line, "bad " + head + " form");
    ins.kind = head == "icall" ? InstrKind::IndirectCall : InstrKind::IndirectJump;
    ins.op = IndirectOp{parse_reg(toks[1], line)};
    return ins;
  }
  if (head == "ret") {
    ins.kind = InstrKind::Return;
    return ins;
  }
  if (head == "exit") {
    ins.kind = InstrKind::Exit;
    return ins;
  }
  if (head == "loophint") {
    ins.kind = InstrKind::LoopHeaderHint;
    return ins;
  }
  parse_fail(line, "unknown instruction '" + head + "'");
}

struct RawBlock {
  std::string label;
  std::optional<std::uint32_t> pinned_addr;
  std::vector<Instruction> instrs;
  int line = 0;
};

struct RawFunc {
  std::string name;
  std::vector<RawBlock> blocks;
  int line = 0;
};

}  // namespace

const char* to_string(InstrKind k) {
  switch (k) {
    case InstrKind::Compute: return "compute";
    case InstrKind::CondBranch: return "cbr";
    case InstrKind::DirectJump: return "jmp";
    case InstrKind::Call: return "call";
    case InstrKind::IndirectCall: return "icall";
    case InstrKind::IndirectJump: return "ijmp";
    case InstrKind::Return: return "ret";
    case InstrKind::Exit: return "exit";
    case InstrKind::SetReg: return "set";
    case InstrKind::LoopHeaderHint: return "loophint";
  }
  return "?";
}

const char* to_string(CmpOp op) {
  switch (op) {
    case CmpOp::Lt: return "<";
    case CmpOp::Le: return "<=";
    case CmpOp::Gt: return ">";
    case CmpOp::Ge: return ">=";
    case CmpOp::Eq: return "==";
    case CmpOp::Ne: return "!=";
  }
  return "?";
}

const BasicBlock& ProgramCFG::block_at(std::uint32_t addr) const {
  int idx = block_index_at(addr);
  if (idx < 0) throw LoadError("no block starts at address " + std::to_string(addr));
  return blocks[idx];
}

int ProgramCFG::block_index_at(std::uint32_t addr) const {
  auto it = addr_index_.find(addr);
  return it == addr_index_.end() ? -1 : it->second;
}

int ProgramCFG::block_by_label(int func, const std::string& label) const {
  for (int b : functions[func].blocks)
    if (blocks[b].label == label) return b;
  return -1;
}

int ProgramCFG::function_by_name(const std::string& name) const {
  for (const auto& f : functions)
    if (f.name == name) return f.index;
  return -1;
}

void ProgramCFG::finalize() {
  const std::size_t n = blocks.size();
  succ_.assign(n, {});
  pred_.assign(n, {});
  continuation_.assign(n, -1);
  addr_index_.clear();
  for (const auto& b : blocks) addr_index_[b.start] = b.index;

  // Per-function indirect-jump candidates: any block whose address is taken
  // by a `set rK = @label` in the same function.
  std::vector<std::vector<int>> ijmp_candidates(functions.size());
  for (const auto& b : blocks) {
    for (const auto& ins : b.instrs) {
      if (ins.kind != InstrKind::SetReg) continue;
      const auto& s = std::get<SetRegOp>(ins.op);
      if (s.kind == SetRegOp::Kind::BlockAddr) {
        int tgt = block_by_label(b.func, s.sym);
        if (tgt >= 0) ijmp_candidates[b.func].push_back(tgt);
      }
    }
  }
  for (auto& v : ijmp_candidates) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }

  edges.clear();
  for (const auto& b : blocks) {
    const Function& fn = functions[b.func];
    auto layout_next = [&]() -> int {
      auto it = std::find(fn.blocks.begin(), fn.blocks.end(), b.index);
      return (it + 1) == fn.blocks.end() ? -1 : *(it + 1);
    };
    const Instruction& t = b.terminator();
    switch (t.kind) {
      case InstrKind::CondBranch: {
        const auto& op = std::get<CondBranchOp>(t.op);
        int taken = block_by_label(b.func, op.taken_label);
        int fall = layout_next();
        succ_[b.index] = {taken, fall};
        edges.push_back({b.index, taken, EdgeKind::CondTaken});
        edges.push_back({b.index, fall, EdgeKind::CondFallthrough});
        break;
      }
      case InstrKind::DirectJump: {
        int tgt = block_by_label(b.func, std::get<DirectJumpOp>(t.op).target_label);
        succ_[b.index] = {tgt};
        edges.push_back({b.index, tgt, EdgeKind::Jump});
        break;
      }
      case InstrKind::Call: {
        int cont = layout_next();
        continuation_[b.index] = cont;
        succ_[b.index] = {cont};
        int callee = function_by_name(std::get<CallOp>(t.op).callee);
        edges.push_back({b.index, functions[callee].entry, EdgeKind::Call});
        break;
      }
      case InstrKind::IndirectCall: {
        int cont = layout_next();
        continuation_[b.index] = cont;
        succ_[b.index] = {cont};
        // Candidate callees: function addresses taken inside this function.
        for (const auto& src : fn.blocks)
          for (const auto& ins : blocks[src].instrs)
            if (ins.kind == InstrKind::SetReg) {
              const auto& s = std::get<SetRegOp>(ins.op);
              if (s.kind == SetRegOp::Kind::FuncAddr) {
                int cal = function_by_name(s.sym);
                if (cal >= 0)
                  edges.push_back({b.index, functions[cal].entry, EdgeKind::Indirect});
              }
            }
        break;
      }
      case InstrKind::IndirectJump: {
        succ_[b.index] = ijmp_candidates[b.func];
        for (int tgt : ijmp_candidates[b.func])
          edges.push_back({b.index, tgt, EdgeKind::Indirect});
        break;
      }
      case InstrKind::Return: {
        // Return edges to each direct caller's continuation, for the export.
        for (const auto& caller : blocks)
          if (caller.terminator().kind == InstrKind::Call &&
              function_by_name(std::get<CallOp>(caller.terminator().op).callee) == b.func)
            edges.push_back({b.index, continuation_[caller.index], EdgeKind::Return});
        break;
      }
      case InstrKind::Exit:
        break;
      default:
        break;
    }
  }
  for (const auto& e : edges) {
    (void)e;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (int s : succ_[i])
      if (s >= 0) pred_[s].push_back(static_cast<int>(i));
}

ProgramCFG load_program(const std::string& text) {
  // ---- Pass 1: line-structured parse into raw functions/blocks.
  std::vector<RawFunc> raw;
  RawFunc* cur_fn = nullptr;
  RawBlock* cur_blk = nullptr;

  std::istringstream is(text);
  std::string physical;
  int lineno = 0;
  while (std::getline(is, physical)) {
    ++lineno;
    auto hash = physical.find('#');
    if (hash != std::string::npos) physical.erase(hash);
    std::string line = trim(physical);
    if (line.empty()) continue;

    if (line.rfind("func ", 0) == 0) {
      if (cur_fn) parse_fail(lineno, "nested 'func' (missing '}')");
      auto toks = split_ws(line);
      if (toks.size() != 3 || toks[2] != "{") parse_fail(lineno, "expected 'func <name> {'");
      raw.push_back(RawFunc{toks[1], {}, lineno});
      cur_fn = &raw.back();
      cur_blk = nullptr;
      continue;
    }
    if (line == "}") {
      if (!cur_fn) parse_fail(lineno, "unmatched '}'");
      cur_fn = nullptr;
      cur_blk = nullptr;
      continue;
    }
    if (line.rfind("block ", 0) == 0) {
      if (!cur_fn) parse_fail(lineno, "'block' outside function");
      auto colon = line.find(':');
      if (colon == std::string::npos) parse_fail(lineno, "missing ':' after block header");
      auto header = split_ws(line.substr(0, colon));
      RawBlock rb;
      rb.line = lineno;
      if (header.size() == 2) {
        rb.label = header[1];
      } else if (header.size() == 3 && header[2][0] == '@') {
        rb.label = header[1];
        rb.pinned_addr = parse_u32(header[2].substr(1), lineno);
      } else {
        parse_fail(lineno, "expected 'block <label> [@addr]:'");
      }
      cur_fn->blocks.push_back(std::move(rb));
      cur_blk = &cur_fn->blocks.back();
      line = trim(line.substr(colon + 1));
      if (line.empty()) continue;
      // fall through: instructions on the header line
    }
    if (!cur_blk) parse_fail(lineno, "instruction outside block");

    std::stringstream parts(line);
    std::string piece;
    while (std::getline(parts, piece, ';')) {
      piece = trim(piece);
      if (piece.empty()) continue;
      if (!cur_blk->instrs.empty() && cur_blk->instrs.back().is_terminator())
        parse_fail(lineno, "instruction after terminator in block '" + cur_blk->label + "'");
      cur_blk->instrs.push_back(parse_instr(piece, lineno));
    }
  }
  if (cur_fn) validation_fail("unterminated function '" + cur_fn->name + "'");
  if (raw.empty()) validation_fail("program has no functions");

  // ---- Pass 2: normalize fallthrough blocks by appending an explicit jump.
  for (auto& fn : raw) {
    if (fn.blocks.empty()) validation_fail("function '" + fn.name + "' has no blocks");
    for (std::size_t i = 0; i < fn.blocks.size(); ++i) {
      auto& rb = fn.blocks[i];
      if (rb.instrs.empty())
        validation_fail("block '" + rb.label + "' in '" + fn.name + "' is empty");
      if (!rb.instrs.back().is_terminator()) {
        if (i + 1 == fn.blocks.size())
          validation_fail("missing terminator at end of function '" + fn.name + "'");
        Instruction jmp;
        jmp.kind = InstrKind::DirectJump;
        jmp.op = DirectJumpOp{fn.blocks[i + 1].label};
        jmp.line = rb.instrs.back().line;
        rb.instrs.push_back(jmp);
      }
    }
  }

  // ---- Pass 3: build the CFG skeleton with deterministic addresses.
  ProgramCFG cfg;
  std::uint32_t cursor = kBaseAddr;
  for (auto& fn : raw) {
    if (cfg.function_by_name(fn.name) >= 0)
      validation_fail("duplicate function '" + fn.name + "'");
    Function f;
    f.name = fn.name;
    f.index = static_cast<int>(cfg.functions.size());
    cfg.functions.push_back(f);
    for (auto& rb : fn.blocks) {
      BasicBlock b;
      b.label = rb.label;
      b.func = f.index;
      b.index = static_cast<int>(cfg.blocks.size());
      if (rb.pinned_addr) cursor = *rb.pinned_addr;
      b.start = cursor;
      b.end = cursor + kInstrSize * static_cast<std::uint32_t>(rb.instrs.size() - 1);
      cursor = b.end + kInstrSize;
      b.instrs = std::move(rb.instrs);
      cfg.functions[f.index].blocks.push_back(b.index);
      cfg.blocks.push_back(std::move(b));
    }
    cfg.functions[f.index].entry = cfg.functions[f.index].blocks.front();
  }

  // ---- Pass 4: validation.
  {
    std::set<std::uint32_t> starts;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> ranges;
    for (const auto& b : cfg.blocks) {
      if (!starts.insert(b.start).second)
        validation_fail("duplicate address 0x" + [&] {
          std::ostringstream os;
          os << std::hex << b.start;
          return os.str();
        }() + " (block '" + b.label + "')");
      ranges.emplace_back(b.start, b.end + kInstrSize);
    }
    std::sort(ranges.begin(), ranges.end());
    for (std::size_t i = 1; i < ranges.size(); ++i)
      if (ranges[i].first < ranges[i - 1].second)
        validation_fail("overlapping address ranges");
  }
  for (const auto& f : cfg.functions) {
    std::set<std::string> labels;
    for (int bi : f.blocks)
      if (!labels.insert(cfg.blocks[bi].label).second)
        validation_fail("duplicate label '" + cfg.blocks[bi].label + "' in '" + f.name + "'");
  }
  for (auto& b : cfg.blocks) {
    const Function& fn = cfg.functions[b.func];
    for (auto& ins : b.instrs) {
      switch (ins.kind) {
        case InstrKind::CondBranch: {
          const auto& op = std::get<CondBranchOp>(ins.op);
          if (cfg.block_by_label(b.func, op.taken_label) < 0)
            validation_fail("dangling branch target '" + op.taken_label + "' in '" + fn.name + "'");
          if (fn.blocks.back() == b.index)
            validation_fail("conditional branch in last block of '" + fn.name +
                            "' has no fallthrough block");
          break;
        }
        case InstrKind::DirectJump: {
          const auto& op = std::get<DirectJumpOp>(ins.op);
          if (cfg.block_by_label(b.func, op.target_label) < 0)
            validation_fail("dangling branch target '" + op.target_label + "' in '" + fn.name + "'");
          break;
        }
        case InstrKind::Call: {
          const auto& op = std::get<CallOp>(ins.op);
          if (cfg.function_by_name(op.callee) < 0)
            validation_fail("dangling call target '" + op.callee + "'");
          if (fn.blocks.back() == b.index)
            validation_fail("call in last block of '" + fn.name + "' has no continuation block");
          break;
        }
        case InstrKind::IndirectCall:
          if (fn.blocks.back() == b.index)
            validation_fail("indirect call in last block of '" + fn.name +
                            "' has no continuation block");
          break;
        case InstrKind::SetReg: {
          auto& s = std::get<SetRegOp>(ins.op);
          if (s.kind != SetRegOp::Kind::Imm) {
            // '@sym' resolves to a block label in this function, else a
            // function name.
            if (cfg.block_by_label(b.func, s.sym) >= 0) {
              s.kind = SetRegOp::Kind::BlockAddr;
            } else if (cfg.function_by_name(s.sym) >= 0) {
              s.kind = SetRegOp::Kind::FuncAddr;
            } else {
              validation_fail("dangling symbol '@" + s.sym + "' in '" + fn.name + "'");
            }
          }
          break;
        }
        default:
          break;
      }
    }
  }

  cfg.finalize();

  // ---- Pass 5: reachability and exits.
  for (const auto& f : cfg.functions) {
    std::set<int> seen{f.entry};
    std::deque<int> work{f.entry};
    while (!work.empty()) {
      int b = work.front();
      work.pop_front();
      for (int s : cfg.successors(b))
        if (s >= 0 && seen.insert(s).second) work.push_back(s);
    }
    for (int bi : f.blocks)
      if (!seen.count(bi))
        validation_fail("unreachable block '" + cfg.blocks[bi].label + "' in '" + f.name + "'");
  }
  for (const auto& b : cfg.blocks)
    if (b.terminator().kind == InstrKind::Exit) cfg.exit_blocks.push_back(b.index);
  if (cfg.exit_blocks.empty()) validation_fail("missing Exit block");

  int main_fn = cfg.function_by_name("main");
  cfg.entry_block = cfg.functions[main_fn < 0 ? 0 : main_fn].entry;
  return cfg;
}

ProgramCFG load_program_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open program file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_program(ss.str());
}

std::string ProgramCFG::to_json() const {
  using nlohmann::json;
  json j;
  j["entry"] = entry_block;
  j["exits"] = exit_blocks;
  json jf = json::array();
  for (const auto& f : functions)
    jf.push_back({{"name", f.name}, {"entry", f.entry}, {"blocks", f.blocks}});
  j["functions"] = std::move(jf);

  json jb = json::array();
  for (const auto& b : blocks) {
    json ji = json::array();
    for (const auto& ins : b.instrs) {
      json o;
      o["k"] = to_string(ins.kind);
      switch (ins.kind) {
        case InstrKind::Compute: {
          const auto& c = std::get<ComputeOp>(ins.op);
          switch (c.form) {
            case ComputeOp::Form::Nop: break;
            case ComputeOp::Form::Copy:
              o["d"] = c.dst; o["s"] = c.src; break;
            case ComputeOp::Form::AddReg:
              o["d"] = c.dst; o["s"] = c.src; o["s2"] = c.src2; break;
            case ComputeOp::Form::AddImm:
              o["d"] = c.dst; o["s"] = c.src; o["i"] = c.imm; break;
            case ComputeOp::Form::SubImm:
              o["d"] = c.dst; o["s"] = c.src; o["i"] = c.imm; o["neg"] = true; break;
          }
          break;
        }
        case InstrKind::CondBranch: {
          const auto& op2 = std::get<CondBranchOp>(ins.op);
          o["t"] = op2.taken_label;
          o["cl"] = op2.cond.lhs_reg;
          o["co"] = to_string(op2.cond.op);
          o["cr"] = op2.cond.rhs;
          o["crr"] = op2.cond.rhs_is_reg;
          break;
        }
        case InstrKind::DirectJump:
          o["t"] = std::get<DirectJumpOp>(ins.op).target_label;
          break;
        case InstrKind::Call:
          o["t"] = std::get<CallOp>(ins.op).callee;
          break;
        case InstrKind::IndirectCall:
        case InstrKind::IndirectJump:
          o["r"] = std::get<IndirectOp>(ins.op).reg;
          break;
        case InstrKind::SetReg: {
          const auto& s = std::get<SetRegOp>(ins.op);
          o["d"] = s.dst;
          if (s.kind == SetRegOp::Kind::Imm) {
            o["v"] = s.imm;
          } else {
            o["sym"] = s.sym;
            o["st"] = s.kind == SetRegOp::Kind::BlockAddr ? "block" : "func";
          }
          break;
        }
        default:
          break;
      }
      ji.push_back(std::move(o));
    }
    jb.push_back({{"label", b.label},
                  {"func", b.func},
                  {"start", b.start},
                  {"end", b.end},
                  {"instrs", std::move(ji)}});
  }
  j["blocks"] = std::move(jb);

  json je = json::array();
  for (const auto& e : edges) {
    const char* k = nullptr;
    switch (e.kind) {
      case EdgeKind::CondTaken: k = "cond-taken"; break;
      case EdgeKind::CondFallthrough: k = "cond-fallthrough"; break;
      case EdgeKind::Jump: k = "jump"; break;
      case EdgeKind::Call: k = "call"; break;
      case EdgeKind::Indirect: k = "indirect"; break;
      case EdgeKind::Return: k = "return"; break;
    }
    je.push_back({e.src, e.dst, k});
  }
  j["edges"] = std::move(je);
  return j.dump();
}

}  // namespace cfa
