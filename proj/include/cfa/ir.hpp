// SPDX-License-Identifier: MIT
//
// Control-flow IR: instructions, basic blocks, functions, and the program CFG.
//
// Programs are written in a small line-oriented text format and loaded into an
// immutable ProgramCFG. Every block gets a 32-bit code address; layout is
// deterministic (base 0x10000000, four bytes per instruction, declaration
// order) unless a block pins its own address with `@0x...`.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace cfa {

enum class InstrKind {
  Compute,
  CondBranch,
  DirectJump,
  Call,
  IndirectCall,
  IndirectJump,
  Return,
  Exit,
  SetReg,
  LoopHeaderHint,
};

enum class CmpOp { Lt, Le, Gt, Ge, Eq, Ne };

// Branch steering condition: `rK <op> (rJ | imm)`. A bare `cbr L` parses as
// `if r0 != 0`.
struct CondExpr {
  int lhs_reg = 0;
  CmpOp op = CmpOp::Ne;
  bool rhs_is_reg = false;
  std::uint32_t rhs = 0;  // register index when rhs_is_reg, else immediate
};

// `compute` forms. Nop carries no operands; the others write dst.
struct ComputeOp {
  enum class Form { Nop, Copy, AddReg, AddImm, SubImm } form = Form::Nop;
  int dst = -1;
  int src = -1;
  int src2 = -1;            // AddReg only
  std::uint32_t imm = 0;    // AddImm / SubImm only
};

struct CondBranchOp {
  std::string taken_label;  // fallthrough is the next block in layout order
  CondExpr cond;
};

struct DirectJumpOp {
  std::string target_label;
};

struct CallOp {
  std::string callee;
};

struct IndirectOp {
  int reg = 0;  // register holding the destination address
};

struct SetRegOp {
  enum class Kind { Imm, BlockAddr, FuncAddr } kind = Kind::Imm;
  int dst = 0;
  std::uint32_t imm = 0;
  std::string sym;  // block label (same function) or function name
};

struct Instruction {
  InstrKind kind = InstrKind::Compute;
  std::variant<std::monostate, ComputeOp, CondBranchOp, DirectJumpOp, CallOp,
               IndirectOp, SetRegOp>
      op;
  int line = 0;  // source line, for diagnostics

  bool is_terminator() const {
    switch (kind) {
      case InstrKind::Compute:
      case InstrKind::SetReg:
      case InstrKind::LoopHeaderHint:
        return false;
      default:
        return true;
    }
  }
};

struct BasicBlock {
  std::string label;      // unique within its function
  int index = -1;         // global block index into ProgramCFG::blocks
  int func = -1;          // owning function index
  std::uint32_t start = 0;  // address of the first instruction
  std::uint32_t end = 0;    // address of the last instruction
  std::vector<Instruction> instrs;  // non-empty; last one is the terminator

  const Instruction& terminator() const { return instrs.back(); }
};

enum class EdgeKind { CondTaken, CondFallthrough, Jump, Call, Indirect, Return };

struct Edge {
  int src = -1;  // global block index
  int dst = -1;  // global block index; -1 for indirect placeholder edges
  EdgeKind kind = EdgeKind::Jump;
};

struct Function {
  std::string name;
  int index = -1;
  int entry = -1;               // global index of the entry block
  std::vector<int> blocks;      // global indices, declaration order
};

class ProgramCFG {
 public:
  std::vector<Function> functions;
  std::vector<BasicBlock> blocks;  // all blocks, global indexing
  std::vector<Edge> edges;         // all resolved edges
  int entry_block = -1;            // program entry (P_entry)
  std::vector<int> exit_blocks;    // blocks whose terminator is Exit

  // Intra-function successors in deterministic order: [taken, fallthrough]
  // for CondBranch, the continuation block for Call/IndirectCall, the target
  // for DirectJump. IndirectJump successors are the candidate set: every
  // block of the function whose address is taken by a `set`.
  const std::vector<int>& successors(int block) const { return succ_[block]; }
  const std::vector<int>& predecessors(int block) const { return pred_[block]; }

  // Continuation block (layout successor) for Call/IndirectCall blocks, -1
  // otherwise.
  int continuation(int block) const { return continuation_[block]; }

  const BasicBlock& block_at(std::uint32_t addr) const;
  int block_index_at(std::uint32_t addr) const;     // -1 if not a block start
  int block_by_label(int func, const std::string& label) const;
  int function_by_name(const std::string& name) const;

  // Canonical JSON export (sorted keys, stable ordering); the program digest
  // is computed over these bytes.
  std::string to_json() const;

  // Internal wiring, called by the loader.
  void finalize();

 private:
  std::vector<std::vector<int>> succ_;
  std::vector<std::vector<int>> pred_;
  std::vector<int> continuation_;
  std::map<std::uint32_t, int> addr_index_;
};

// Thrown for both parse errors (with line info) and validation errors (naming
// the violated rule).
struct LoadError : std::runtime_error {
  explicit LoadError(const std::string& what) : std::runtime_error(what) {}
};

// Parses and validates the textual format. Rejects: duplicate labels or
// addresses, overlapping address ranges, dangling branch/call targets,
// unreachable blocks, blocks after a terminator, missing terminators, a
// missing Exit block, and Call blocks without a continuation block.
ProgramCFG load_program(const std::string& text);

ProgramCFG load_program_file(const std::string& path);

const char* to_string(InstrKind k);
const char* to_string(CmpOp op);

}  // namespace cfa
