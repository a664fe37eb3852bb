// SPDX-License-Identifier: MIT

#include "cfa/attack.hpp"

#include <sstream>
#include <stdexcept>

namespace cfa {

namespace {

[[noreturn]] void bad_spec(const std::string& text, const std::string& why) {
  throw std::invalid_argument("bad attack spec '" + text + "': " + why);
}

int resolve_block(const std::string& name, const ProgramCFG& cfg, const std::string& text) {
  auto dot = name.find('.');
  if (dot != std::string::npos) {
    int fn = cfg.function_by_name(name.substr(0, dot));
    if (fn < 0) bad_spec(text, "unknown function '" + name.substr(0, dot) + "'");
    int b = cfg.block_by_label(fn, name.substr(dot + 1));
    if (b < 0) bad_spec(text, "unknown block '" + name + "'");
    return b;
  }
  int found = -1;
  for (const auto& b : cfg.blocks)
    if (b.label == name) {
      if (found >= 0) bad_spec(text, "label '" + name + "' is ambiguous; qualify as func.label");
      found = b.index;
    }
  if (found < 0) bad_spec(text, "unknown block label '" + name + "'");
  return found;
}

}  // namespace

AttackSpec AttackSpec::parse(const std::string& text, const ProgramCFG& cfg) {
  AttackSpec spec;
  auto lp = text.find('(');
  std::string kind = lp == std::string::npos ? text : text.substr(0, lp);
  std::vector<std::string> args;
  if (lp != std::string::npos) {
    auto rp = text.rfind(')');
    if (rp == std::string::npos || rp < lp) bad_spec(text, "unbalanced parentheses");
    std::stringstream ss(text.substr(lp + 1, rp - lp - 1));
    std::string piece;
    while (std::getline(ss, piece, ',')) args.push_back(piece);
  }
  auto want_args = [&](std::size_t n) {
    if (args.size() != n)
      bad_spec(text, "expected " + std::to_string(n) + " argument(s)");
  };

  if (kind == "illegal-indirect") {
    want_args(1);
    spec.kind = Kind::IllegalIndirect;
    spec.addr = static_cast<std::uint32_t>(std::stoul(args[0], nullptr, 0));
  } else if (kind == "loop-count-delta") {
    want_args(2);
    spec.kind = Kind::LoopCountDelta;
    spec.block = resolve_block(args[0], cfg, text);
    spec.delta = std::stoll(args[1]);
    if (spec.delta == 0) bad_spec(text, "delta must be non-zero");
    if (cfg.blocks[spec.block].terminator().kind != InstrKind::CondBranch)
      bad_spec(text, "'" + args[0] + "' does not end in a conditional branch");
  } else if (kind == "branch-swap") {
    want_args(1);
    spec.kind = Kind::BranchSwap;
    spec.block = resolve_block(args[0], cfg, text);
    if (cfg.blocks[spec.block].terminator().kind != InstrKind::CondBranch)
      bad_spec(text, "'" + args[0] + "' does not end in a conditional branch");
  } else if (kind == "return-corrupt") {
    want_args(1);
    spec.kind = Kind::ReturnCorrupt;
    spec.depth = std::stoi(args[0]);
    if (spec.depth < 1) bad_spec(text, "depth must be >= 1");
  } else if (kind == "signature-flip") {
    want_args(1);
    spec.kind = Kind::SignatureFlip;
    spec.bit = std::stoi(args[0]);
    if (spec.bit < 0 || spec.bit >= 256) bad_spec(text, "bit must be in 0..255");
  } else if (kind == "replay") {
    if (!args.empty()) bad_spec(text, "replay takes no arguments");
    spec.kind = Kind::Replay;
  } else {
    bad_spec(text, "unknown attack kind '" + kind + "'");
  }
  return spec;
}

std::string AttackSpec::describe() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::IllegalIndirect:
      os << "illegal-indirect(0x" << std::hex << addr << ")";
      break;
    case Kind::LoopCountDelta:
      os << "loop-count-delta(block " << block << ", " << (delta > 0 ? "+" : "") << delta << ")";
      break;
    case Kind::BranchSwap:
      os << "branch-swap(block " << block << ")";
      break;
    case Kind::ReturnCorrupt:
      os << "return-corrupt(depth " << depth << ")";
      break;
    case Kind::SignatureFlip:
      os << "signature-flip(bit " << bit << ")";
      break;
    case Kind::Replay:
      os << "replay";
      break;
  }
  return os.str();
}

}  // namespace cfa
