// SPDX-License-Identifier: MIT

#include "cfa/generator.hpp"

#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace cfa {

namespace {

// Segment shapes, with their block footprint. Every segment continues to the
// label that follows it, so the chain stays reachable and acyclic apart from
// the counted loops.
enum class Seg { Plain, Diamond, SelfLoop, TopLoop, CallSeg, IndirectJump, IndirectSwitch };

int seg_blocks(Seg s) {
  switch (s) {
    case Seg::Plain: return 1;
    case Seg::Diamond: return 3;
    case Seg::SelfLoop: return 1;
    case Seg::TopLoop: return 2;
    case Seg::CallSeg: return 1;
    case Seg::IndirectJump: return 1;
    case Seg::IndirectSwitch: return 6;
  }
  return 1;
}

struct SegPlan {
  Seg kind;
  int counter_reg = 0;   // loops
  std::uint32_t bound = 1;
  int sel_reg = 0;       // diamonds / switches
  std::uint32_t sel_imm = 0;
  int scratch_reg = 4;
  std::uint32_t imm = 1;
  int callee = -1;
  int addr_reg = 7;
};

struct FuncPlan {
  std::string name;
  std::string prefix;
  std::vector<SegPlan> segs;
  std::vector<std::pair<int, std::uint32_t>> entry_sets;  // (reg, value)
  bool is_main = false;
};

class Emitter {
 public:
  explicit Emitter(std::ostringstream& os) : os_(os) {}

  void render(const FuncPlan& f) {
    os_ << "func " << f.name << " {\n";
    os_ << "block " << f.prefix << "e:\n";
    for (auto [reg, val] : f.entry_sets) os_ << "  set r" << reg << " = " << val << "\n";
    if (f.entry_sets.empty()) os_ << "  compute\n";
    int total = 0;
    for (const auto& s : f.segs) total += seg_blocks(s.kind);
    int next = 0;
    for (const auto& s : f.segs) render_seg(f, s, next, total);
    os_ << "block " << f.prefix << "z:\n  " << (f.is_main ? "exit" : "ret") << "\n";
    os_ << "}\n\n";
  }

 private:
  std::string lab(const FuncPlan& f, int n) const { return f.prefix + std::to_string(n); }

  void render_seg(const FuncPlan& f, const SegPlan& s, int& next, int total) {
    const int base = next;
    next += seg_blocks(s.kind);
    // Continuation: first block of the following segment, or the exit block.
    const std::string cont = next == total ? f.prefix + "z" : lab(f, next);
    switch (s.kind) {
      case Seg::Plain:
        os_ << "block " << lab(f, base) << ":\n  compute r" << s.scratch_reg << " = r"
            << s.scratch_reg << " + " << s.imm << "\n";
        break;
      case Seg::Diamond: {
        const std::string a = lab(f, base + 2), b = lab(f, base + 1);
        os_ << "block " << lab(f, base) << ":\n  cbr " << a << " if r" << s.sel_reg << " < "
            << s.sel_imm << "\n";
        os_ << "block " << b << ":\n  compute r" << s.scratch_reg << " = r" << s.scratch_reg
            << " + " << s.imm << "\n  jmp " << cont << "\n";
        os_ << "block " << a << ":\n  compute r" << s.scratch_reg << " = r" << s.scratch_reg
            << " + " << (s.imm + 1) << "\n";
        break;
      }
      case Seg::SelfLoop: {
        const std::string l = lab(f, base);
        os_ << "block " << l << ":\n  compute r" << s.scratch_reg << " = r" << s.scratch_reg
            << " + " << s.imm << "\n  compute r" << s.counter_reg << " = r" << s.counter_reg
            << " + 1\n  cbr " << l << " if r" << s.counter_reg << " < " << s.bound << "\n";
        break;
      }
      case Seg::TopLoop: {
        const std::string h = lab(f, base), d = lab(f, base + 1);
        os_ << "block " << h << ":\n  cbr " << cont << " if r" << s.counter_reg
            << " >= " << s.bound << "\n";
        os_ << "block " << d << ":\n  compute r" << s.scratch_reg << " = r" << s.scratch_reg
            << " + " << s.imm << "\n  compute r" << s.counter_reg << " = r" << s.counter_reg
            << " + 1\n  jmp " << h << "\n";
        break;
      }
      case Seg::CallSeg:
        os_ << "block " << lab(f, base) << ":\n  call f" << s.callee << "\n";
        break;
      case Seg::IndirectJump:
        os_ << "block " << lab(f, base) << ":\n  set r" << s.addr_reg << " = @" << cont
            << "\n  ijmp r" << s.addr_reg << "\n";
        break;
      case Seg::IndirectSwitch: {
        const std::string sel = lab(f, base), tb_set = lab(f, base + 1),
                          ta_set = lab(f, base + 2), mux = lab(f, base + 3),
                          ta = lab(f, base + 4), tb = lab(f, base + 5);
        os_ << "block " << sel << ":\n  cbr " << ta_set << " if r" << s.sel_reg << " < "
            << s.sel_imm << "\n";
        os_ << "block " << tb_set << ":\n  set r" << s.addr_reg << " = @" << tb << "\n  jmp "
            << mux << "\n";
        os_ << "block " << ta_set << ":\n  set r" << s.addr_reg << " = @" << ta << "\n";
        os_ << "block " << mux << ":\n  ijmp r" << s.addr_reg << "\n";
        os_ << "block " << ta << ":\n  compute r" << s.scratch_reg << " = r" << s.scratch_reg
            << " + 1\n  jmp " << cont << "\n";
        os_ << "block " << tb << ":\n  compute r" << s.scratch_reg << " = r" << s.scratch_reg
            << " + 2\n";
        break;
      }
    }
  }

  std::ostringstream& os_;
};

}  // namespace

std::string generate_program(const GeneratorConfig& cfg) {
  if (cfg.max_blocks < 4) throw std::invalid_argument("max_blocks must be at least 4");
  std::mt19937_64 rng(cfg.seed);
  auto pick = [&](std::uint32_t n) { return static_cast<std::uint32_t>(rng() % n); };

  int nf = 1 + static_cast<int>(pick(static_cast<std::uint32_t>(cfg.max_functions)));
  if (cfg.require_call && nf < 2) nf = 2;
  // Entry + exit block per function are fixed overhead.
  int budget = cfg.max_blocks - 2 * nf;
  while (budget < 1 && nf > 1) {
    --nf;
    budget = cfg.max_blocks - 2 * nf;
  }
  if (cfg.require_call && nf < 2)
    throw std::invalid_argument("block budget too small for a call");

  std::vector<FuncPlan> funcs(static_cast<std::size_t>(nf));
  const char* prefixes[] = {"m", "a", "b"};
  for (int i = 0; i < nf; ++i) {
    funcs[static_cast<std::size_t>(i)].name = i == 0 ? "main" : "f" + std::to_string(i);
    funcs[static_cast<std::size_t>(i)].prefix = prefixes[i % 3];
    funcs[static_cast<std::size_t>(i)].is_main = i == 0;
  }

  int next_counter = 1;  // r1..r3 loop counters, r4..r6 scratch, r7..r9 misc
  auto add_seg = [&](FuncPlan& f, SegPlan s) {
    if (s.kind == Seg::SelfLoop || s.kind == Seg::TopLoop) {
      s.counter_reg = next_counter <= 3 ? next_counter++ : 1;
      f.entry_sets.emplace_back(s.counter_reg, 0);
    }
    budget -= seg_blocks(s.kind);
    f.segs.push_back(s);
  };
  auto scratch = [&] { return 4 + static_cast<int>(pick(3)); };

  // Mandatory features first, on main's chain so they always execute.
  if (cfg.require_loop) {
    SegPlan s{pick(2) == 0 ? Seg::SelfLoop : Seg::TopLoop};
    if (budget < seg_blocks(s.kind)) s.kind = Seg::SelfLoop;
    s.bound = 2 + pick(4);
    s.scratch_reg = scratch();
    s.imm = 1 + pick(5);
    add_seg(funcs[0], s);
  }
  if (cfg.require_call) {
    SegPlan s{Seg::CallSeg};
    s.callee = 1;
    add_seg(funcs[0], s);
  }
  if (cfg.require_indirect) {
    SegPlan s{budget >= 6 + 1 ? Seg::IndirectSwitch : Seg::IndirectJump};
    s.sel_reg = 8;
    s.sel_imm = pick(10);
    s.addr_reg = 7;
    s.scratch_reg = scratch();
    add_seg(funcs[0], s);
  }

  // Fill the remaining budget with random segments spread over the functions.
  int guard = 64;
  while (budget > 0 && guard-- > 0) {
    FuncPlan& f = funcs[pick(static_cast<std::uint32_t>(nf))];
    SegPlan s{Seg::Plain};
    switch (pick(6)) {
      case 0: s.kind = Seg::Plain; break;
      case 1: s.kind = Seg::Diamond; break;
      case 2: s.kind = Seg::SelfLoop; break;
      case 3: s.kind = Seg::TopLoop; break;
      case 4: s.kind = nf > 1 ? Seg::CallSeg : Seg::Diamond; break;
      case 5: s.kind = Seg::IndirectJump; break;
    }
    if (seg_blocks(s.kind) > budget) s.kind = Seg::Plain;
    if (seg_blocks(s.kind) > budget) break;
    if (s.kind == Seg::CallSeg) {
      // Calls only go to higher-indexed functions, so call depth is bounded.
      int fi = 0;
      while (fi < nf && &funcs[static_cast<std::size_t>(fi)] != &f) ++fi;
      if (fi + 1 >= nf) continue;
      s.callee = fi + 1 + static_cast<int>(pick(static_cast<std::uint32_t>(nf - fi - 1)));
    }
    s.bound = 2 + pick(4);
    s.sel_reg = 8;
    s.sel_imm = pick(10);
    s.scratch_reg = scratch();
    s.imm = 1 + pick(5);
    s.addr_reg = 7;
    add_seg(f, s);
  }

  for (auto& f : funcs) {
    bool uses_sel = false;
    for (const auto& s : f.segs)
      uses_sel |= s.kind == Seg::Diamond || s.kind == Seg::IndirectSwitch;
    if (uses_sel) f.entry_sets.emplace_back(8, pick(10));
  }

  std::ostringstream os;
  os << "# generated: seed=" << cfg.seed << " blocks<=" << cfg.max_blocks << " funcs=" << nf
     << "\n\n";
  Emitter em(os);
  for (const auto& f : funcs) em.render(f);
  return os.str();
}

std::string size_family_program(int u, std::uint64_t k) {
  if (u == 0) {
    return "func main {\n"
           "block e:\n  set r1 = 7\n  compute r2 = r1 + 3\n"
           "block t:\n  compute r2 = r2 + 1\n"
           "block z:\n  exit\n}\n";
  }
  if (u < 3 || u % 2 == 0) throw std::invalid_argument("u must be 0 or odd >= 3");
  if (k < 2) throw std::invalid_argument("k must be >= 2 so both arms run");
  const int diamonds = (u - 1) / 2;
  const std::uint64_t split = k / 2;

  // head doubles as the first diamond's selector; the back edge lands there,
  // making it the one counted loop block. Later selectors are join targets of
  // direct jumps, so they stay uncounted; the trailing exit block rides the
  // fallthrough of the loop branch straight into `exit` and is skipped too.
  std::ostringstream os;
  os << "# size family: u=" << u << " k=" << k << "\n\n";
  os << "func main {\n";
  os << "block e:\n  set r1 = 0\n  set r4 = " << k << "\n  set r5 = " << split << "\n";
  for (int d = 0; d < diamonds; ++d) {
    const std::string sel = d == 0 ? "head" : "sel" + std::to_string(d);
    const std::string a = "arm_a" + std::to_string(d);
    const std::string b = "arm_b" + std::to_string(d);
    const std::string join =
        d + 1 < diamonds ? "sel" + std::to_string(d + 1) : "tail";
    os << "block " << sel << ":\n  cbr " << a << " if r1 < r5\n";
    os << "block " << b << ":\n  compute r6 = r6 + 1\n  jmp " << join << "\n";
    os << "block " << a << ":\n  compute r6 = r6 + 2\n";
  }
  os << "block tail:\n  compute r1 = r1 + 1\n  cbr head if r1 < r4\n";
  os << "block done:\n  exit\n}\n";
  return os.str();
}

}  // namespace cfa
