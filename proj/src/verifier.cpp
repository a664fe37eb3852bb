// SPDX-License-Identifier: MIT

#include "cfa/verifier.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <tuple>

#include "cfa/hmac.hpp"
#include "json.hpp"

namespace cfa {

namespace {

struct SearchExhausted {};

// Count-guided backtracking search. Entry effects (count decrement + forward
// fold) are applied by transfer_to() before recursing into a block, so a
// frame always sees its own entry already accounted for.
class Searcher {
 public:
  Searcher(const ProgramCFG& cfg, const IndirectTargetList& itl,
           const InstrumentationPlan& plan, const KeyedMac& mac,
           const AttestationReport& report, std::uint64_t budget)
      : cfg_(cfg), itl_(itl), mac_(mac), report_(report), budget_(budget) {
    direct_.assign(cfg.blocks.size(), 0);
    for (int b : plan.direct_report_blocks) direct_[b] = 1;
    residual_.assign(cfg.blocks.size(), 0);
  }

  // False when the report names an address that is not a block start.
  bool load_counts() {
    for (const auto& [addr, count] : report_.trace.counts) {
      int idx = cfg_.block_index_at(addr);
      if (idx < 0) return false;
      residual_[idx] = count;
    }
    return true;
  }

  bool run() { return transfer_to(cfg_.entry_block, 0, 0); }

  std::uint64_t nodes() const { return nodes_; }
  bool saw_zero_residual_exit() const { return zr_count_ > 0; }
  const std::vector<int>& witness() const { return witness_; }
  std::uint32_t found_m_f() const { return found_m_f_; }
  std::uint32_t found_m_b() const { return found_m_b_; }

 private:
  // Applies the entry effects of `block`, walks from there, undoes on failure.
  bool transfer_to(int block, std::uint32_t m_f, std::uint32_t m_b) {
    if (direct_[block]) {
      if (residual_[block] == 0) return false;  // entry not covered by the trace
      residual_[block] -= 1;
      m_f = mac_.fold32(m_f, cfg_.blocks[block].start);
    }
    path_.push_back(block);
    if (walk(block, m_f, m_b)) return true;
    path_.pop_back();
    if (direct_[block]) residual_[block] += 1;
    return false;
  }

  bool walk(int block, std::uint32_t m_f, std::uint32_t m_b) {
    if (++nodes_ > budget_) throw SearchExhausted{};

    const Instruction& term = cfg_.blocks[block].terminator();
    switch (term.kind) {
      case InstrKind::Exit: {
        bool zero = std::all_of(residual_.begin(), residual_.end(),
                                [](std::uint64_t c) { return c == 0; });
        if (!zero) return false;
        ++zr_count_;
        if (m_f != report_.m_f || m_b != report_.m_b) return false;
        witness_ = path_;
        found_m_f_ = m_f;
        found_m_b_ = m_b;
        return true;
      }

      case InstrKind::CondBranch: {
        MemoKey key{block, residual_, stack_};
        if (infeasible_.count(key)) return false;
        const std::uint64_t zr_before = zr_count_;
        for (int succ : cfg_.successors(block))
          if (transfer_to(succ, m_f, m_b)) return true;
        // The whole subtree failed. If it never even reached an exit with the
        // counts consumed, the failure is count-structural and independent of
        // the measurement chains, so the state can be pruned when revisited
        // with a different chain value. Measurement-dependent failures must
        // not be cached.
        if (zr_count_ == zr_before) infeasible_.insert(std::move(key));
        return false;
      }

      case InstrKind::DirectJump:
        return transfer_to(cfg_.successors(block)[0], m_f, m_b);

      case InstrKind::Call: {
        int callee =
            cfg_.functions[cfg_.function_by_name(std::get<CallOp>(term.op).callee)].entry;
        stack_.push_back(cfg_.blocks[cfg_.continuation(block)].start);
        if (transfer_to(callee, m_f, m_b)) return true;
        stack_.pop_back();
        return false;
      }

      case InstrKind::IndirectCall:
      case InstrKind::IndirectJump: {
        // The illegal list is empty (screened before the search), so every
        // indirect transfer went to a listed target; try those with residual
        // count room. The destination is folded at the site, and entering a
        // block that is additionally a direct report site consumes a second
        // count — mirroring the engine exactly.
        for (const auto& [addr, prov] : itl_.targets) {
          (void)prov;
          int dest = cfg_.block_index_at(addr);
          if (dest < 0 || residual_[dest] == 0) continue;
          residual_[dest] -= 1;
          std::uint32_t f2 = mac_.fold32(m_f, addr);
          if (term.kind == InstrKind::IndirectCall)
            stack_.push_back(cfg_.blocks[cfg_.continuation(block)].start);
          if (transfer_to(dest, f2, m_b)) return true;
          if (term.kind == InstrKind::IndirectCall) stack_.pop_back();
          residual_[dest] += 1;
        }
        return false;
      }

      case InstrKind::Return: {
        if (stack_.empty()) return false;
        std::uint32_t ret = stack_.back();
        stack_.pop_back();
        if (transfer_to(cfg_.block_index_at(ret), m_f, mac_.fold32(m_b, ret))) return true;
        stack_.push_back(ret);
        return false;
      }

      default:
        return false;
    }
  }

  // Memo key for count-infeasible states: position + residuals + call stack.
  // The measurement accumulators are deliberately absent; see the comment at
  // the insertion site for why that is sound.
  using MemoKey = std::tuple<int, std::vector<std::uint64_t>, std::vector<std::uint32_t>>;

  const ProgramCFG& cfg_;
  const IndirectTargetList& itl_;
  const KeyedMac& mac_;
  const AttestationReport& report_;
  std::uint64_t budget_;
  std::uint64_t nodes_ = 0;
  std::vector<char> direct_;
  std::vector<std::uint64_t> residual_;
  std::vector<std::uint32_t> stack_;
  std::vector<int> path_;
  std::vector<int> witness_;
  std::uint32_t found_m_f_ = 0, found_m_b_ = 0;
  std::uint64_t zr_count_ = 0;  // zero-residual exits reached so far
  std::set<MemoKey> infeasible_;
};

}  // namespace

Verdict verify(const AttestationReport& report, const VerifierContext& ctx) {
  Verdict v;

  // Authentication first: an unsigned or wrongly signed report tells us
  // nothing; a validly signed report under the wrong nonce is a replay.
  Digest expect = hmac_sha256(ctx.keys.attestation.bytes, report.body_bytes());
  if (expect != report.signature) {
    v.reason = "bad-signature";
    return v;
  }
  if (report.nonce != ctx.expected_nonce) {
    v.reason = "stale-nonce";
    return v;
  }
  if (!report.trace.illegal.empty()) {
    v.reason = "illegal-targets";
    return v;
  }

  if (ctx.inputs) {
    // Deterministic replay under the declared inputs; catches tampers whose
    // reports are self-consistent but belong to a different input profile.
    ExecResult expected =
        execute(*ctx.cfg, *ctx.plan, *ctx.itl, ctx.keys, report.nonce, *ctx.inputs);
    v.m_f = expected.report.m_f;
    v.m_b = expected.report.m_b;
    if (expected.report.trace.counts != report.trace.counts ||
        !expected.report.trace.illegal.empty()) {
      v.reason = "trace-mismatch";
      return v;
    }
    if (expected.report.m_f != report.m_f || expected.report.m_b != report.m_b) {
      v.reason = "measurement-mismatch";
      return v;
    }
    v.accepted = true;
    v.reason = "ok";
    return v;
  }

  KeyedMac mac(ctx.keys.measurement.bytes);
  Searcher s(*ctx.cfg, *ctx.itl, *ctx.plan, mac, report, ctx.node_budget);
  if (!s.load_counts()) {
    v.reason = "trace-mismatch";  // a count key is not a block start address
    return v;
  }
  try {
    bool found = s.run();
    v.nodes_expanded = s.nodes();
    if (found) {
      v.accepted = true;
      v.reason = "ok";
      v.m_f = s.found_m_f();
      v.m_b = s.found_m_b();
      v.witness = s.witness();
    } else {
      v.reason = s.saw_zero_residual_exit() ? "measurement-mismatch" : "trace-mismatch";
    }
  } catch (const SearchExhausted&) {
    v.nodes_expanded = s.nodes();
    v.reason = "search-exhausted";
  }
  return v;
}

bool enumerate_paths_oracle(const VerifierContext& ctx, const AttestationReport& report) {
  const ProgramCFG& cfg = *ctx.cfg;
  const InstrumentationPlan& plan = *ctx.plan;
  KeyedMac mac(ctx.keys.measurement.bytes);

  if (!report.trace.illegal.empty()) return false;

  std::vector<char> direct(cfg.blocks.size(), 0);
  for (int b : plan.direct_report_blocks) direct[b] = 1;

  std::vector<std::uint64_t> want(cfg.blocks.size(), 0);
  std::uint64_t want_total = 0;
  for (const auto& [addr, count] : report.trace.counts) {
    int idx = cfg.block_index_at(addr);
    if (idx < 0) return false;
    want[idx] = count;
    want_total += count;
  }
  // Free moves between count consumptions are bounded by the block count, so
  // any matching path fits within this many entries.
  const std::uint64_t max_len = (want_total + 2) * (cfg.blocks.size() + 2);
  std::uint64_t steps = 0;

  std::vector<std::uint64_t> used(cfg.blocks.size(), 0);
  std::vector<std::uint32_t> stack;
  bool found = false;

  // Plain exhaustive walk; unlike the verifier there is no memoization, no
  // ordering heuristics, and no shared helper to have a common bug with.
  std::function<void(int, std::uint32_t, std::uint32_t, std::uint64_t)> go =
      [&](int block, std::uint32_t m_f, std::uint32_t m_b, std::uint64_t len) {
        if (found) return;
        if (++steps > 50'000'000ull || len > max_len) throw OracleBudgetError{};

        if (direct[block]) {
          if (used[block] == want[block]) return;  // would exceed the report
          used[block] += 1;
          m_f = mac.fold32(m_f, cfg.blocks[block].start);
        }

        const Instruction& term = cfg.blocks[block].terminator();
        switch (term.kind) {
          case InstrKind::Exit:
            if (used == want && m_f == report.m_f && m_b == report.m_b) found = true;
            break;
          case InstrKind::CondBranch:
            for (int succ : cfg.successors(block)) go(succ, m_f, m_b, len + 1);
            break;
          case InstrKind::DirectJump:
            go(cfg.successors(block)[0], m_f, m_b, len + 1);
            break;
          case InstrKind::Call: {
            stack.push_back(cfg.blocks[cfg.continuation(block)].start);
            int callee =
                cfg.functions[cfg.function_by_name(std::get<CallOp>(term.op).callee)].entry;
            go(callee, m_f, m_b, len + 1);
            stack.pop_back();
            break;
          }
          case InstrKind::IndirectCall:
          case InstrKind::IndirectJump: {
            for (const auto& [addr, prov] : ctx.itl->targets) {
              (void)prov;
              int dest = cfg.block_index_at(addr);
              if (dest < 0) continue;
              if (used[dest] == want[dest]) continue;
              used[dest] += 1;
              std::uint32_t f2 = mac.fold32(m_f, addr);
              if (term.kind == InstrKind::IndirectCall)
                stack.push_back(cfg.blocks[cfg.continuation(block)].start);
              go(dest, f2, m_b, len + 1);
              if (term.kind == InstrKind::IndirectCall) stack.pop_back();
              used[dest] -= 1;
            }
            break;
          }
          case InstrKind::Return: {
            if (stack.empty()) break;
            std::uint32_t ret = stack.back();
            stack.pop_back();
            go(cfg.block_index_at(ret), m_f, mac.fold32(m_b, ret), len + 1);
            stack.push_back(ret);
            break;
          }
          default:
            break;
        }

        if (direct[block]) used[block] -= 1;
      };

  go(cfg.entry_block, 0, 0, 0);
  return found;
}

std::string Verdict::to_json() const {
  nlohmann::json j;
  j["accepted"] = accepted;
  j["reason"] = reason;
  j["m_f"] = m_f;
  j["m_b"] = m_b;
  j["nodes_expanded"] = nodes_expanded;
  if (witness) j["witness"] = *witness;
  return j.dump();
}

}  // namespace cfa
