// SPDX-License-Identifier: MIT
//
// Verdict tests: the rejection-reason precedence, both verification modes,
// witness validity, budget behaviour, and agreement with the exhaustive
// path-enumeration oracle.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cfa/analysis.hpp"
#include "cfa/attack.hpp"
#include "cfa/instrument.hpp"
#include "cfa/ir.hpp"
#include "cfa/keys.hpp"
#include "cfa/prover.hpp"
#include "cfa/verifier.hpp"
#include "doctest.h"

using namespace cfa;

namespace {

struct Fixture {
  ProgramCFG cfg;
  InstrumentationPlan plan;
  IndirectTargetList itl;
  KeyPair keys;
  Nonce nonce{};

  explicit Fixture(const std::string& text, std::uint64_t key_seed = 11,
                   const std::vector<std::map<int, std::uint32_t>>& training = {}) {
    cfg = load_program(text);
    plan = plan_instrumentation(cfg, compute_dominators(cfg));
    itl = build_itl(cfg, training);
    keys = generate_keys(key_seed);
    for (int i = 0; i < 16; ++i) nonce[i] = static_cast<std::uint8_t>(0x30 + i);
  }

  ExecResult run(const std::map<int, std::uint32_t>& inputs,
                 const AttackSpec* attack = nullptr) const {
    ExecOptions opts;
    opts.attack = attack;
    return execute(cfg, plan, itl, keys, nonce, inputs, opts);
  }

  VerifierContext ctx(std::optional<std::map<int, std::uint32_t>> inputs =
                          std::nullopt) const {
    VerifierContext c;
    c.cfg = &cfg;
    c.plan = &plan;
    c.itl = &itl;
    c.keys = keys;
    c.expected_nonce = nonce;
    c.inputs = std::move(inputs);
    return c;
  }

  // Re-signs a mutated report with the real key, so only the post-signature
  // checks can reject it.
  AttestationReport resign(const AttestationReport& r) const {
    return sign_report(r.trace, r.m_f, r.m_b, r.nonce, keys.attestation);
  }
};

const char* kDiamond = R"(
func main {
block sel:
  cbr low if r1 < 3
block high:
  compute r2 = r2 + 1
  jmp join
block low:
  compute r2 = r2 + 2
block join:
  compute r3 = r2
block done:
  exit
}
)";

const char* kCountedLoop = R"(
func main {
block init:
  set r1 = 0
block cond:
  cbr done if r1 >= r2
block body:
  compute r3 = r3 + 1
  compute r1 = r1 + 1
  jmp cond
block done:
  exit
}
)";

const char* kCallRet = R"(
func main {
block m0:
  call util
block m1:
  cbr m3 if r1 >= 2
block m2:
  compute
block m3:
  exit
}

func util {
block u0:
  cbr u2 if r1 >= 1
block u1:
  compute
block u2:
  ret
}
)";

// Folds the instrumented entries of a witness and tallies its counts; a valid
// witness must reproduce the report exactly. Entries come from two kinds of
// step: walking onto a direct report block, and arriving through an indirect
// site (which records the destination even when it is not a report block).
void check_witness(const Fixture& f, const Verdict& v, const AttestationReport& r) {
  REQUIRE(v.witness.has_value());
  const auto& w = *v.witness;
  REQUIRE(!w.empty());
  CHECK(w.front() == f.cfg.entry_block);
  CHECK(f.cfg.blocks[w.back()].terminator().kind == InstrKind::Exit);

  std::map<std::uint32_t, std::uint64_t> counts;
  std::uint32_t m_f = 0;
  auto fold_entry = [&](int b) {
    std::uint32_t addr = f.cfg.blocks[b].start;
    counts[addr] += 1;
    m_f = measure_step(m_f, addr, f.keys.measurement);
  };
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (i > 0) {
      auto prev_kind = f.cfg.blocks[w[i - 1]].terminator().kind;
      if (prev_kind == InstrKind::IndirectCall || prev_kind == InstrKind::IndirectJump)
        fold_entry(w[i]);
    }
    if (f.plan.reports_direct(w[i])) fold_entry(w[i]);
  }
  CHECK(counts == r.trace.counts);
  CHECK(m_f == r.m_f);
}

}  // namespace

TEST_CASE("clean run is accepted by search with a count-and-chain-exact witness") {
  Fixture f(kDiamond);
  ExecResult run = f.run({{1, 5}});
  REQUIRE(!run.abort_reason.has_value());

  Verdict v = verify(run.report, f.ctx());
  CHECK(v.accepted);
  CHECK(v.reason == "ok");
  CHECK(v.m_f == run.report.m_f);
  CHECK(v.m_b == run.report.m_b);
  check_witness(f, v, run.report);
}

TEST_CASE("replay mode accepts a clean run without search") {
  Fixture f(kCountedLoop);
  ExecResult run = f.run({{2, 5}});
  Verdict v = verify(run.report, f.ctx(std::map<int, std::uint32_t>{{2, 5}}));
  CHECK(v.accepted);
  CHECK(v.reason == "ok");
  CHECK(v.nodes_expanded == 0);

  SUBCASE("search agrees on the same report") {
    Verdict s = verify(run.report, f.ctx());
    CHECK(s.accepted);
    CHECK(s.nodes_expanded > 0);
  }
}

TEST_CASE("rejection precedence: signature, then nonce, then illegal targets") {
  Fixture f(kCountedLoop);
  ExecResult run = f.run({{2, 3}});

  SUBCASE("a flipped signature bit wins over everything") {
    AttestationReport r = run.report;
    r.signature[2] ^= 0x10;
    r.trace.illegal.push_back(0xdeadbee0u);  // would also be illegal-targets
    Verdict v = verify(r, f.ctx());
    CHECK(!v.accepted);
    CHECK(v.reason == "bad-signature");
  }
  SUBCASE("a validly signed report under the wrong nonce is stale") {
    VerifierContext c = f.ctx();
    c.expected_nonce[0] ^= 1;
    Verdict v = verify(run.report, c);
    CHECK(!v.accepted);
    CHECK(v.reason == "stale-nonce");
  }
  SUBCASE("a properly bound report with illegal targets is screened out") {
    AttestationReport r = run.report;
    r.trace.illegal.push_back(0xdeadbee0u);
    Verdict v = verify(f.resign(r), f.ctx());
    CHECK(!v.accepted);
    CHECK(v.reason == "illegal-targets");
    // The screen fires before any path reasoning: same with replay inputs.
    Verdict vr = verify(f.resign(r), f.ctx(std::map<int, std::uint32_t>{{2, 3}}));
    CHECK(vr.reason == "illegal-targets");
  }
}

TEST_CASE("search rejects structurally impossible counts as trace-mismatch") {
  Fixture f(kDiamond);
  ExecResult run = f.run({{1, 5}});

  // One execution walks exactly one arm; claiming both leaves a residual.
  AttestationReport r = run.report;
  int low = f.cfg.block_by_label(0, "low");
  r.trace.counts[f.cfg.blocks[low].start] = 1;
  Verdict v = verify(f.resign(r), f.ctx());
  CHECK(!v.accepted);
  CHECK(v.reason == "trace-mismatch");

  SUBCASE("counts keyed by a non-block address are trace-mismatch too") {
    AttestationReport r2 = run.report;
    r2.trace.counts[0x12345678u] = 1;
    Verdict v2 = verify(f.resign(r2), f.ctx());
    CHECK(!v2.accepted);
    CHECK(v2.reason == "trace-mismatch");
  }
}

TEST_CASE("search rejects a consumable trace with a wrong chain as measurement-mismatch") {
  Fixture f(kCountedLoop);
  ExecResult run = f.run({{2, 4}});
  AttestationReport r = run.report;
  r.m_f ^= 0xdeadbeefu;
  Verdict v = verify(f.resign(r), f.ctx());
  CHECK(!v.accepted);
  CHECK(v.reason == "measurement-mismatch");

  SUBCASE("same for the backward chain") {
    Fixture g(kCallRet);
    ExecResult gr = g.run({{1, 5}});
    AttestationReport r2 = gr.report;
    r2.m_b ^= 1u;
    Verdict v2 = verify(g.resign(r2), g.ctx());
    CHECK(!v2.accepted);
    CHECK(v2.reason == "measurement-mismatch");
  }
}

TEST_CASE("the node budget turns an expensive search into search-exhausted") {
  Fixture f(kCountedLoop);
  ExecResult run = f.run({{2, 50}});
  VerifierContext c = f.ctx();
  c.node_budget = 3;
  Verdict v = verify(run.report, c);
  CHECK(!v.accepted);
  CHECK(v.reason == "search-exhausted");
  CHECK(v.nodes_expanded >= 3);
}

TEST_CASE("replay inputs catch tampers that search provably cannot") {
  Fixture f(kDiamond);
  AttackSpec swap = AttackSpec::parse("branch-swap(sel)", f.cfg);
  ExecResult attacked = f.run({{1, 5}}, &swap);
  REQUIRE(!attacked.abort_reason.has_value());

  // The tampered run honestly attests a walk of the wrong arm: a path that is
  // perfectly legitimate for *some* input, so count-guided search accepts it.
  Verdict search = verify(attacked.report, f.ctx());
  CHECK(search.accepted);

  // Replay under the real inputs sees the wrong counts.
  Verdict replay = verify(attacked.report, f.ctx(std::map<int, std::uint32_t>{{1, 5}}));
  CHECK(!replay.accepted);
  CHECK(replay.reason == "trace-mismatch");
}

TEST_CASE("replay flags biased loop bounds and poisoned return chains differently") {
  Fixture f(kCountedLoop);
  AttackSpec delta = AttackSpec::parse("loop-count-delta(cond,+7)", f.cfg);
  ExecResult biased = f.run({{2, 5}}, &delta);
  Verdict v = verify(biased.report, f.ctx(std::map<int, std::uint32_t>{{2, 5}}));
  CHECK(!v.accepted);
  CHECK(v.reason == "trace-mismatch");

  Fixture g(kCallRet);
  AttackSpec corrupt = AttackSpec::parse("return-corrupt(1)", g.cfg);
  ExecResult poisoned = g.run({{1, 0}}, &corrupt);
  REQUIRE(!poisoned.abort_reason.has_value());
  // Counts are untouched (the walk is the honest one), so the replay reaches
  // the chain comparison and fails there.
  Verdict vg = verify(poisoned.report, g.ctx(std::map<int, std::uint32_t>{{1, 0}}));
  CHECK(!vg.accepted);
  CHECK(vg.reason == "measurement-mismatch");
}

TEST_CASE("verifier and oracle agree on accepts and rejects") {
  const std::map<int, std::uint32_t> inputs{{1, 1}, {2, 3}};
  for (const char* text : {kDiamond, kCountedLoop, kCallRet}) {
    Fixture f(text);
    ExecResult run = f.run(inputs);
    REQUIRE(!run.abort_reason.has_value());

    CHECK(verify(run.report, f.ctx()).accepted);
    CHECK(enumerate_paths_oracle(f.ctx(), run.report));

    // Chain tamper: both must reject.
    AttestationReport bad = run.report;
    bad.m_f ^= 0x5a5a5a5au;
    AttestationReport signed_bad = f.resign(bad);
    CHECK(!verify(signed_bad, f.ctx()).accepted);
    CHECK(!enumerate_paths_oracle(f.ctx(), signed_bad));

    // Count tamper: both must reject.
    if (!run.report.trace.counts.empty()) {
      AttestationReport bumped = run.report;
      bumped.trace.counts.begin()->second += 1;
      bumped.m_b ^= 0;  // body changes; re-sign below
      AttestationReport signed_bumped = f.resign(bumped);
      CHECK(verify(signed_bumped, f.ctx()).accepted ==
            enumerate_paths_oracle(f.ctx(), signed_bumped));
    }
  }
}

TEST_CASE("oracle and search agree across the indirect-transfer program") {
  const char* text = R"(
func main {
block e:
  set r1 = @ha
  compute r2 = r1
block d:
  set r4 = @helper
block c:
  icall r4
block go:
  ijmp r2
block ha:
  compute r3 = r3 + 1
block z:
  exit
}

func helper {
block h0:
  compute r5 = r5 + 1
block h1:
  ret
}
)";
  Fixture f(text, 13, {{}});  // one training run fills in the copied target
  ExecResult run = f.run({});
  REQUIRE(!run.abort_reason.has_value());
  REQUIRE(run.report.trace.illegal.empty());

  Verdict v = verify(run.report, f.ctx());
  CHECK(v.accepted);
  CHECK(enumerate_paths_oracle(f.ctx(), run.report));
  check_witness(f, v, run.report);
}

TEST_CASE("verdict JSON carries the reason and only a witness when accepted") {
  Fixture f(kDiamond);
  ExecResult run = f.run({{1, 0}});
  Verdict ok = verify(run.report, f.ctx());
  CHECK(ok.to_json().find("\"accepted\":true") != std::string::npos);
  CHECK(ok.to_json().find("witness") != std::string::npos);

  AttestationReport r = run.report;
  r.m_f ^= 1u;
  Verdict bad = verify(f.resign(r), f.ctx());
  CHECK(bad.to_json().find("\"accepted\":false") != std::string::npos);
  CHECK(bad.to_json().find("witness") == std::string::npos);
}
