// SPDX-License-Identifier: MIT
//
// cfa — command-line front door: validate and instrument programs, run
// attested executions (optionally under fault injection), verify reports,
// compare authenticator sizes, and host or exercise the TCP verifier.
//
// Exit codes: 0 success/accepted; 1 rejected verdict; 2 load or lint failure;
// 3 search budget exhausted; 4 execution aborted at the prover.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include "CLI11.hpp"

#include "cfa/analysis.hpp"
#include "cfa/attack.hpp"
#include "cfa/generator.hpp"
#include "cfa/instrument.hpp"
#include "cfa/ir.hpp"
#include "cfa/keys.hpp"
#include "cfa/protocol.hpp"
#include "cfa/prover.hpp"
#include "cfa/schemes.hpp"
#include "cfa/verifier.hpp"

namespace {

constexpr int kExitRejected = 1;
constexpr int kExitLoad = 2;
constexpr int kExitExhausted = 3;
constexpr int kExitAborted = 4;

[[noreturn]] void die(const std::string& msg) {
  std::cerr << "cfa: " << msg << "\n";
  std::exit(kExitLoad);
}

cfa::ProgramCFG load_or_die(const std::string& path) {
  try {
    return cfa::load_program_file(path);
  } catch (const std::exception& e) {
    die(std::string(e.what()));
  }
}

std::map<int, std::uint32_t> parse_inputs(const std::vector<std::string>& raw) {
  std::map<int, std::uint32_t> inputs;
  for (const auto& s : raw) {
    auto eq = s.find('=');
    if (eq == std::string::npos || s.size() < 4 || s[0] != 'r')
      die("bad --input '" + s + "', expected rK=V");
    try {
      int reg = std::stoi(s.substr(1, eq - 1));
      unsigned long long val = std::stoull(s.substr(eq + 1), nullptr, 0);
      if (reg < 0 || reg > 15 || val > 0xffffffffull) throw std::out_of_range("range");
      inputs[reg] = static_cast<std::uint32_t>(val);
    } catch (const std::exception&) {
      die("bad --input '" + s + "', expected rK=V");
    }
  }
  return inputs;
}

cfa::Nonce parse_nonce(const std::string& hex_str) {
  if (hex_str.size() != 32) die("--nonce wants 32 hex digits");
  cfa::Nonce n{};
  for (int i = 0; i < 16; ++i) {
    auto nib = [&](char c) -> int {
      if (c >= '0' && c <= '9') return c - '0';
      if (c >= 'a' && c <= 'f') return c - 'a' + 10;
      if (c >= 'A' && c <= 'F') return c - 'A' + 10;
      die("--nonce wants hex digits");
    };
    n[i] = static_cast<std::uint8_t>(nib(hex_str[2 * i]) << 4 | nib(hex_str[2 * i + 1]));
  }
  return n;
}

cfa::KeyPair load_keys_or_die(const std::string& path) {
  try {
    return cfa::load_keys(path);
  } catch (const std::exception& e) {
    die(e.what());
  }
}

cfa::IndirectTargetList make_itl(const cfa::ProgramCFG& cfg, bool train,
                                 const std::map<int, std::uint32_t>& inputs) {
  try {
    if (train) return cfa::build_itl(cfg, {inputs});
    return cfa::build_itl(cfg);
  } catch (const cfa::ItlTrainingError& e) {
    die(std::string("ITL training failed: ") + e.what());
  }
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) die("cannot open '" + path + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

int verdict_exit(const cfa::Verdict& v) {
  if (v.accepted) return 0;
  return v.reason == "search-exhausted" ? kExitExhausted : kExitRejected;
}

void flip_signature_bit(std::vector<std::uint8_t>& bytes, int bit) {
  if (bytes.size() < 32) die("report too short to flip");
  std::size_t body = bytes.size() - 32;
  bytes[body + static_cast<std::size_t>(bit) / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
}

struct AttestOutcome {
  cfa::ExecResult result;
  std::vector<std::uint8_t> bytes;
};

AttestOutcome run_attest(const cfa::ProgramCFG& cfg, const cfa::InstrumentationPlan& plan,
                         const cfa::IndirectTargetList& itl, const cfa::KeyPair& keys,
                         const cfa::Nonce& nonce, const std::map<int, std::uint32_t>& inputs,
                         const std::optional<cfa::AttackSpec>& attack, std::uint64_t fuel,
                         int max_illegal) {
  cfa::ExecOptions opts;
  opts.fuel = fuel;
  opts.max_illegal = max_illegal;
  if (attack) opts.attack = &*attack;
  AttestOutcome out{cfa::execute(cfg, plan, itl, keys, nonce, inputs, opts), {}};
  out.bytes = out.result.report.serialize();
  if (attack && attack->kind == cfa::AttackSpec::Kind::SignatureFlip)
    flip_signature_bit(out.bytes, attack->bit);
  return out;
}

std::string attest_summary(const cfa::ExecResult& r, std::size_t bytes) {
  std::ostringstream os;
  os << "{\"aborted\":" << (r.abort_reason ? "\"" + *r.abort_reason + "\"" : "null")
     << ",\"entries\":" << r.report.trace.counts.size()
     << ",\"illegal\":" << r.report.trace.illegal.size() << ",\"m_f\":" << r.report.m_f
     << ",\"m_b\":" << r.report.m_b
     << ",\"accounting_bytes\":" << r.report.trace.payload_accounting_bytes()
     << ",\"report_bytes\":" << bytes << "}";
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"control-flow attestation laboratory"};
  app.require_subcommand(1);

  // keygen ------------------------------------------------------------------
  std::string kg_keys;
  std::optional<std::uint64_t> kg_seed;
  auto* kg = app.add_subcommand("keygen", "write a 48-byte key file (16B k_m, 32B k_a)");
  kg->add_option("--keys", kg_keys, "output key file")->required();
  kg->add_option("--seed", kg_seed, "derive keys deterministically");

  // instrument ---------------------------------------------------------------
  std::string in_prog;
  bool in_allow_dirty = false;
  auto* inst = app.add_subcommand("instrument", "plan instrumentation, build the ITL, lint");
  inst->add_option("program", in_prog, "program file")->required();
  inst->add_flag("--allow-dirty", in_allow_dirty, "emit the plan even with lint findings");

  // attest -------------------------------------------------------------------
  std::string at_prog, at_keys, at_nonce_hex(32, '0'), at_out = "report.bin", at_attack;
  std::vector<std::string> at_inputs;
  std::uint64_t at_fuel = 100'000'000;
  int at_max_illegal = 16;
  bool at_train = false;
  auto* at = app.add_subcommand("attest", "execute and sign an attestation report");
  at->add_option("program", at_prog)->required();
  at->add_option("--keys", at_keys)->required();
  at->add_option("--nonce", at_nonce_hex, "challenge nonce, 32 hex digits (default zero)");
  at->add_option("--out", at_out, "report output file");
  at->add_option("--input", at_inputs, "register input rK=V (repeatable)");
  at->add_option("--attack", at_attack, "fault spec, e.g. loop-count-delta(label,+7)");
  at->add_option("--fuel", at_fuel, "instruction budget");
  at->add_option("--max-illegal", at_max_illegal, "illegal-target list capacity");
  at->add_flag("--train", at_train, "add a training run over the same inputs to the ITL");

  // verify -------------------------------------------------------------------
  std::string vf_report, vf_prog, vf_keys, vf_nonce_hex(32, '0');
  std::vector<std::string> vf_inputs;
  std::uint64_t vf_budget = 10'000'000;
  bool vf_replay = false, vf_train = false;
  auto* vf = app.add_subcommand("verify", "check a report against a program");
  vf->add_option("report", vf_report)->required();
  vf->add_option("program", vf_prog)->required();
  vf->add_option("--keys", vf_keys)->required();
  vf->add_option("--nonce", vf_nonce_hex, "expected nonce, 32 hex digits");
  vf->add_option("--input", vf_inputs, "claimed input rK=V; enables replay verification");
  vf->add_flag("--replay", vf_replay, "replay-verify even with no inputs");
  vf->add_flag("--train", vf_train, "train the ITL over the claimed inputs");
  vf->add_option("--budget", vf_budget, "search node budget");

  // compare ------------------------------------------------------------------
  std::vector<std::string> cp_progs, cp_inputs;
  auto* cp = app.add_subcommand("compare", "authenticator-size table across schemes");
  cp->add_option("programs", cp_progs, "program files")->required();
  cp->add_option("--input", cp_inputs, "register input rK=V applied to every program");

  // serve --------------------------------------------------------------------
  std::vector<std::string> sv_progs, sv_inputs;
  std::string sv_keys, sv_listen;
  std::uint64_t sv_budget = 10'000'000;
  bool sv_replay = false, sv_train = false;
  auto* sv = app.add_subcommand("serve", "host the TCP verifier for the given programs");
  sv->add_option("programs", sv_progs)->required();
  sv->add_option("--keys", sv_keys)->required();
  sv->add_option("--listen", sv_listen, "host:port (default CFA_VERIFIER_ADDR)");
  sv->add_option("--input", sv_inputs, "expected input rK=V; enables replay verification");
  sv->add_flag("--replay", sv_replay, "replay-verify even with no inputs");
  sv->add_flag("--train", sv_train, "train each ITL over the expected inputs");
  sv->add_option("--budget", sv_budget, "search node budget");

  // challenge ----------------------------------------------------------------
  std::string ch_prog, ch_keys, ch_addr, ch_attack;
  std::vector<std::string> ch_inputs;
  bool ch_resubmit = false, ch_train = false;
  auto* ch = app.add_subcommand("challenge", "full client round trip against a verifier");
  ch->add_option("program", ch_prog)->required();
  ch->add_option("--keys", ch_keys)->required();
  ch->add_option("--addr", ch_addr, "verifier host:port (default CFA_VERIFIER_ADDR)");
  ch->add_option("--input", ch_inputs, "register input rK=V (repeatable)");
  ch->add_option("--attack", ch_attack, "fault spec; 'replay' resubmits the report");
  ch->add_flag("--resubmit", ch_resubmit, "submit the same report twice");
  ch->add_flag("--train", ch_train, "add a training run over the same inputs to the ITL");

  CLI11_PARSE(app, argc, argv);

  if (*kg) {
    cfa::KeyPair keys = cfa::generate_keys(kg_seed);
    try {
      cfa::save_keys(kg_keys, keys);
    } catch (const std::exception& e) {
      die(e.what());
    }
    return 0;
  }

  if (*inst) {
    cfa::ProgramCFG cfg = load_or_die(in_prog);
    cfa::LintReport lint = cfa::scan_code(cfg);
    if (!lint.clean() && !in_allow_dirty) {
      std::cout << lint.to_json() << "\n";
      return kExitLoad;
    }
    cfa::DominatorInfo dom = cfa::compute_dominators(cfg);
    cfa::InstrumentationPlan plan = cfa::plan_instrumentation(cfg, dom);
    cfa::IndirectTargetList itl = make_itl(cfg, false, {});
    auto digest = cfa::program_digest(cfg, plan);
    std::cout << "{\"digest\":\"" << cfa::hex(digest) << "\",\"plan\":" << plan.to_json(cfg)
              << ",\"itl\":" << itl.to_json() << ",\"lint\":" << lint.to_json() << "}\n";
    return 0;
  }

  if (*at) {
    cfa::ProgramCFG cfg = load_or_die(at_prog);
    cfa::DominatorInfo dom = cfa::compute_dominators(cfg);
    cfa::InstrumentationPlan plan = cfa::plan_instrumentation(cfg, dom);
    auto inputs = parse_inputs(at_inputs);
    cfa::IndirectTargetList itl = make_itl(cfg, at_train, inputs);
    cfa::KeyPair keys = load_keys_or_die(at_keys);
    std::optional<cfa::AttackSpec> attack;
    if (!at_attack.empty()) {
      try {
        attack = cfa::AttackSpec::parse(at_attack, cfg);
      } catch (const std::exception& e) {
        die(e.what());
      }
    }
    AttestOutcome out = run_attest(cfg, plan, itl, keys, parse_nonce(at_nonce_hex), inputs,
                                   attack, at_fuel, at_max_illegal);
    std::ofstream f(at_out, std::ios::binary);
    if (!f) die("cannot write '" + at_out + "'");
    f.write(reinterpret_cast<const char*>(out.bytes.data()),
            static_cast<std::streamsize>(out.bytes.size()));
    std::cout << attest_summary(out.result, out.bytes.size()) << "\n";
    return out.result.abort_reason ? kExitAborted : 0;
  }

  if (*vf) {
    cfa::ProgramCFG cfg = load_or_die(vf_prog);
    cfa::DominatorInfo dom = cfa::compute_dominators(cfg);
    cfa::InstrumentationPlan plan = cfa::plan_instrumentation(cfg, dom);
    auto inputs = parse_inputs(vf_inputs);
    cfa::IndirectTargetList itl = make_itl(cfg, vf_train, inputs);
    cfa::VerifierContext ctx;
    ctx.cfg = &cfg;
    ctx.plan = &plan;
    ctx.itl = &itl;
    ctx.keys = load_keys_or_die(vf_keys);
    ctx.expected_nonce = parse_nonce(vf_nonce_hex);
    ctx.node_budget = vf_budget;
    if (!vf_inputs.empty() || vf_replay) ctx.inputs = inputs;
    cfa::AttestationReport report;
    try {
      report = cfa::AttestationReport::deserialize(read_file_bytes(vf_report));
    } catch (const cfa::ReportFormatError& e) {
      die(e.what());
    }
    cfa::Verdict v = cfa::verify(report, ctx);
    std::cout << v.to_json() << "\n";
    return verdict_exit(v);
  }

  if (*cp) {
    auto inputs = parse_inputs(cp_inputs);
    std::cout << cfa::SizeReport::csv_header() << "\n";
    for (const auto& path : cp_progs) {
      cfa::ProgramCFG cfg = load_or_die(path);
      cfa::DominatorInfo dom = cfa::compute_dominators(cfg);
      cfa::InstrumentationPlan plan = cfa::plan_instrumentation(cfg, dom);
      cfa::IndirectTargetList itl = make_itl(cfg, false, {});
      cfa::KeyPair keys{};  // sizes are key-independent; zero keys keep runs reproducible
      cfa::ExecOptions opts;
      opts.log_events = true;
      cfa::ExecResult r = cfa::execute(cfg, plan, itl, keys, cfa::Nonce{}, inputs, opts);
      if (r.abort_reason) die(path + ": execution aborted: " + *r.abort_reason);
      cfa::NaiveAuth naive = cfa::build_naive(r.log);
      cfa::OatAuth oat = cfa::build_oat(r.log);
      cfa::CflatAuth cflat = cfa::build_cflat(r.log, cfg);
      std::optional<cfa::BlastAuth> blast;
      try {
        std::vector<cfa::BallLarusNumbering> nums;
        for (std::size_t f = 0; f < cfg.functions.size(); ++f)
          nums.push_back(cfa::ball_larus_number(cfg, static_cast<int>(f)));
        blast = cfa::build_blast(r.log, cfg, nums);
      } catch (const cfa::AnalysisError&) {
        // irreducible control flow: no Blast row for this program
      }
      cfa::SizeReport sizes =
          cfa::size_report(naive, oat, cflat, blast, r.report, r.log, cfg);
      std::cout << sizes.csv_rows(path);
    }
    return 0;
  }

  if (*sv) {
    cfa::VerifierService service;
    service.set_log(&std::cerr);
    cfa::KeyPair keys = load_keys_or_die(sv_keys);
    auto inputs = parse_inputs(sv_inputs);
    for (const auto& path : sv_progs) {
      cfa::VerifierService::Program p;
      p.cfg = load_or_die(path);
      cfa::DominatorInfo dom = cfa::compute_dominators(p.cfg);
      p.plan = cfa::plan_instrumentation(p.cfg, dom);
      p.itl = make_itl(p.cfg, sv_train, inputs);
      p.keys = keys;
      if (!sv_inputs.empty() || sv_replay) p.inputs = inputs;
      p.node_budget = sv_budget;
      auto digest = service.register_program(std::move(p));
      std::cout << "program " << path << " digest " << cfa::hex(digest) << "\n";
    }
    cfa::VerifierServer server(service);
    try {
      server.start(sv_listen.empty() ? cfa::default_verifier_addr() : sv_listen);
    } catch (const cfa::ProtocolError& e) {
      die(e.what());
    }
    std::cout << "listening on " << server.address() << std::endl;
    for (;;) std::this_thread::sleep_for(std::chrono::hours(24));
  }

  if (*ch) {
    cfa::ProgramCFG cfg = load_or_die(ch_prog);
    cfa::DominatorInfo dom = cfa::compute_dominators(cfg);
    cfa::InstrumentationPlan plan = cfa::plan_instrumentation(cfg, dom);
    auto inputs = parse_inputs(ch_inputs);
    cfa::IndirectTargetList itl = make_itl(cfg, ch_train, inputs);
    cfa::KeyPair keys = load_keys_or_die(ch_keys);
    std::optional<cfa::AttackSpec> attack;
    if (!ch_attack.empty()) {
      try {
        attack = cfa::AttackSpec::parse(ch_attack, cfg);
      } catch (const std::exception& e) {
        die(e.what());
      }
      if (attack->kind == cfa::AttackSpec::Kind::Replay) ch_resubmit = true;
    }
    try {
      cfa::VerifierClient client(ch_addr.empty() ? cfa::default_verifier_addr() : ch_addr);
      cfa::Nonce nonce = client.request_challenge(cfa::program_digest(cfg, plan));
      AttestOutcome out =
          run_attest(cfg, plan, itl, keys, nonce, inputs, attack, 100'000'000, 16);
      std::string verdict = client.submit_report(out.bytes);
      std::cout << verdict << "\n";
      if (ch_resubmit) std::cout << client.submit_report(out.bytes) << "\n";
      return verdict.find("\"accepted\":true") != std::string::npos ? 0 : kExitRejected;
    } catch (const cfa::ProtocolError& e) {
      die(e.what());
    }
  }

  return 0;
}
