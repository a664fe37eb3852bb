// SPDX-License-Identifier: MIT
//
// Challenge/response transport between prover and verifier.
//
// Wire format, both directions: u32 big-endian frame length (counting the
// bytes after the length field), one type byte, payload.
//   0x01 challenge request  — payload: 32-byte program digest
//   0x02 challenge          — payload: 16-byte nonce
//   0x03 report             — payload: serialized attestation report
//   0x04 verdict            — payload: verdict JSON (UTF-8)
// Protocol-level failures (unknown program, unknown or already-consumed
// nonce, malformed frames) come back as rejecting verdict frames, so a client
// handles exactly two response shapes.
//
// The TCP server funnels every frame through VerifierService::handle_frame,
// which is also the in-process entry point — both transports produce
// byte-identical response frames.

#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "cfa/hmac.hpp"
#include "cfa/instrument.hpp"
#include "cfa/ir.hpp"
#include "cfa/keys.hpp"
#include "cfa/prover.hpp"
#include "cfa/verifier.hpp"

namespace cfa {

inline constexpr std::uint8_t kFrameChallengeRequest = 0x01;
inline constexpr std::uint8_t kFrameChallenge = 0x02;
inline constexpr std::uint8_t kFrameReport = 0x03;
inline constexpr std::uint8_t kFrameVerdict = 0x04;

struct ProtocolError : std::runtime_error {
  explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

struct Challenge {
  Nonce nonce{};
  Digest program{};
};

enum class SessionState { Issued, Reported, Decided };

struct SessionRecord {
  Digest program{};
  SessionState state = SessionState::Issued;
};

// Session-table owner and frame handler. Thread-safe; one mutex serializes
// challenge issue and report decisions (verification itself is CPU-bound and
// short for the workloads the service fronts).
class VerifierService {
 public:
  struct Program {
    ProgramCFG cfg;
    InstrumentationPlan plan;
    IndirectTargetList itl;
    KeyPair keys;
    std::optional<std::map<int, std::uint32_t>> inputs;  // replay-mode verification
    std::uint64_t node_budget = 10'000'000;
  };

  // Takes ownership; the key is the program digest over CFG + plan.
  Digest register_program(Program program);

  // JSON-lines event log (challenge issued / report received / verdict);
  // null disables. Log lines carry timestamps, response frames do not.
  void set_log(std::ostream* log);

  std::pair<std::uint8_t, std::vector<std::uint8_t>> handle_frame(
      std::uint8_t type, std::span<const std::uint8_t> payload);

  // Direct (in-process) API; handle_frame is a thin codec over these.
  std::optional<Challenge> issue_challenge(const Digest& program, std::string* error = nullptr);
  Verdict submit_report(const AttestationReport& report);

 private:
  Verdict decide_locked(const AttestationReport& report);
  void log_line(const std::string& event, const std::string& fields_json);

  std::map<std::array<std::uint8_t, 32>, Program> programs_;
  std::map<Nonce, SessionRecord> sessions_;
  std::mutex mu_;
  std::ostream* log_ = nullptr;
};

// Minimal blocking TCP front end, one thread per connection.
class VerifierServer {
 public:
  explicit VerifierServer(VerifierService& service) : service_(service) {}
  ~VerifierServer();
  VerifierServer(const VerifierServer&) = delete;
  VerifierServer& operator=(const VerifierServer&) = delete;

  // addr is "host:port"; port 0 binds an ephemeral port. Throws ProtocolError.
  void start(const std::string& addr);
  void stop();
  const std::string& address() const { return bound_addr_; }  // actual host:port

 private:
  void accept_loop();
  void serve_connection(int fd);

  VerifierService& service_;
  int listen_fd_ = -1;
  std::thread accept_thread_;
  std::mutex workers_mu_;
  std::vector<std::thread> workers_;
  std::string bound_addr_;
};

// Blocking client over one connection. Throws ProtocolError on transport
// failure; protocol-level rejections surface as verdicts, except
// request_challenge, which throws with the rejection reason (there is no
// nonce to continue with).
class VerifierClient {
 public:
  explicit VerifierClient(const std::string& addr);
  ~VerifierClient();
  VerifierClient(const VerifierClient&) = delete;
  VerifierClient& operator=(const VerifierClient&) = delete;

  Nonce request_challenge(const Digest& program);
  std::string submit_report(const std::vector<std::uint8_t>& report_bytes);  // verdict JSON

 private:
  int fd_ = -1;
};

// CFA_VERIFIER_ADDR, or "127.0.0.1:7411" when unset.
std::string default_verifier_addr();

// Raw frame I/O over a connected socket (exposed for the smoke tests).
void write_frame(int fd, std::uint8_t type, std::span<const std::uint8_t> payload);
std::pair<std::uint8_t, std::vector<std::uint8_t>> read_frame(int fd);

std::string hex(std::span<const std::uint8_t> bytes);

}  // namespace cfa
