// SPDX-License-Identifier: MIT

#include "cfa/protocol.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>

namespace cfa {

namespace {

constexpr std::size_t kMaxFrame = 1u << 26;  // 64 MiB; reports stay far below

Verdict protocol_reject(const std::string& reason) {
  Verdict v;
  v.accepted = false;
  v.reason = reason;
  return v;
}

std::vector<std::uint8_t> json_bytes(const Verdict& v) {
  std::string s = v.to_json();
  return std::vector<std::uint8_t>(s.begin(), s.end());
}

std::int64_t now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

void close_quietly(int fd) {
  if (fd >= 0) ::close(fd);
}

void parse_addr(const std::string& addr, std::string* host, std::uint16_t* port) {
  auto colon = addr.rfind(':');
  if (colon == std::string::npos)
    throw ProtocolError("address must be host:port, got '" + addr + "'");
  *host = addr.substr(0, colon);
  if (*host == "localhost") *host = "127.0.0.1";
  const std::string port_str = addr.substr(colon + 1);
  char* end = nullptr;
  long p = std::strtol(port_str.c_str(), &end, 10);
  if (end == port_str.c_str() || *end != '\0' || p < 0 || p > 65535)
    throw ProtocolError("bad port in '" + addr + "'");
  *port = static_cast<std::uint16_t>(p);
}

void write_all(int fd, const std::uint8_t* data, std::size_t len) {
  while (len > 0) {
    ssize_t n = ::send(fd, data, len, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw ProtocolError(std::string("send failed: ") + std::strerror(errno));
    }
    data += n;
    len -= static_cast<std::size_t>(n);
  }
}

void read_exact(int fd, std::uint8_t* data, std::size_t len) {
  while (len > 0) {
    ssize_t n = ::recv(fd, data, len, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw ProtocolError(std::string("recv failed: ") + std::strerror(errno));
    }
    if (n == 0) throw ProtocolError("connection closed mid-frame");
    data += n;
    len -= static_cast<std::size_t>(n);
  }
}

}  // namespace

std::string hex(std::span<const std::uint8_t> bytes) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0xf]);
  }
  return out;
}

void write_frame(int fd, std::uint8_t type, std::span<const std::uint8_t> payload) {
  if (payload.size() + 1 > kMaxFrame) throw ProtocolError("frame too large");
  std::uint32_t len = static_cast<std::uint32_t>(payload.size() + 1);
  std::vector<std::uint8_t> buf;
  buf.reserve(4 + len);
  buf.push_back(static_cast<std::uint8_t>(len >> 24));
  buf.push_back(static_cast<std::uint8_t>(len >> 16));
  buf.push_back(static_cast<std::uint8_t>(len >> 8));
  buf.push_back(static_cast<std::uint8_t>(len));
  buf.push_back(type);
  buf.insert(buf.end(), payload.begin(), payload.end());
  write_all(fd, buf.data(), buf.size());
}

std::pair<std::uint8_t, std::vector<std::uint8_t>> read_frame(int fd) {
  std::uint8_t hdr[4];
  read_exact(fd, hdr, 4);
  std::uint32_t len = (std::uint32_t(hdr[0]) << 24) | (std::uint32_t(hdr[1]) << 16) |
                      (std::uint32_t(hdr[2]) << 8) | std::uint32_t(hdr[3]);
  if (len == 0) throw ProtocolError("empty frame");
  if (len > kMaxFrame) throw ProtocolError("oversized frame");
  std::uint8_t type = 0;
  read_exact(fd, &type, 1);
  std::vector<std::uint8_t> payload(len - 1);
  if (!payload.empty()) read_exact(fd, payload.data(), payload.size());
  return {type, std::move(payload)};
}

// ---------------------------------------------------------------------------
// VerifierService

Digest VerifierService::register_program(Program program) {
  Digest d = program_digest(program.cfg, program.plan);
  std::lock_guard lock(mu_);
  programs_.insert_or_assign(d, std::move(program));
  return d;
}

void VerifierService::set_log(std::ostream* log) {
  std::lock_guard lock(mu_);
  log_ = log;
}

void VerifierService::log_line(const std::string& event, const std::string& fields_json) {
  // Callers hold mu_. fields_json is a JSON object body ("" for none).
  if (!log_) return;
  *log_ << "{\"event\":\"" << event << "\",\"ts_ms\":" << now_ms()
        << (fields_json.empty() ? "" : ",") << fields_json << "}\n";
  log_->flush();
}

std::optional<Challenge> VerifierService::issue_challenge(const Digest& program,
                                                          std::string* error) {
  std::lock_guard lock(mu_);
  if (!programs_.contains(program)) {
    if (error) *error = "unknown-program";
    log_line("challenge-refused", "\"reason\":\"unknown-program\",\"program\":\"" +
                                      hex(program) + "\"");
    return std::nullopt;
  }
  Challenge ch;
  ch.program = program;
  random_bytes(ch.nonce);
  sessions_[ch.nonce] = SessionRecord{program, SessionState::Issued};
  log_line("challenge-issued",
           "\"program\":\"" + hex(program) + "\",\"nonce\":\"" + hex(ch.nonce) + "\"");
  return ch;
}

Verdict VerifierService::decide_locked(const AttestationReport& report) {
  auto session = sessions_.find(report.nonce);
  if (session == sessions_.end()) return protocol_reject("stale-nonce");
  if (session->second.state != SessionState::Issued) return protocol_reject("nonce-consumed");
  auto prog = programs_.find(session->second.program);
  if (prog == programs_.end()) return protocol_reject("unknown-program");

  session->second.state = SessionState::Reported;
  VerifierContext ctx;
  ctx.cfg = &prog->second.cfg;
  ctx.plan = &prog->second.plan;
  ctx.itl = &prog->second.itl;
  ctx.keys = prog->second.keys;
  ctx.expected_nonce = report.nonce;
  ctx.inputs = prog->second.inputs;
  ctx.node_budget = prog->second.node_budget;
  Verdict v = verify(report, ctx);
  session->second.state = SessionState::Decided;
  return v;
}

Verdict VerifierService::submit_report(const AttestationReport& report) {
  std::lock_guard lock(mu_);
  log_line("report-received", "\"nonce\":\"" + hex(report.nonce) + "\"");
  Verdict v = decide_locked(report);
  log_line("verdict", "\"nonce\":\"" + hex(report.nonce) + "\",\"accepted\":" +
                          (v.accepted ? "true" : "false") + ",\"reason\":\"" + v.reason + "\"");
  return v;
}

std::pair<std::uint8_t, std::vector<std::uint8_t>> VerifierService::handle_frame(
    std::uint8_t type, std::span<const std::uint8_t> payload) {
  switch (type) {
    case kFrameChallengeRequest: {
      if (payload.size() != 32)
        return {kFrameVerdict, json_bytes(protocol_reject("malformed-request"))};
      Digest program{};
      std::memcpy(program.data(), payload.data(), 32);
      std::string error;
      auto ch = issue_challenge(program, &error);
      if (!ch) return {kFrameVerdict, json_bytes(protocol_reject(error))};
      return {kFrameChallenge,
              std::vector<std::uint8_t>(ch->nonce.begin(), ch->nonce.end())};
    }
    case kFrameReport: {
      AttestationReport report;
      try {
        report = AttestationReport::deserialize(
            std::vector<std::uint8_t>(payload.begin(), payload.end()));
      } catch (const ReportFormatError& e) {
        return {kFrameVerdict,
                json_bytes(protocol_reject(std::string("malformed-report: ") + e.what()))};
      }
      return {kFrameVerdict, json_bytes(submit_report(report))};
    }
    default:
      return {kFrameVerdict, json_bytes(protocol_reject("unknown-frame-type"))};
  }
}

// ---------------------------------------------------------------------------
// VerifierServer

VerifierServer::~VerifierServer() { stop(); }

void VerifierServer::start(const std::string& addr) {
  std::string host;
  std::uint16_t port = 0;
  parse_addr(addr, &host, &port);

  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw ProtocolError(std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);

  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &sa.sin_addr) != 1) {
    close_quietly(listen_fd_);
    listen_fd_ = -1;
    throw ProtocolError("bad host '" + host + "' (numeric IPv4 only)");
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&sa), sizeof sa) < 0 ||
      ::listen(listen_fd_, 16) < 0) {
    std::string err = std::strerror(errno);
    close_quietly(listen_fd_);
    listen_fd_ = -1;
    throw ProtocolError("bind/listen on " + addr + ": " + err);
  }
  socklen_t slen = sizeof sa;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&sa), &slen);
  bound_addr_ = host + ":" + std::to_string(ntohs(sa.sin_port));
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void VerifierServer::stop() {
  if (listen_fd_ >= 0) {
    ::shutdown(listen_fd_, SHUT_RDWR);
    close_quietly(listen_fd_);
    listen_fd_ = -1;
  }
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(workers_mu_);
    workers.swap(workers_);
  }
  for (auto& w : workers)
    if (w.joinable()) w.join();
}

void VerifierServer::accept_loop() {
  for (;;) {
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      return;  // listener closed
    }
    std::lock_guard lock(workers_mu_);
    workers_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void VerifierServer::serve_connection(int fd) {
  try {
    for (;;) {
      auto [type, payload] = read_frame(fd);
      auto [rtype, rpayload] = service_.handle_frame(type, payload);
      write_frame(fd, rtype, rpayload);
    }
  } catch (const ProtocolError&) {
    // EOF or a framing error ends the connection; nothing to report.
  }
  close_quietly(fd);
}

// ---------------------------------------------------------------------------
// VerifierClient

VerifierClient::VerifierClient(const std::string& addr) {
  std::string host;
  std::uint16_t port = 0;
  parse_addr(addr, &host, &port);
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw ProtocolError(std::string("socket: ") + std::strerror(errno));
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &sa.sin_addr) != 1) {
    close_quietly(fd_);
    fd_ = -1;
    throw ProtocolError("bad host '" + host + "' (numeric IPv4 only)");
  }
  if (::connect(fd_, reinterpret_cast<sockaddr*>(&sa), sizeof sa) < 0) {
    std::string err = std::strerror(errno);
    close_quietly(fd_);
    fd_ = -1;
    throw ProtocolError("connect to " + addr + ": " + err);
  }
}

VerifierClient::~VerifierClient() { close_quietly(fd_); }

Nonce VerifierClient::request_challenge(const Digest& program) {
  write_frame(fd_, kFrameChallengeRequest, program);
  auto [type, payload] = read_frame(fd_);
  if (type == kFrameChallenge && payload.size() == 16) {
    Nonce n{};
    std::memcpy(n.data(), payload.data(), 16);
    return n;
  }
  if (type == kFrameVerdict)
    throw ProtocolError("challenge refused: " +
                        std::string(payload.begin(), payload.end()));
  throw ProtocolError("unexpected response frame type " + std::to_string(type));
}

std::string VerifierClient::submit_report(const std::vector<std::uint8_t>& report_bytes) {
  write_frame(fd_, kFrameReport, report_bytes);
  auto [type, payload] = read_frame(fd_);
  if (type != kFrameVerdict)
    throw ProtocolError("unexpected response frame type " + std::to_string(type));
  return std::string(payload.begin(), payload.end());
}

std::string default_verifier_addr() {
  const char* env = std::getenv("CFA_VERIFIER_ADDR");
  return env && *env ? env : "127.0.0.1:7411";
}

}  // namespace cfa
