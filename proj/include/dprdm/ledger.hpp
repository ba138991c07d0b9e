// Copyright 2026 The dprdm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <fcntl.h>
#include <sys/file.h>
#include <sys/stat.h>
#include <unistd.h>

#include <chrono>
#include <cstdint>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dprdm/accountant.hpp"
#include "dprdm/params.hpp"

// Query-budget enforcement.
//
// A ledger is an append-only journal file: one JSON header line carrying the
// budget target and mechanism parameters, then one JSON line per charged
// query. A charge is durable (written and fsynced) before the authorization
// is returned, so a crash can waste budget but can never grant an extra
// query. A torn trailing line therefore counts as spent.
//
// The refusal signal itself (and its timing) is observable to callers and
// sits outside the accounted privacy guarantee; the guarantee covers the
// released retrieval values only.
//
// Journal layout:
//   {"version":1,"target":{...},"params":{...},"created_at":<epoch_ms>}
//   {"seq":1,"timestamp":<epoch_ms>}
//   {"seq":2,"timestamp":<epoch_ms>}
//   ...

namespace dprdm {

struct LedgerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class BudgetLedger {
 public:
  struct Charge {
    bool authorized = false;
    std::uint64_t seq = 0;        // 1-based charge number when authorized
    std::uint64_t remaining = 0;  // queries left after this call
  };

  BudgetLedger(BudgetLedger&& other) noexcept { *this = std::move(other); }
  BudgetLedger& operator=(BudgetLedger&& other) noexcept {
    if (this != &other) {
      close_fd();
      fd_ = other.fd_;
      other.fd_ = -1;
      path_ = std::move(other.path_);
      target_ = other.target_;
      params_ = other.params_;
      curve_ = std::move(other.curve_);
      charged_ = other.charged_;
      created_at_ms_ = other.created_at_ms_;
      updated_at_ms_ = other.updated_at_ms_;
    }
    return *this;
  }
  BudgetLedger(const BudgetLedger&) = delete;
  BudgetLedger& operator=(const BudgetLedger&) = delete;
  ~BudgetLedger() { close_fd(); }

  // Opens (or creates) the journal at `path`. An existing journal must carry
  // exactly the requested target and params. Opening verifies calibration
  // consistency: the per-query curve composed to t, converted at delta, must
  // not exceed the target epsilon.
  static BudgetLedger open(const std::string& path, const BudgetTarget& target,
                           const PrivacyParams& params) {
    target.validate();
    params.validate();

    RdpCurve curve = mechanism_rdp(params);
    const DpGuarantee at_budget =
        to_approx_dp(compose(curve, target.t), target.delta);
    if (at_budget.epsilon > target.epsilon) {
      throw LedgerError(
          "miscalibrated parameters: composed epsilon at t=" +
          std::to_string(target.t) + " is " + std::to_string(at_budget.epsilon) +
          ", exceeding the target " + std::to_string(target.epsilon));
    }

    BudgetLedger ledger;
    ledger.path_ = path;
    ledger.target_ = target;
    ledger.params_ = params;
    ledger.curve_ = std::move(curve);

    ledger.fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (ledger.fd_ < 0) throw LedgerError(path + ": cannot open ledger file");
    if (::flock(ledger.fd_, LOCK_EX | LOCK_NB) != 0) {
      throw LedgerError(path + ": ledger is locked by another process");
    }

    struct stat st{};
    if (::fstat(ledger.fd_, &st) != 0) throw LedgerError(path + ": fstat failed");
    if (st.st_size == 0) {
      ledger.created_at_ms_ = now_ms();
      ledger.updated_at_ms_ = ledger.created_at_ms_;
      nlohmann::json header = {{"version", 1},
                               {"target", target_json(target)},
                               {"params", params_json(params)},
                               {"created_at", ledger.created_at_ms_}};
      ledger.append_line(header.dump());
      return ledger;
    }
    ledger.load_existing();
    return ledger;
  }

  // Atomically consumes one unit of budget. The charge is persisted and
  // fsynced before authorization is returned; a persistence failure leaves
  // the in-memory count unchanged.
  Charge charge() {
    std::lock_guard<std::mutex> lock(mutex_);
    if (charged_ >= target_.t) return {false, 0, 0};
    const std::uint64_t seq = charged_ + 1;
    const std::int64_t ts = now_ms();
    nlohmann::json line = {{"seq", seq}, {"timestamp", ts}};
    append_line(line.dump());
    charged_ = seq;
    updated_at_ms_ = ts;
    return {true, seq, target_.t - charged_};
  }

  const BudgetTarget& target() const { return target_; }
  const PrivacyParams& params() const { return params_; }
  const RdpCurve& per_query_curve() const { return curve_; }
  std::uint64_t charged() const { return charged_; }
  std::uint64_t remaining() const { return target_.t - charged_; }
  std::int64_t created_at_ms() const { return created_at_ms_; }
  std::int64_t updated_at_ms() const { return updated_at_ms_; }
  const std::string& path() const { return path_; }

 private:
  BudgetLedger() = default;

  static std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  }

  static nlohmann::json target_json(const BudgetTarget& t) {
    return {{"epsilon", t.epsilon}, {"delta", t.delta}, {"t", t.t}};
  }
  static nlohmann::json params_json(const PrivacyParams& p) {
    return {{"k", p.k}, {"q", p.q}, {"sigma", p.sigma}, {"lambda", p.lambda}};
  }

  void close_fd() {
    if (fd_ >= 0) {
      ::close(fd_);  // releases the flock
      fd_ = -1;
    }
  }

  void append_line(const std::string& line) {
    std::string buf = line;
    buf.push_back('\n');
    std::size_t off = 0;
    while (off < buf.size()) {
      const ssize_t n = ::write(fd_, buf.data() + off, buf.size() - off);
      if (n < 0) throw LedgerError(path_ + ": write failed");
      off += static_cast<std::size_t>(n);
    }
    if (::fdatasync(fd_) != 0) throw LedgerError(path_ + ": fsync failed");
  }

  void load_existing() {
    std::string contents;
    {
      char buf[4096];
      ::lseek(fd_, 0, SEEK_SET);
      ssize_t n;
      while ((n = ::read(fd_, buf, sizeof(buf))) > 0) {
        contents.append(buf, static_cast<std::size_t>(n));
      }
      if (n < 0) throw LedgerError(path_ + ": read failed");
      ::lseek(fd_, 0, SEEK_END);
    }

    std::vector<std::string> lines;
    std::size_t start = 0;
    bool torn_tail = false;
    while (start < contents.size()) {
      const std::size_t nl = contents.find('\n', start);
      if (nl == std::string::npos) {
        torn_tail = contents.find_first_not_of(" \t\r", start) != std::string::npos;
        break;
      }
      if (nl > start) lines.push_back(contents.substr(start, nl - start));
      start = nl + 1;
    }
    if (lines.empty()) throw LedgerError(path_ + ": journal has no header line");

    nlohmann::json header;
    try {
      header = nlohmann::json::parse(lines.front());
    } catch (const nlohmann::json::exception& e) {
      throw LedgerError(path_ + ": corrupt header: " + e.what());
    }
    if (header.value("version", 0) != 1) {
      throw LedgerError(path_ + ": unsupported ledger version");
    }
    BudgetTarget stored_target;
    PrivacyParams stored_params;
    try {
      const auto& t = header.at("target");
      stored_target.epsilon = t.at("epsilon").get<double>();
      stored_target.delta = t.at("delta").get<double>();
      stored_target.t = t.at("t").get<std::uint64_t>();
      const auto& p = header.at("params");
      stored_params.k = p.at("k").get<std::uint64_t>();
      stored_params.q = p.at("q").get<double>();
      stored_params.sigma = p.at("sigma").get<double>();
      stored_params.lambda = p.at("lambda").get<double>();
      created_at_ms_ = header.value("created_at", std::int64_t{0});
    } catch (const nlohmann::json::exception& e) {
      throw LedgerError(path_ + ": corrupt header: " + e.what());
    }
    if (!(stored_target == target_)) {
      throw LedgerError(path_ + ": stored budget target differs from request");
    }
    if (!(stored_params == params_)) {
      throw LedgerError(path_ + ": stored mechanism params differ from request");
    }

    std::uint64_t charges = 0;
    updated_at_ms_ = created_at_ms_;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      nlohmann::json line;
      try {
        line = nlohmann::json::parse(lines[i]);
        const auto seq = line.at("seq").get<std::uint64_t>();
        if (seq != charges + 1) {
          throw LedgerError(path_ + ": charge sequence gap at line " +
                            std::to_string(i + 1));
        }
        updated_at_ms_ = line.value("timestamp", updated_at_ms_);
      } catch (const nlohmann::json::exception& e) {
        throw LedgerError(path_ + ": corrupt charge line " +
                          std::to_string(i + 1) + ": " + e.what());
      }
      ++charges;
    }
    // A torn trailing line was an in-flight charge; count it as spent and
    // complete it so the journal parses cleanly next time.
    if (torn_tail) {
      ++charges;
      nlohmann::json note = {{"seq", charges},
                             {"timestamp", now_ms()},
                             {"recovered", true}};
      // Drop the torn bytes, then append the completed line in their place.
      if (::ftruncate(fd_, static_cast<off_t>(start)) != 0) {
        throw LedgerError(path_ + ": cannot repair torn charge line");
      }
      ::lseek(fd_, 0, SEEK_END);
      append_line(note.dump());
    }
    if (charges > target_.t) {
      throw LedgerError(path_ + ": journal records " + std::to_string(charges) +
                        " charges, more than the budget " +
                        std::to_string(target_.t));
    }
    charged_ = charges;
  }

  int fd_ = -1;
  std::string path_;
  BudgetTarget target_;
  PrivacyParams params_;
  RdpCurve curve_;
  std::uint64_t charged_ = 0;
  std::int64_t created_at_ms_ = 0;
  std::int64_t updated_at_ms_ = 0;
  std::mutex mutex_;
};

}  // namespace dprdm
