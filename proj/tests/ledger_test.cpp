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

#include "dprdm/ledger.hpp"

#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>
#include <vector>

namespace dprdm {
namespace {

class TempDir {
 public:
  TempDir() {
    auto base = std::filesystem::temp_directory_path();
    for (int i = 0; i < 1000; ++i) {
      auto candidate = base / ("dprdm_ledger_test_" + std::to_string(::getpid()) +
                               "_" + std::to_string(i));
      std::error_code ec;
      if (std::filesystem::create_directory(candidate, ec)) {
        path_ = candidate;
        return;
      }
    }
    throw std::runtime_error("cannot create temp dir");
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

// A calibrated pair: the table-style configuration, with the target set a
// hair above the accountant's composed value so opening succeeds.
PrivacyParams table_params() { return {34, 0.01, 0.05, 1.0}; }

BudgetTarget table_target(std::uint64_t t) {
  const DpGuarantee g =
      to_approx_dp(compose(mechanism_rdp(table_params()), t), 1e-6);
  return {g.epsilon * 1.0001, 1e-6, t};
}

TEST(Ledger, FreshOpenStartsAtZero) {
  TempDir dir;
  const auto target = table_target(10000);
  auto ledger = BudgetLedger::open(dir.file("a.ledger"), target, table_params());
  EXPECT_EQ(ledger.charged(), 0u);
  EXPECT_EQ(ledger.remaining(), 10000u);
  EXPECT_GT(ledger.created_at_ms(), 0);
}

TEST(Ledger, RefusesMiscalibratedParams) {
  TempDir dir;
  // Target far below what the parameters can deliver over t queries.
  BudgetTarget target{0.001, 1e-6, 10000};
  try {
    BudgetLedger::open(dir.file("bad.ledger"), target, table_params());
    FAIL() << "expected rejection";
  } catch (const LedgerError& e) {
    EXPECT_NE(std::string(e.what()).find("miscalibrated"), std::string::npos);
  }
}

TEST(Ledger, ReopenRequiresExactMatch) {
  TempDir dir;
  const auto path = dir.file("b.ledger");
  const auto target = table_target(100);
  {
    auto ledger = BudgetLedger::open(path, target, table_params());
    EXPECT_TRUE(ledger.charge().authorized);
  }
  {
    auto ledger = BudgetLedger::open(path, target, table_params());
    EXPECT_EQ(ledger.charged(), 1u);
  }
  PrivacyParams other = table_params();
  other.sigma = 0.06;
  EXPECT_THROW(BudgetLedger::open(path, target, other), LedgerError);
  BudgetTarget other_target = target;
  other_target.t = 101;
  EXPECT_THROW(BudgetLedger::open(path, other_target, table_params()),
               LedgerError);
}

TEST(Ledger, ChargesUpToBudgetThenRefuses) {
  TempDir dir;
  auto target = table_target(3);
  auto ledger = BudgetLedger::open(dir.file("c.ledger"), target, table_params());
  for (std::uint64_t i = 1; i <= 3; ++i) {
    const auto charge = ledger.charge();
    EXPECT_TRUE(charge.authorized);
    EXPECT_EQ(charge.seq, i);
    EXPECT_EQ(charge.remaining, 3 - i);
  }
  const auto refused = ledger.charge();
  EXPECT_FALSE(refused.authorized);
  EXPECT_EQ(refused.remaining, 0u);
  EXPECT_EQ(ledger.charged(), 3u);
}

TEST(Ledger, StateRoundTripsThroughJournal) {
  TempDir dir;
  const auto path = dir.file("d.ledger");
  const auto target = table_target(50);
  {
    auto ledger = BudgetLedger::open(path, target, table_params());
    for (int i = 0; i < 17; ++i) EXPECT_TRUE(ledger.charge().authorized);
  }
  auto reopened = BudgetLedger::open(path, target, table_params());
  EXPECT_EQ(reopened.charged(), 17u);
  EXPECT_EQ(reopened.remaining(), 33u);
  EXPECT_EQ(reopened.target(), target);
  EXPECT_EQ(reopened.params(), table_params());
}

TEST(Ledger, SecondProcessHandleIsLockedOut) {
  TempDir dir;
  const auto path = dir.file("e.ledger");
  const auto target = table_target(5);
  auto ledger = BudgetLedger::open(path, target, table_params());
  // A second open in this process shares the fd table but flock is per-open;
  // expect the lock to refuse.
  EXPECT_THROW(BudgetLedger::open(path, target, table_params()), LedgerError);
}

// Crash between persist and return: the charge must be visible after reopen
// (waste is allowed, undercounting is not).
TEST(Ledger, CrashAfterPersistKeepsCharge) {
  TempDir dir;
  const auto path = dir.file("crash.ledger");
  const auto target = table_target(10);
  {
    auto ledger = BudgetLedger::open(path, target, table_params());
    EXPECT_TRUE(ledger.charge().authorized);
  }

  const pid_t pid = fork();
  ASSERT_GE(pid, 0);
  if (pid == 0) {
    // Child: charge twice, then die without unwinding or closing anything.
    try {
      auto ledger = BudgetLedger::open(path, target, table_params());
      ledger.charge();
      ledger.charge();
    } catch (...) {
      _exit(3);
    }
    _exit(0);
  }
  int status = 0;
  ASSERT_EQ(waitpid(pid, &status, 0), pid);
  ASSERT_TRUE(WIFEXITED(status));
  ASSERT_EQ(WEXITSTATUS(status), 0);

  auto reopened = BudgetLedger::open(path, target, table_params());
  EXPECT_EQ(reopened.charged(), 3u);
}

// A torn trailing line (crash mid-write) counts as a spent charge.
TEST(Ledger, TornTrailingLineCountsAsCharged) {
  TempDir dir;
  const auto path = dir.file("torn.ledger");
  const auto target = table_target(10);
  {
    auto ledger = BudgetLedger::open(path, target, table_params());
    EXPECT_TRUE(ledger.charge().authorized);
    EXPECT_TRUE(ledger.charge().authorized);
  }
  {
    std::ofstream out(path, std::ios::app | std::ios::binary);
    out << "{\"seq\":3,\"times";  // no newline, invalid JSON
  }
  auto reopened = BudgetLedger::open(path, target, table_params());
  EXPECT_EQ(reopened.charged(), 3u);
  // The repair leaves a parseable journal behind.
  auto again_path = path;
  {
    auto moved = std::move(reopened);
    EXPECT_EQ(moved.charged(), 3u);
  }
  auto again = BudgetLedger::open(again_path, target, table_params());
  EXPECT_EQ(again.charged(), 3u);
}

TEST(Ledger, ConcurrentChargersNeverExceedBudget) {
  TempDir dir;
  const auto path = dir.file("stress.ledger");
  const auto target = table_target(100);
  auto ledger = BudgetLedger::open(path, target, table_params());

  std::atomic<std::uint64_t> authorized{0};
  std::vector<std::thread> workers;
  for (int w = 0; w < 8; ++w) {
    workers.emplace_back([&ledger, &authorized] {
      for (int i = 0; i < 20; ++i) {
        if (ledger.charge().authorized) authorized.fetch_add(1);
      }
    });
  }
  for (auto& worker : workers) worker.join();
  EXPECT_EQ(authorized.load(), 100u);
  EXPECT_EQ(ledger.charged(), 100u);
  EXPECT_FALSE(ledger.charge().authorized);
}

TEST(Ledger, RejectsCorruptHeader) {
  TempDir dir;
  const auto path = dir.file("garbage.ledger");
  {
    std::ofstream out(path);
    out << "not a json header\n";
  }
  EXPECT_THROW(BudgetLedger::open(path, table_target(5), table_params()),
               LedgerError);
}

TEST(Ledger, RejectsJournalBeyondBudget) {
  TempDir dir;
  const auto path = dir.file("over.ledger");
  const auto target = table_target(2);
  {
    auto ledger = BudgetLedger::open(path, target, table_params());
    ledger.charge();
    ledger.charge();
  }
  {
    std::ofstream out(path, std::ios::app);
    out << "{\"seq\":3,\"timestamp\":0}\n";
  }
  EXPECT_THROW(BudgetLedger::open(path, target, table_params()), LedgerError);
}

}  // namespace
}  // namespace dprdm
