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

// End-to-end tests running the dprdm binary.

#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dprdm/calibrator.hpp"
#include "dprdm/io.hpp"
#include "dprdm/metrics.hpp"

namespace {

using nlohmann::json;

class TempDir {
 public:
  TempDir() {
    auto base = std::filesystem::temp_directory_path();
    for (int i = 0; i < 1000; ++i) {
      auto candidate = base / ("dprdm_cli_test_" + std::to_string(::getpid()) +
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

struct CliResult {
  int exit_code = -1;
  std::string out;
};

CliResult run_cli(const TempDir& dir, const std::string& args,
                  const std::string& env = "") {
  static int counter = 0;
  const std::string out_path = dir.file(".cli_out_" + std::to_string(counter++));
  // Run inside the temp dir so default sidecar paths land there too.
  const std::string command = "cd " + dir.file("") + " && " + env + " " +
                              std::string(DPRDM_CLI_PATH) + " " + args + " > " +
                              out_path + " 2>&1";
  const int status = std::system(command.c_str());
  CliResult result;
  if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
  std::ifstream in(out_path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  result.out = buffer.str();
  return result;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_jsonl_records(const std::string& path, std::size_t n, std::size_t d,
                         std::uint64_t seed, std::uint64_t id_base = 0,
                         bool unit_norm = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::ofstream out(path);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(d);
    double norm = 0.0;
    for (auto& x : v) {
      x = gauss(rng);
      norm += x * x;
    }
    if (unit_norm) {
      norm = std::sqrt(norm);
      for (auto& x : v) x /= norm;
    }
    json rec = {{"id", id_base + i}, {"vector", v}};
    out << rec.dump() << "\n";
  }
}

TEST(CliBuildIndex, BuildsFromJsonlAndReports) {
  TempDir dir;
  {
    std::ofstream out(dir.file("two.jsonl"));
    out << R"({"id": 1, "vector": [2.0, 0.0, 0.0]})" << "\n";
    out << R"({"id": 2, "vector": [0.0, 0.0, 5.0]})" << "\n";
  }
  const auto result = run_cli(
      dir, "build-index --input " + dir.file("two.jsonl") + " --output " +
               dir.file("idx.bin"));
  EXPECT_EQ(result.exit_code, 0);
  EXPECT_NE(result.out.find("count=2 dim=3"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(dir.file("idx.bin")));
  EXPECT_TRUE(std::filesystem::exists(dir.file("idx.bin.meta.json")));
}

TEST(CliBuildIndex, CorruptMagicNamesFileAndExitsTwo) {
  TempDir dir;
  {
    std::ofstream out(dir.file("corrupt.bin"), std::ios::binary);
    out << "XXXX" << std::string(32, '\0');
  }
  const auto result = run_cli(
      dir, "build-index --input " + dir.file("corrupt.bin") + " --output " +
               dir.file("idx.bin"));
  EXPECT_EQ(result.exit_code, 2);
  EXPECT_NE(result.out.find("corrupt.bin"), std::string::npos);
}

TEST(CliBuildIndex, SavedIndexAnswersLikeRebuiltIndex) {
  TempDir dir;
  write_jsonl_records(dir.file("recs.jsonl"), 40, 6, 101);
  auto result = run_cli(dir, "build-index --input " + dir.file("recs.jsonl") +
                                 " --output " + dir.file("idx.bin"));
  ASSERT_EQ(result.exit_code, 0);

  const auto reloaded = dprdm::load_index(dir.file("idx.bin"));
  const auto rebuilt =
      dprdm::build_index(dprdm::read_embedding_records(dir.file("idx.bin")));
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> query(6);
  double norm = 0.0;
  for (auto& x : query) {
    x = gauss(rng);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : query) x /= norm;
  const auto a = dprdm::knn(reloaded, query, 7);
  const auto b = dprdm::knn(rebuilt, query, 7);
  ASSERT_EQ(a.entries.size(), b.entries.size());
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    EXPECT_EQ(a.entries[i].id, b.entries[i].id);
    EXPECT_EQ(a.entries[i].score, b.entries[i].score);
  }
}

class CliRetrieveTest : public ::testing::Test {
 protected:
  void SetUp() override {
    write_jsonl_records(dir_.file("priv.jsonl"), 60, 8, 201);
    write_jsonl_records(dir_.file("pub.jsonl"), 40, 8, 202, 1000);
    write_jsonl_records(dir_.file("queries.jsonl"), 5, 8, 203, 9000, true);
    ASSERT_EQ(run_cli(dir_, "build-index --input " + dir_.file("priv.jsonl") +
                                " --output " + dir_.file("priv.bin"))
                  .exit_code,
              0);
    ASSERT_EQ(run_cli(dir_, "build-index --input " + dir_.file("pub.jsonl") +
                                " --output " + dir_.file("pub.bin"))
                  .exit_code,
              0);
    ASSERT_EQ(run_cli(dir_, "build-index --input " + dir_.file("queries.jsonl") +
                                " --output " + dir_.file("queries.bin"))
                  .exit_code,
              0);
    std::ofstream params(dir_.file("params.json"));
    params << R"({"k": 3, "q": 0.9, "sigma": 0.1, "lambda": 0.5})" << "\n";
  }

  std::string retrieve_args(const std::string& ledger, const std::string& output,
                            const std::string& extra = "") {
    return "retrieve --private-index " + dir_.file("priv.bin") +
           " --public-index " + dir_.file("pub.bin") + " --queries " +
           dir_.file("queries.bin") + " --params " + dir_.file("params.json") +
           " --ledger " + dir_.file(ledger) + " --output " + dir_.file(output) +
           " --target-eps 200 --target-delta 1e-6 --target-t 2 --seed 7 " +
           extra;
  }

  TempDir dir_;
};

TEST_F(CliRetrieveTest, StopsAtBudgetWithPartialOutput) {
  const auto result = run_cli(dir_, retrieve_args("a.ledger", "cond.jsonl",
                                                  "--json"));
  EXPECT_EQ(result.exit_code, 1);
  EXPECT_NE(result.out.find("budget exhausted after 2"), std::string::npos);
  std::ifstream lines(dir_.file("cond.jsonl"));
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    if (!line.empty()) ++count;
  }
  EXPECT_EQ(count, 2);
}

TEST_F(CliRetrieveTest, FixedSeedReplaysBitExactly) {
  ASSERT_EQ(run_cli(dir_, retrieve_args("b1.ledger", "c1.bin")).exit_code, 1);
  ASSERT_EQ(run_cli(dir_, retrieve_args("b2.ledger", "c2.bin")).exit_code, 1);
  EXPECT_EQ(read_file(dir_.file("c1.bin")), read_file(dir_.file("c2.bin")));
  EXPECT_GT(read_file(dir_.file("c1.bin")).size(), 0u);
}

TEST_F(CliRetrieveTest, SidecarReplayReproducesOutput) {
  ASSERT_EQ(run_cli(dir_, retrieve_args("s1.ledger", "s1.bin")).exit_code, 1);
  // Replay from the sidecar, overriding only ledger and output.
  const auto result = run_cli(
      dir_, "--config " + dir_.file("s1.bin.meta.json") + " retrieve --ledger " +
                dir_.file("s2.ledger") + " --output " + dir_.file("s2.bin"));
  EXPECT_EQ(result.exit_code, 1);
  EXPECT_EQ(read_file(dir_.file("s1.bin")), read_file(dir_.file("s2.bin")));
}

TEST_F(CliRetrieveTest, LambdaZeroOutputIgnoresPrivateIndex) {
  // Swap in a completely different private index; lambda = 0 output must not
  // change.
  std::ofstream params(dir_.file("params.json"));
  params << R"({"k": 3, "q": 0.9, "sigma": 0.1, "lambda": 0.0})" << "\n";
  params.close();
  ASSERT_EQ(run_cli(dir_, retrieve_args("z1.ledger", "z1.bin")).exit_code, 1);

  write_jsonl_records(dir_.file("priv2.jsonl"), 60, 8, 999);
  ASSERT_EQ(run_cli(dir_, "build-index --input " + dir_.file("priv2.jsonl") +
                              " --output " + dir_.file("priv.bin"))
                .exit_code,
            0);
  ASSERT_EQ(run_cli(dir_, retrieve_args("z2.ledger", "z2.bin")).exit_code, 1);
  EXPECT_EQ(read_file(dir_.file("z1.bin")), read_file(dir_.file("z2.bin")));
}

TEST(CliCalibrate, FindsTabulatedKAndEmitsCurve) {
  TempDir dir;
  const auto result = run_cli(
      dir,
      "calibrate --target-eps 10 --delta 1e-6 --t 10000 --sigma 0.05 "
      "--fix-q 0.01");
  ASSERT_EQ(result.exit_code, 0) << result.out;
  const json j = json::parse(result.out);
  const auto k = j.at("k").get<std::uint64_t>();
  EXPECT_GE(k, 24u);
  EXPECT_LE(k, 44u);
  EXPECT_LE(j.at("achieved_epsilon").get<double>(), 10.0);
  EXPECT_TRUE(j.at("curve").contains("orders"));
}

TEST(CliCalibrate, CalibratesQForFixedK) {
  TempDir dir;
  const auto result = run_cli(
      dir,
      "calibrate --target-eps 10 --delta 1e-6 --t 100 --sigma 0.04 --fix-k 20");
  ASSERT_EQ(result.exit_code, 0) << result.out;
  const json j = json::parse(result.out);
  const double q = j.at("q").get<double>();
  EXPECT_GE(q, 0.00132 / 3.0);
  EXPECT_LE(q, 0.00132 * 3.0);
}

TEST(CliCalibrate, UnsatisfiableExitsThree) {
  TempDir dir;
  const auto result = run_cli(
      dir,
      "calibrate --target-eps 1e-9 --delta 1e-6 --t 10000 --sigma 0.01 "
      "--fix-q 1.0 --k-max 100");
  EXPECT_EQ(result.exit_code, 3);
  EXPECT_NE(result.out.find("best_achievable_epsilon"), std::string::npos);
}

TEST(CliCalibrate, RequiresExactlyOneFixFlag) {
  TempDir dir;
  const auto both = run_cli(
      dir,
      "calibrate --target-eps 1 --delta 1e-6 --t 1 --sigma 0.1 --fix-q 0.5 "
      "--fix-k 3");
  EXPECT_EQ(both.exit_code, 2);
  const auto neither = run_cli(
      dir, "calibrate --target-eps 1 --delta 1e-6 --t 1 --sigma 0.1");
  EXPECT_EQ(neither.exit_code, 2);
}

TEST(CliSimulate, EmitsConstraintRespectingTable) {
  TempDir dir;
  const auto result = run_cli(
      dir, "simulate --n-list 1e6,1e7 --r-list 1e-4,1e-3,1e-2 --sigma 0.1 "
           "--t 1000 --output " +
               dir.file("sim.csv"));
  ASSERT_EQ(result.exit_code, 0) << result.out;
  std::ifstream in(dir.file("sim.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "n,r,k,q,sigma,t,delta,alpha_star,epsilon");
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++rows;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    ASSERT_EQ(fields.size(), 9u);
    const double n = std::stod(fields[0]);
    const double r = std::stod(fields[1]);
    const double k = std::stod(fields[2]);
    const double q = std::stod(fields[3]);
    if (fields[8] != "inf") {
      EXPECT_LE(k, r * q * n * (1.0 + 1e-12));
      EXPECT_GE(k, 1.0);
    }
  }
  EXPECT_EQ(rows, 6);
}

TEST(CliSimulate, InfeasibleCellsEmitInf) {
  TempDir dir;
  // r * n < 1 leaves no relevant record; the cell is emitted with inf.
  const auto result = run_cli(
      dir, "simulate --n-list 100 --r-list 1e-3 --sigma 0.1 --t 10 "
           "--delta 1e-6 --output " +
               dir.file("inf.csv"));
  ASSERT_EQ(result.exit_code, 0) << result.out;
  std::ifstream in(dir.file("inf.csv"));
  std::string header, line;
  std::getline(in, header);
  std::getline(in, line);
  EXPECT_NE(line.find(",inf"), std::string::npos) << line;
}

TEST(CliAttackDemo, HonorsParamsGridFile) {
  TempDir dir;
  {
    std::ofstream grid(dir.file("grid.json"));
    grid << R"({"k_list": [1, 3], "sigma_list": [0.0, 0.05], "q": 1.0,)"
         << R"( "lambda": 1.0})" << "\n";
  }
  const auto result = run_cli(
      dir, "attack-demo --blanks 12 --trials 40 --seed 2 --budget-t 2 "
           "--params-grid " +
               dir.file("grid.json") + " --output " + dir.file("grid.csv"));
  ASSERT_EQ(result.exit_code, 0) << result.out;
  std::ifstream in(dir.file("grid.csv"));
  std::string line;
  int rows = 0;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  EXPECT_EQ(rows, 4);  // 2 k values x 2 sigma values
}

TEST(CliSimulate, SingleCellMatchesLibrary) {
  TempDir dir;
  const auto result = run_cli(
      dir, "simulate --n-list 1e6 --r-list 1e-3 --sigma 0.1 --t 100 "
           "--delta 1e-6 --output " +
               dir.file("one.csv"));
  ASSERT_EQ(result.exit_code, 0);
  const auto point = dprdm::min_epsilon_over_kq(1e6, 1e-3, 0.1, 100, 1e-6);
  std::ifstream in(dir.file("one.csv"));
  std::string header, line;
  std::getline(in, header);
  std::getline(in, line);
  const auto last_comma = line.rfind(',');
  const double eps = std::stod(line.substr(last_comma + 1));
  EXPECT_NEAR(eps, point.epsilon_min, 1e-9 * point.epsilon_min);
}

TEST(CliMetrics, MatchesLibraryAndValidatesK) {
  TempDir dir;
  write_jsonl_records(dir.file("real.jsonl"), 30, 5, 301);
  write_jsonl_records(dir.file("fake.jsonl"), 20, 5, 302);
  const auto result = run_cli(dir, "metrics --real " + dir.file("real.jsonl") +
                                       " --fake " + dir.file("fake.jsonl") +
                                       " --k 5");
  ASSERT_EQ(result.exit_code, 0) << result.out;
  const json j = json::parse(result.out);

  dprdm::SampleSet real, fake;
  for (auto& rec : dprdm::read_embedding_records(dir.file("real.jsonl"))) {
    real.vectors.push_back(rec.vector);
  }
  for (auto& rec : dprdm::read_embedding_records(dir.file("fake.jsonl"))) {
    fake.vectors.push_back(rec.vector);
  }
  EXPECT_DOUBLE_EQ(j.at("density").get<double>(),
                   dprdm::density(real, fake, 5));
  EXPECT_DOUBLE_EQ(j.at("coverage").get<double>(),
                   dprdm::coverage(real, fake, 5));

  const auto bad = run_cli(dir, "metrics --real " + dir.file("real.jsonl") +
                                    " --fake " + dir.file("fake.jsonl") +
                                    " --k 30");
  EXPECT_EQ(bad.exit_code, 2);
}

TEST(CliAttackDemo, SweepShowsDilutionNoiseAndRefusal) {
  TempDir dir;
  const auto result = run_cli(
      dir, "attack-demo --blanks 24 --trials 200 --seed 3 --budget-t 2 "
           "--output " +
               dir.file("attack.csv"));
  ASSERT_EQ(result.exit_code, 0) << result.out;
  EXPECT_NE(result.out.find("served=2 refused=2"), std::string::npos);

  std::ifstream in(dir.file("attack.csv"));
  std::string line;
  std::getline(in, line);  // header
  struct Row {
    double k, sigma, mean_cosine;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    rows.push_back({std::stod(fields[0]), std::stod(fields[2]),
                    std::stod(fields[5])});
  }
  double prev_noiseless = 2.0;
  for (const auto& row : rows) {
    if (row.sigma == 0.0) {
      EXPECT_LE(row.mean_cosine, prev_noiseless + 1e-12);
      prev_noiseless = row.mean_cosine;
      if (row.k == 1.0) {
        EXPECT_NEAR(row.mean_cosine, 1.0, 1e-12);
      }
    }
  }
  // Every noisy row scores strictly below its noiseless partner.
  for (const auto& noisy : rows) {
    if (noisy.sigma == 0.0) continue;
    for (const auto& quiet : rows) {
      if (quiet.sigma == 0.0 && quiet.k == noisy.k) {
        EXPECT_LT(noisy.mean_cosine, quiet.mean_cosine) << "k=" << noisy.k;
      }
    }
  }
}

TEST_F(CliRetrieveTest, InsufficientNeighborsKeepsPartialOutput) {
  // q = 0 empties every subsample; the first query fails, nothing is
  // charged, and the (empty) partial output is still written.
  std::ofstream params(dir_.file("params.json"));
  params << R"({"k": 3, "q": 0.0, "sigma": 0.1, "lambda": 0.5})" << "\n";
  params.close();
  const auto result = run_cli(dir_, retrieve_args("n.ledger", "n.jsonl",
                                                  "--json"));
  EXPECT_EQ(result.exit_code, 2);
  EXPECT_NE(result.out.find("insufficient neighbors"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(dir_.file("n.jsonl")));
}

TEST(CliAttackDemo, AcceptsTargetFileWithRandomFillers) {
  TempDir dir;
  // A 16-dimensional target with 24 fillers exercises the random
  // near-orthogonal filler construction (d <= blanks).
  {
    std::ofstream out(dir.file("target.jsonl"));
    json rec = {{"id", 42}, {"vector", std::vector<double>(16, 0.25)}};
    out << rec.dump() << "\n";
  }
  const auto result = run_cli(
      dir, "attack-demo --target " + dir.file("target.jsonl") +
               " --blanks 24 --trials 50 --seed 9 --budget-t 2 --output " +
               dir.file("attack.csv"));
  ASSERT_EQ(result.exit_code, 0) << result.out;
  std::ifstream in(dir.file("attack.csv"));
  std::string line;
  std::getline(in, line);
  std::getline(in, line);  // k=1, sigma=0 row
  const auto mean_field = [&line] {
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    return std::stod(fields[5]);
  }();
  EXPECT_NEAR(mean_field, 1.0, 1e-9);
}

TEST(CliGeneral, LogVerbosityEnvControlsStderr) {
  TempDir dir;
  write_jsonl_records(dir.file("r.jsonl"), 10, 3, 77);
  const std::string args = "metrics --real " + dir.file("r.jsonl") +
                           " --fake " + dir.file("r.jsonl") + " --k 2";
  const auto quiet = run_cli(dir, args);
  ASSERT_EQ(quiet.exit_code, 0);
  EXPECT_EQ(quiet.out.find("[debug]"), std::string::npos);
  const auto debug = run_cli(dir, args, "DPRDM_LOG=debug");
  ASSERT_EQ(debug.exit_code, 0);
  EXPECT_NE(debug.out.find("[debug]"), std::string::npos);
}

TEST(CliGeneral, ConfigFileSuppliesDefaultsFlagsOverride) {
  TempDir dir;
  {
    std::ofstream config(dir.file("config.json"));
    config << R"({"target_eps": 10.0, "delta": 1e-6, "t": 10000,)"
           << R"( "sigma": 0.05, "fix_q": 0.01})" << "\n";
  }
  const auto from_file = run_cli(
      dir, "--config " + dir.file("config.json") + " calibrate");
  ASSERT_EQ(from_file.exit_code, 0) << from_file.out;
  const json a = json::parse(from_file.out);
  EXPECT_GE(a.at("k").get<std::uint64_t>(), 24u);

  // A flag on the command line beats the file value.
  const auto overridden = run_cli(
      dir, "--config " + dir.file("config.json") + " calibrate --t 100");
  ASSERT_EQ(overridden.exit_code, 0) << overridden.out;
  const json b = json::parse(overridden.out);
  EXPECT_LT(b.at("k").get<std::uint64_t>(), a.at("k").get<std::uint64_t>());
}

}  // namespace
