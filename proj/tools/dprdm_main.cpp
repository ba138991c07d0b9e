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

// dprdm command-line tool: index building, private retrieval, calibration,
// trade-off simulation, quality metrics, and the adversarial leakage demo.
//
// Every command can read defaults from a JSON config file (--config); flags
// given on the command line override file values. Each run writes a metadata
// sidecar echoing the fully resolved configuration and seeds, so a run can be
// replayed bit-exactly by passing the sidecar back as --config.
//
// Exit codes: 0 success, 1 budget exhausted (partial success), 2 input error,
// 3 unsatisfiable calibration.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dprdm/accountant.hpp"
#include "dprdm/calibrator.hpp"
#include "dprdm/index.hpp"
#include "dprdm/io.hpp"
#include "dprdm/ledger.hpp"
#include "dprdm/mechanism.hpp"
#include "dprdm/metrics.hpp"
#include "dprdm/params.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitBudgetExhausted = 1;
constexpr int kExitInputError = 2;
constexpr int kExitUnsatisfiable = 3;

int log_level() {
  static const int level = [] {
    const char* env = std::getenv("DPRDM_LOG");
    if (env == nullptr) return 1;
    const std::string v(env);
    if (v == "debug") return 3;
    if (v == "info") return 2;
    if (v == "warn") return 1;
    if (v == "error") return 0;
    return 1;
  }();
  return level;
}

void log_info(const std::string& msg) {
  if (log_level() >= 2) std::cerr << "[info] " << msg << "\n";
}

void log_debug(const std::string& msg) {
  if (log_level() >= 3) std::cerr << "[debug] " << msg << "\n";
}

std::string snake_case(std::string flag) {
  while (!flag.empty() && flag.front() == '-') flag.erase(flag.begin());
  for (char& c : flag) {
    if (c == '-') c = '_';
  }
  return flag;
}

// Per-command view of the config file plus the resolved values actually used.
// Flags win over file values; everything resolved lands in the sidecar.
class RunConfig {
 public:
  RunConfig(CLI::App* cmd, nlohmann::json file) : cmd_(cmd), file_(std::move(file)) {}

  template <typename T>
  T resolve(const std::string& flag, T flag_value) {
    const std::string key = snake_case(flag);
    T value = flag_value;
    if (cmd_->count(flag) == 0 && file_.contains(key)) {
      value = file_.at(key).get<T>();
    }
    resolved_[key] = value;
    return value;
  }

  // Like resolve() for optional flags; absent everywhere stays nullopt.
  template <typename T>
  std::optional<T> resolve_optional(const std::string& flag,
                                    const std::optional<T>& flag_value) {
    const std::string key = snake_case(flag);
    std::optional<T> value = flag_value;
    if (cmd_->count(flag) == 0 && file_.contains(key) && !file_.at(key).is_null()) {
      value = file_.at(key).get<T>();
    }
    if (value.has_value()) {
      resolved_[key] = *value;
    } else {
      resolved_[key] = nullptr;
    }
    return value;
  }

  void note(const std::string& key, const nlohmann::json& value) {
    resolved_[key] = value;
  }

  const nlohmann::json& resolved() const { return resolved_; }

 private:
  CLI::App* cmd_;
  nlohmann::json file_;
  nlohmann::json resolved_;
};

nlohmann::json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open config file");
  nlohmann::json j;
  in >> j;
  // A sidecar from a previous run carries the config under "config".
  if (j.contains("config") && j.at("config").is_object()) {
    return j.at("config");
  }
  return j;
}

void write_sidecar(const std::string& command, const RunConfig& config,
                   const std::vector<std::string>& outputs,
                   const nlohmann::json& results, const std::string& meta_out,
                   const std::string& default_anchor) {
  std::string path = meta_out;
  if (path.empty()) {
    path = default_anchor.empty() ? command + "_meta.json"
                                  : default_anchor + ".meta.json";
  }
  nlohmann::json sidecar = {{"command", command},
                            {"config", config.resolved()},
                            {"outputs", outputs},
                            {"results", results}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot write metadata sidecar");
  out << sidecar.dump(2) << "\n";
  log_debug("sidecar written to " + path);
}

dprdm::PrivacyParams params_from_json(const nlohmann::json& j) {
  dprdm::PrivacyParams params;
  params.k = j.at("k").get<std::uint64_t>();
  params.q = j.at("q").get<double>();
  params.sigma = j.at("sigma").get<double>();
  params.lambda = j.at("lambda").get<double>();
  params.validate();
  return params;
}

nlohmann::json params_to_json(const dprdm::PrivacyParams& p) {
  return {{"k", p.k}, {"q", p.q}, {"sigma", p.sigma}, {"lambda", p.lambda}};
}

// ---------------------------------------------------------------------------
// build-index

int cmd_build_index(CLI::App* cmd, const nlohmann::json& file_config,
                    const std::string& input_flag, const std::string& output_flag,
                    const std::string& meta_out) {
  RunConfig config(cmd, file_config);
  const std::string input = config.resolve<std::string>("--input", input_flag);
  const std::string output = config.resolve<std::string>("--output", output_flag);
  if (input.empty() || output.empty()) {
    std::cerr << "build-index requires --input and --output\n";
    return kExitInputError;
  }
  const auto records = dprdm::read_embedding_records(input);
  const auto index = dprdm::build_index(records);
  dprdm::save_index(index, output);
  std::cout << "count=" << index.count() << " dim=" << index.dim() << "\n";
  write_sidecar("build-index", config, {output},
                {{"count", index.count()}, {"dim", index.dim()}}, meta_out,
                output);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// retrieve

int cmd_retrieve(CLI::App* cmd, const nlohmann::json& file_config,
                 std::string private_path, std::string public_path,
                 std::string queries_path, std::string params_path,
                 std::string ledger_path, std::uint64_t seed,
                 std::string output_path, bool json_output, double target_eps,
                 double target_delta, std::uint64_t target_t,
                 const std::string& meta_out) {
  RunConfig config(cmd, file_config);
  private_path = config.resolve<std::string>("--private-index", private_path);
  public_path = config.resolve<std::string>("--public-index", public_path);
  queries_path = config.resolve<std::string>("--queries", queries_path);
  params_path = config.resolve<std::string>("--params", params_path);
  ledger_path = config.resolve<std::string>("--ledger", ledger_path);
  seed = config.resolve<std::uint64_t>("--seed", seed);
  output_path = config.resolve<std::string>("--output", output_path);
  json_output = config.resolve<bool>("--json", json_output);
  target_eps = config.resolve<double>("--target-eps", target_eps);
  target_delta = config.resolve<double>("--target-delta", target_delta);
  target_t = config.resolve<std::uint64_t>("--target-t", target_t);

  for (const auto& [name, value] :
       {std::pair<const char*, const std::string&>{"--private-index", private_path},
        {"--public-index", public_path},
        {"--queries", queries_path},
        {"--params", params_path},
        {"--ledger", ledger_path},
        {"--output", output_path}}) {
    if (value.empty()) {
      std::cerr << "retrieve requires " << name << "\n";
      return kExitInputError;
    }
  }

  const auto private_index = dprdm::load_index(private_path);
  const auto public_index = dprdm::load_index(public_path);
  const auto queries = dprdm::read_embedding_records(queries_path);
  const auto params = params_from_json(load_config_file(params_path));
  config.note("resolved_params", params_to_json(params));

  const dprdm::BudgetTarget target{target_eps, target_delta, target_t};
  auto ledger = dprdm::BudgetLedger::open(ledger_path, target, params);
  log_info("ledger open: charged " + std::to_string(ledger.charged()) + " of " +
           std::to_string(target.t));

  std::vector<dprdm::EmbeddingRecord> binary_out;
  std::ofstream jsonl_out;
  if (json_output) {
    jsonl_out.open(output_path, std::ios::trunc);
    if (!jsonl_out) {
      std::cerr << output_path << ": cannot open for writing\n";
      return kExitInputError;
    }
  }

  std::size_t served = 0;
  bool exhausted = false;
  std::string failure;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const std::uint64_t query_seed = dprdm::mix64(seed, i);
    dprdm::PrivatizedConditioning out;
    try {
      out = dprdm::private_retrieve(private_index, public_index,
                                    queries[i].vector, params, query_seed,
                                    ledger);
    } catch (const dprdm::BudgetExhaustedError&) {
      exhausted = true;
      break;
    } catch (const std::exception& e) {
      // Insufficient neighbors, a malformed query, and similar per-query
      // failures abort the run but keep the partial output valid up to the
      // last served query.
      failure = "query " + std::to_string(i) + ": " + e.what();
      break;
    }
    if (json_output) {
      nlohmann::json line = {{"query_index", i},
                             {"query_id", queries[i].id},
                             {"seed", query_seed},
                             {"z", out.z},
                             {"interpolated", out.interpolated}};
      jsonl_out << line.dump() << "\n";
    } else {
      // Record ids: query_index * (k + 1) + slot; slot 0 is z, slots 1..k are
      // the interpolated conditioning vectors.
      const std::uint64_t base = i * (params.k + 1);
      binary_out.push_back({base, out.z});
      for (std::size_t j = 0; j < out.interpolated.size(); ++j) {
        binary_out.push_back({base + 1 + j, out.interpolated[j]});
      }
    }
    ++served;
  }
  if (!json_output) {
    dprdm::write_embedding_file(output_path, binary_out, private_index.dim());
  }

  nlohmann::json results = {{"served", served},
                            {"queries", queries.size()},
                            {"charged", ledger.charged()},
                            {"remaining", ledger.remaining()}};
  write_sidecar("retrieve", config, {output_path}, results, meta_out,
                output_path);
  if (exhausted) {
    std::cout << "budget exhausted after " << served << " queries\n";
    return kExitBudgetExhausted;
  }
  if (!failure.empty()) {
    std::cerr << "error: " << failure << " (served " << served
              << " queries before failing)\n";
    return kExitInputError;
  }
  std::cout << "served=" << served << " remaining=" << ledger.remaining()
            << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// calibrate

int cmd_calibrate(CLI::App* cmd, const nlohmann::json& file_config,
                  double target_eps, double delta, std::uint64_t t, double sigma,
                  std::optional<double> fix_q, std::optional<std::uint64_t> fix_k,
                  std::uint64_t k_max, double q_tol, const std::string& meta_out) {
  RunConfig config(cmd, file_config);
  target_eps = config.resolve<double>("--target-eps", target_eps);
  delta = config.resolve<double>("--delta", delta);
  t = config.resolve<std::uint64_t>("--t", t);
  sigma = config.resolve<double>("--sigma", sigma);
  fix_q = config.resolve_optional<double>("--fix-q", fix_q);
  fix_k = config.resolve_optional<std::uint64_t>("--fix-k", fix_k);
  k_max = config.resolve<std::uint64_t>("--k-max", k_max);
  q_tol = config.resolve<double>("--q-tol", q_tol);

  if (fix_q.has_value() == fix_k.has_value()) {
    std::cerr << "calibrate requires exactly one of --fix-q / --fix-k\n";
    return kExitInputError;
  }
  const dprdm::BudgetTarget target{target_eps, delta, t};

  nlohmann::json results;
  try {
    if (fix_q.has_value()) {
      const std::uint64_t k = dprdm::calibrate_k(target, sigma, *fix_q, k_max);
      const dprdm::RdpCurve curve =
          dprdm::mechanism_rdp({k, *fix_q, sigma, 1.0});
      const dprdm::DpGuarantee g =
          dprdm::to_approx_dp(dprdm::compose(curve, t), delta);
      results = {{"calibrated", "k"},
                 {"k", k},
                 {"q", *fix_q},
                 {"achieved_epsilon", g.epsilon},
                 {"best_order", g.best_order},
                 {"conversion", "improved"},
                 {"curve", curve}};
    } else {
      const double q = dprdm::calibrate_q(target, sigma, *fix_k, q_tol);
      nlohmann::json curve_json;
      double achieved = 0.0;
      double best_order = 0.0;
      if (q > 0.0) {
        const dprdm::RdpCurve curve =
            dprdm::mechanism_rdp({*fix_k, q, sigma, 1.0});
        const dprdm::DpGuarantee g =
            dprdm::to_approx_dp(dprdm::compose(curve, t), delta);
        curve_json = curve;
        achieved = g.epsilon;
        best_order = g.best_order;
      }
      results = {{"calibrated", "q"},
                 {"k", *fix_k},
                 {"q", q},
                 {"achieved_epsilon", achieved},
                 {"best_order", best_order},
                 {"conversion", "improved"},
                 {"curve", curve_json}};
    }
  } catch (const dprdm::UnsatisfiableError& e) {
    std::cerr << "unsatisfiable: " << e.what() << "\n";
    std::cout << nlohmann::json(
                     {{"unsatisfiable", true},
                      {"best_achievable_epsilon", e.best_achievable_epsilon}})
                     .dump(2)
              << "\n";
    return kExitUnsatisfiable;
  }
  std::cout << results.dump(2) << "\n";
  write_sidecar("calibrate", config, {}, results, meta_out, "");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// simulate

int cmd_simulate(CLI::App* cmd, const nlohmann::json& file_config,
                 std::vector<double> n_list, std::vector<double> r_list,
                 double sigma, std::uint64_t t, std::optional<double> delta,
                 std::string output_path, const std::string& meta_out) {
  RunConfig config(cmd, file_config);
  n_list = config.resolve<std::vector<double>>("--n-list", n_list);
  r_list = config.resolve<std::vector<double>>("--r-list", r_list);
  sigma = config.resolve<double>("--sigma", sigma);
  t = config.resolve<std::uint64_t>("--t", t);
  delta = config.resolve_optional<double>("--delta", delta);
  output_path = config.resolve<std::string>("--output", output_path);
  if (n_list.empty() || r_list.empty() || output_path.empty()) {
    std::cerr << "simulate requires --n-list, --r-list and --output\n";
    return kExitInputError;
  }

  std::vector<dprdm::SweepRow> rows;
  for (double n : n_list) {
    // Convention when --delta is absent: delta = 1/n per dataset size.
    const double cell_delta = delta.value_or(1.0 / n);
    for (double r : r_list) {
      dprdm::SweepRow row;
      row.n = n;
      row.r = r;
      row.sigma = sigma;
      row.t = t;
      row.delta = cell_delta;
      try {
        const dprdm::TradeoffPoint point =
            dprdm::min_epsilon_over_kq(n, r, sigma, t, cell_delta);
        row.k = point.k_star;
        row.q = point.q_star;
        row.alpha_star = point.alpha_star;
        row.epsilon = point.epsilon_min;
      } catch (const std::invalid_argument&) {
        // Infeasible cell (concept absent): emitted with epsilon = inf.
      }
      rows.push_back(row);
    }
  }
  std::ofstream out(output_path, std::ios::trunc);
  if (!out) {
    std::cerr << output_path << ": cannot open for writing\n";
    return kExitInputError;
  }
  dprdm::write_sweep_csv(out, rows);
  std::cout << "wrote " << rows.size() << " rows to " << output_path << "\n";
  write_sidecar("simulate", config, {output_path},
                {{"rows", rows.size()},
                 {"delta_mode", delta.has_value() ? "fixed" : "1/n"}},
                meta_out, output_path);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// metrics

int cmd_metrics(CLI::App* cmd, const nlohmann::json& file_config,
                std::string real_path, std::string fake_path, std::size_t k,
                const std::string& meta_out) {
  RunConfig config(cmd, file_config);
  real_path = config.resolve<std::string>("--real", real_path);
  fake_path = config.resolve<std::string>("--fake", fake_path);
  k = config.resolve<std::size_t>("--k", k);
  if (real_path.empty() || fake_path.empty()) {
    std::cerr << "metrics requires --real and --fake\n";
    return kExitInputError;
  }
  dprdm::SampleSet real{.vectors = {}, .label = "real"};
  dprdm::SampleSet fake{.vectors = {}, .label = "fake"};
  for (auto& rec : dprdm::read_embedding_records(real_path)) {
    real.vectors.push_back(std::move(rec.vector));
  }
  for (auto& rec : dprdm::read_embedding_records(fake_path)) {
    fake.vectors.push_back(std::move(rec.vector));
  }
  const auto report = dprdm::compute_metrics(real, fake, k);
  const nlohmann::json j = dprdm::to_json(report);
  std::cout << j.dump(2) << "\n";
  write_sidecar("metrics", config, {}, j, meta_out, "");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// attack-demo

int cmd_attack_demo(CLI::App* cmd, const nlohmann::json& file_config,
                    std::string target_path, std::size_t blanks,
                    std::string grid_path, std::uint64_t trials,
                    std::uint64_t seed, std::string output_path,
                    std::uint64_t budget_t, const std::string& meta_out) {
  RunConfig config(cmd, file_config);
  target_path = config.resolve<std::string>("--target", target_path);
  blanks = config.resolve<std::size_t>("--blanks", blanks);
  grid_path = config.resolve<std::string>("--params-grid", grid_path);
  trials = config.resolve<std::uint64_t>("--trials", trials);
  seed = config.resolve<std::uint64_t>("--seed", seed);
  output_path = config.resolve<std::string>("--output", output_path);
  budget_t = config.resolve<std::uint64_t>("--budget-t", budget_t);
  if (output_path.empty()) {
    std::cerr << "attack-demo requires --output\n";
    return kExitInputError;
  }
  if (blanks < 1) {
    std::cerr << "attack-demo requires at least one blank record\n";
    return kExitInputError;
  }

  // Target vector: from file, or basis vector 0 in dimension blanks + 1.
  std::vector<double> target_vec;
  if (!target_path.empty()) {
    const auto records = dprdm::read_embedding_records(target_path);
    if (records.empty()) {
      std::cerr << target_path << ": no target record\n";
      return kExitInputError;
    }
    target_vec = records.front().vector;
    const double norm = dprdm::l2_norm(target_vec);
    if (!(norm > 1e-12)) {
      std::cerr << target_path << ": zero-norm target\n";
      return kExitInputError;
    }
    for (auto& x : target_vec) x /= norm;
  } else {
    target_vec.assign(blanks + 1, 0.0);
    target_vec[0] = 1.0;
  }
  const std::size_t d = target_vec.size();

  // Fillers: exactly orthogonal to the target, near-orthogonal pairwise.
  dprdm::NormalStream filler_noise(dprdm::mix64(seed, 0x66696c6cULL));
  std::vector<dprdm::EmbeddingRecord> blanks_only;
  std::vector<dprdm::EmbeddingRecord> adversarial;
  const std::uint64_t target_id = 0;
  adversarial.push_back({target_id, target_vec});
  for (std::size_t i = 0; i < blanks; ++i) {
    std::vector<double> v(d);
    if (d > blanks && target_path.empty()) {
      v.assign(d, 0.0);
      v[i + 1] = 1.0;  // exact basis fillers in the synthetic construction
    } else {
      for (std::size_t c = 0; c < d; ++c) {
        v[c] = filler_noise.at(i * d + c);
      }
      double proj = dprdm::dot(v, target_vec);
      for (std::size_t c = 0; c < d; ++c) v[c] -= proj * target_vec[c];
      const double norm = dprdm::l2_norm(v);
      for (auto& x : v) x /= norm;
    }
    blanks_only.push_back({i + 1, v});
    adversarial.push_back({i + 1, std::move(v)});
  }
  const auto private_index = dprdm::build_index(adversarial);
  const auto public_index = dprdm::build_index(blanks_only);

  // Parameter grid: k rows swept across noiseless and noisy settings.
  std::vector<std::uint64_t> k_list = {1, 2, 4, 6, 8, 16};
  std::vector<double> sigma_list = {0.0, 0.1};
  double q = 1.0;
  double lambda = 1.0;
  if (!grid_path.empty()) {
    const nlohmann::json grid = load_config_file(grid_path);
    if (grid.contains("k_list")) k_list = grid.at("k_list").get<std::vector<std::uint64_t>>();
    if (grid.contains("sigma_list")) sigma_list = grid.at("sigma_list").get<std::vector<double>>();
    if (grid.contains("q")) q = grid.at("q").get<double>();
    if (grid.contains("lambda")) lambda = grid.at("lambda").get<double>();
  }
  config.note("k_list", k_list);
  config.note("sigma_list", sigma_list);
  config.note("q", q);
  config.note("lambda", lambda);

  std::ofstream out(output_path, std::ios::trunc);
  if (!out) {
    std::cerr << output_path << ": cannot open for writing\n";
    return kExitInputError;
  }
  out.precision(17);
  out << "k,q,sigma,lambda,trials,mean_cosine,max_cosine,hit_rate\n";
  for (std::uint64_t k : k_list) {
    if (k > blanks + 1) continue;
    for (double sigma : sigma_list) {
      const dprdm::PrivacyParams params{k, q, sigma, lambda};
      const auto report = dprdm::leakage_probe(
          private_index, public_index, target_id, target_vec, params, trials,
          dprdm::mix64(seed, k * 1000 + static_cast<std::uint64_t>(sigma * 1e6)));
      out << k << "," << q << "," << sigma << "," << lambda << "," << trials
          << "," << report.mean_cosine << "," << report.max_cosine << ","
          << report.hit_rate << "\n";
      log_info("k=" + std::to_string(k) + " sigma=" + std::to_string(sigma) +
               " mean_cosine=" + std::to_string(report.mean_cosine));
    }
  }

  // Budget-enforcement phase: a small ledger refuses after budget_t charges.
  nlohmann::json budget_result;
  {
    double sigma = 0.1;
    for (double s : sigma_list) {
      if (s > 0.0) {
        sigma = s;
        break;
      }
    }
    const dprdm::PrivacyParams params{k_list.front(), q, sigma, 1.0};
    const dprdm::DpGuarantee g = dprdm::to_approx_dp(
        dprdm::compose(dprdm::mechanism_rdp(params), budget_t), 1e-6);
    const dprdm::BudgetTarget target{g.epsilon * 1.0001 + 1e-9, 1e-6, budget_t};
    const std::string ledger_path = output_path + ".ledger";
    std::remove(ledger_path.c_str());
    auto ledger = dprdm::BudgetLedger::open(ledger_path, target, params);
    std::uint64_t served = 0, refused = 0;
    for (std::uint64_t i = 0; i < budget_t + 2; ++i) {
      try {
        dprdm::private_retrieve(private_index, public_index, target_vec, params,
                                dprdm::mix64(seed, 0xb0d9e7ULL + i), ledger);
        ++served;
      } catch (const dprdm::BudgetExhaustedError&) {
        ++refused;
      }
    }
    std::cout << "budget: served=" << served << " refused=" << refused
              << " (t=" << budget_t << ")\n";
    budget_result = {{"served", served}, {"refused", refused}, {"t", budget_t}};
  }

  std::cout << "wrote leakage table to " << output_path << "\n";
  write_sidecar("attack-demo", config, {output_path},
                {{"budget", budget_result}}, meta_out, output_path);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"differentially private retrieval engine"};
  app.require_subcommand(1);

  std::string config_path;
  std::string meta_out;
  app.add_option("--config", config_path,
                 "JSON config file; flags override file values");
  app.add_option("--meta-out", meta_out, "metadata sidecar path");

  // build-index
  auto* build = app.add_subcommand("build-index",
                                   "build a retrieval index from embeddings");
  std::string bi_input, bi_output;
  build->add_option("--input", bi_input, "embedding file (binary or JSONL)");
  build->add_option("--output", bi_output, "output index file");

  // retrieve
  auto* retrieve = app.add_subcommand("retrieve", "privatized retrieval");
  std::string rt_private, rt_public, rt_queries, rt_params, rt_ledger, rt_output;
  std::uint64_t rt_seed = 0;
  bool rt_json = false;
  double rt_eps = 10.0, rt_delta = 1e-6;
  std::uint64_t rt_t = 1;
  retrieve->add_option("--private-index", rt_private, "private index file");
  retrieve->add_option("--public-index", rt_public, "public index file");
  retrieve->add_option("--queries", rt_queries, "query embedding file");
  retrieve->add_option("--params", rt_params,
                       "JSON file with k, q, sigma, lambda");
  retrieve->add_option("--ledger", rt_ledger, "budget ledger path");
  retrieve->add_option("--seed", rt_seed, "base RNG seed");
  retrieve->add_option("--output", rt_output, "output conditioning file");
  retrieve->add_flag("--json", rt_json, "write line-delimited JSON output");
  retrieve->add_option("--target-eps", rt_eps, "budget target epsilon");
  retrieve->add_option("--target-delta", rt_delta, "budget target delta");
  retrieve->add_option("--target-t", rt_t, "query budget T");

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate", "solve for k or q");
  double cal_eps = 0.0, cal_delta = 1e-6, cal_sigma = 0.0, cal_qtol = 1e-4;
  std::uint64_t cal_t = 1, cal_kmax = 1000000;
  std::optional<double> cal_fix_q;
  std::optional<std::uint64_t> cal_fix_k;
  calibrate->add_option("--target-eps", cal_eps, "target epsilon");
  calibrate->add_option("--delta", cal_delta, "target delta");
  calibrate->add_option("--t", cal_t, "query budget T");
  calibrate->add_option("--sigma", cal_sigma, "noise standard deviation");
  calibrate->add_option("--fix-q", cal_fix_q, "fix q, calibrate k");
  calibrate->add_option("--fix-k", cal_fix_k, "fix k, calibrate q");
  calibrate->add_option("--k-max", cal_kmax, "upper bound of the k search");
  calibrate->add_option("--q-tol", cal_qtol, "relative tolerance of q bisection");

  // simulate
  auto* simulate = app.add_subcommand(
      "simulate", "privacy-utility trade-off over dataset size and density");
  std::vector<double> sim_n, sim_r;
  double sim_sigma = 0.1;
  std::uint64_t sim_t = 1000;
  std::optional<double> sim_delta;
  std::string sim_output;
  simulate->add_option("--n-list", sim_n, "dataset sizes")->delimiter(',');
  simulate->add_option("--r-list", sim_r, "concept densities")->delimiter(',');
  simulate->add_option("--sigma", sim_sigma, "noise standard deviation");
  simulate->add_option("--t", sim_t, "query budget T");
  simulate->add_option("--delta", sim_delta,
                       "target delta (default: 1/n per cell)");
  simulate->add_option("--output", sim_output, "output CSV path");

  // metrics
  auto* metrics = app.add_subcommand("metrics", "density and coverage");
  std::string me_real, me_fake;
  std::size_t me_k = 5;
  metrics->add_option("--real", me_real, "real sample embedding file");
  metrics->add_option("--fake", me_fake, "generated sample embedding file");
  metrics->add_option("--k", me_k, "neighborhood size K");

  // attack-demo
  auto* attack = app.add_subcommand("attack-demo",
                                    "adversarial retrieval leakage sweep");
  std::string at_target, at_grid, at_output;
  std::size_t at_blanks = 100;
  std::uint64_t at_trials = 1000, at_seed = 0, at_budget_t = 3;
  attack->add_option("--target", at_target,
                     "target embedding file (default: synthetic basis vector)");
  attack->add_option("--blanks", at_blanks, "number of blank filler records");
  attack->add_option("--params-grid", at_grid,
                     "JSON grid: k_list, sigma_list, q, lambda");
  attack->add_option("--trials", at_trials, "trials per configuration");
  attack->add_option("--seed", at_seed, "base RNG seed");
  attack->add_option("--output", at_output, "output CSV path");
  attack->add_option("--budget-t", at_budget_t,
                     "ledger budget for the refusal demonstration");

  CLI11_PARSE(app, argc, argv);

  try {
    nlohmann::json file_config = nlohmann::json::object();
    if (!config_path.empty()) file_config = load_config_file(config_path);

    if (build->parsed()) {
      return cmd_build_index(build, file_config, bi_input, bi_output, meta_out);
    }
    if (retrieve->parsed()) {
      return cmd_retrieve(retrieve, file_config, rt_private, rt_public,
                          rt_queries, rt_params, rt_ledger, rt_seed, rt_output,
                          rt_json, rt_eps, rt_delta, rt_t, meta_out);
    }
    if (calibrate->parsed()) {
      return cmd_calibrate(calibrate, file_config, cal_eps, cal_delta, cal_t,
                           cal_sigma, cal_fix_q, cal_fix_k, cal_kmax, cal_qtol,
                           meta_out);
    }
    if (simulate->parsed()) {
      return cmd_simulate(simulate, file_config, sim_n, sim_r, sim_sigma, sim_t,
                          sim_delta, sim_output, meta_out);
    }
    if (metrics->parsed()) {
      return cmd_metrics(metrics, file_config, me_real, me_fake, me_k, meta_out);
    }
    if (attack->parsed()) {
      return cmd_attack_demo(attack, file_config, at_target, at_blanks, at_grid,
                             at_trials, at_seed, at_output, at_budget_t,
                             meta_out);
    }
  } catch (const dprdm::UnsatisfiableError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUnsatisfiable;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInputError;
  }
  return kExitInputError;
}
