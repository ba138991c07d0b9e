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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dprdm/accountant.hpp"
#include "dprdm/params.hpp"

// Inverse problems over the accountant: find the k, q, or (k, q) pair meeting
// a budget target, and the privacy-utility simulator that minimizes epsilon
// over (k, q) subject to the concept-relevance constraint k <= r * q * n.

namespace dprdm {

struct UnsatisfiableError : std::runtime_error {
  UnsatisfiableError(const std::string& msg, double achieved)
      : std::runtime_error(msg), best_achievable_epsilon(achieved) {}
  double best_achievable_epsilon;
};

namespace detail {

inline double converted_epsilon(double q, std::uint64_t k, double sigma,
                                const BudgetTarget& target,
                                const std::vector<double>& orders) {
  PrivacyParams params{k, q, sigma, 1.0};
  const RdpCurve curve = mechanism_rdp(params, orders);
  return to_approx_dp(compose(curve, target.t), target.delta).epsilon;
}

}  // namespace detail

// Smallest k in [1, k_max] whose composed, converted epsilon meets the
// target, for fixed q and sigma. Binary search; converted epsilon is
// nonincreasing in k because the noise multiplier sigma * k / 2 grows with k.
inline std::uint64_t calibrate_k(const BudgetTarget& target, double sigma,
                                 double q, std::uint64_t k_max,
                                 const std::vector<double>& orders = default_orders()) {
  target.validate();
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  if (k_max < 1) throw std::invalid_argument("k_max must be at least 1");
  auto eps_at = [&](std::uint64_t k) {
    return detail::converted_epsilon(q, k, sigma, target, orders);
  };
  const double at_max = eps_at(k_max);
  if (at_max > target.epsilon) {
    throw UnsatisfiableError(
        "no k <= " + std::to_string(k_max) + " meets the target; epsilon at "
        "k_max is " + std::to_string(at_max),
        at_max);
  }
  std::uint64_t lo = 1, hi = k_max;  // invariant: eps(hi) <= target
  while (lo < hi) {
    const std::uint64_t mid = lo + (hi - lo) / 2;
    if (eps_at(mid) <= target.epsilon) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return hi;
}

// Largest q in [0, 1] (within relative tolerance tol) whose composed,
// converted epsilon meets the target, for fixed k and sigma. Bisection;
// epsilon is nondecreasing in q. The q = 0 endpoint reads no private data
// and is vacuously private, so it satisfies any target regardless of the
// finite-grid conversion overhead.
inline double calibrate_q(const BudgetTarget& target, double sigma,
                          std::uint64_t k, double tol = 1e-4,
                          const std::vector<double>& orders = default_orders()) {
  target.validate();
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (!(tol > 0.0 && tol < 1.0)) throw std::invalid_argument("tol out of range");
  if (target.epsilon == 0.0) return 0.0;
  auto satisfies = [&](double q) {
    if (q == 0.0) return true;
    return detail::converted_epsilon(q, k, sigma, target, orders) <=
           target.epsilon;
  };
  if (satisfies(1.0)) return 1.0;
  double lo = 0.0, hi = 1.0;  // invariant: lo satisfies, hi does not
  while (hi - lo > tol * hi) {
    if (hi < 1e-12) return 0.0;  // target met only in the q -> 0 limit
    const double mid = 0.5 * (lo + hi);
    if (satisfies(mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

// One point of the privacy-utility trade-off: the minimized epsilon for
// answering t queries about a concept of density r in a dataset of size n.
struct TradeoffPoint {
  double n = 0.0;
  double r = 0.0;
  double sigma = 0.0;
  std::uint64_t t = 0;
  double delta = 0.0;
  double epsilon_min = 0.0;
  std::uint64_t k_star = 0;
  double q_star = 0.0;
  double alpha_star = 0.0;
};

// Minimizes the composed, converted epsilon over k in [1, n] and q in (0, 1]
// subject to k <= r * q * n. Geometric grid over both axes (64 points each)
// plus one local refinement pass around the best q. For fixed q epsilon is
// nonincreasing in k, so only the largest feasible k per q can attain the
// grid minimum; dominated cells are skipped.
inline TradeoffPoint min_epsilon_over_kq(double n, double r, double sigma,
                                         std::uint64_t t, double delta,
                                         const std::vector<double>& orders =
                                             simulator_orders()) {
  if (!(n >= 1.0)) throw std::invalid_argument("n must be at least 1");
  if (!(r > 0.0 && r <= 1.0)) throw std::invalid_argument("r must lie in (0, 1]");
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  if (t < 1) throw std::invalid_argument("t must be at least 1");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta out of range");
  if (r * n < 1.0) {
    throw std::invalid_argument(
        "concept absent: r * n < 1 leaves no relevant record to retrieve");
  }

  TradeoffPoint best;
  best.n = n;
  best.r = r;
  best.sigma = sigma;
  best.t = t;
  best.delta = delta;
  best.epsilon_min = std::numeric_limits<double>::infinity();

  auto consider = [&](double q, std::uint64_t k) {
    if (k < 1 || static_cast<double>(k) > r * q * n) return;
    PrivacyParams params{k, q, sigma, 1.0};
    const RdpCurve composed = compose(mechanism_rdp(params, orders), t);
    const DpGuarantee g = to_approx_dp(composed, delta);
    if (g.epsilon < best.epsilon_min) {
      best.epsilon_min = g.epsilon;
      best.k_star = k;
      best.q_star = q;
      best.alpha_star = g.best_order;
    }
  };

  const double q_min = std::max(1.0 / (r * n), 1e-9);
  constexpr int kGridPoints = 64;
  auto scan_q = [&](double q_lo, double q_hi, int points) {
    const double log_lo = std::log(q_lo);
    const double log_hi = std::log(q_hi);
    for (int i = 0; i < points; ++i) {
      const double q =
          std::min(1.0, std::exp(log_lo + (log_hi - log_lo) * i /
                                              std::max(1, points - 1)));
      // Largest feasible k: the constraint boundary, capped at n. Any k-grid
      // cell below it is dominated.
      const double bound = std::min(r * q * n, n);
      consider(q, static_cast<std::uint64_t>(std::floor(bound)));
    }
  };
  scan_q(q_min, 1.0, kGridPoints);

  // Refinement pass: re-scan between the grid neighbors of the best q.
  if (std::isfinite(best.epsilon_min)) {
    const double step = std::exp((std::log(1.0) - std::log(q_min)) /
                                 std::max(1, kGridPoints - 1));
    const double lo = std::max(q_min, best.q_star / step);
    const double hi = std::min(1.0, best.q_star * step);
    if (hi > lo) scan_q(lo, hi, kGridPoints / 2);
  }

  if (!std::isfinite(best.epsilon_min)) {
    throw UnsatisfiableError("no feasible (k, q) pair found",
                             std::numeric_limits<double>::infinity());
  }
  return best;
}

// One row of a parameter sweep: the converted epsilon for a fixed
// configuration. n and r are carried only when the row came from the
// trade-off simulator; plain sweeps leave them NaN.
struct SweepRow {
  double n = std::numeric_limits<double>::quiet_NaN();
  double r = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t k = 0;
  double q = 0.0;
  double sigma = 0.0;
  std::uint64_t t = 0;
  double delta = 0.0;
  double alpha_star = 0.0;
  double epsilon = std::numeric_limits<double>::infinity();
};

inline std::vector<SweepRow> sweep(const std::vector<std::uint64_t>& ks,
                                   const std::vector<double>& qs,
                                   const std::vector<double>& sigmas,
                                   const std::vector<std::uint64_t>& ts,
                                   double delta,
                                   const std::vector<double>& orders =
                                       default_orders()) {
  std::vector<SweepRow> rows;
  rows.reserve(ks.size() * qs.size() * sigmas.size() * ts.size());
  for (std::uint64_t k : ks) {
    for (double q : qs) {
      for (double sigma : sigmas) {
        RdpCurve base = mechanism_rdp(PrivacyParams{k, q, sigma, 1.0}, orders);
        for (std::uint64_t t : ts) {
          const DpGuarantee g = to_approx_dp(compose(base, t), delta);
          SweepRow row;
          row.k = k;
          row.q = q;
          row.sigma = sigma;
          row.t = t;
          row.delta = delta;
          row.alpha_star = g.best_order;
          row.epsilon = g.epsilon;
          rows.push_back(row);
        }
      }
    }
  }
  return rows;
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "n,r,k,q,sigma,t,delta,alpha_star,epsilon\n";
  out.precision(17);
  for (const auto& row : rows) {
    if (std::isnan(row.n)) {
      out << ",";
    } else {
      out << row.n << ",";
    }
    if (std::isnan(row.r)) {
      out << ",";
    } else {
      out << row.r << ",";
    }
    out << row.k << "," << row.q << "," << row.sigma << "," << row.t << ","
        << row.delta << "," << row.alpha_star << ",";
    if (std::isinf(row.epsilon)) {
      out << "inf";
    } else {
      out << row.epsilon;
    }
    out << "\n";
  }
}

}  // namespace dprdm
