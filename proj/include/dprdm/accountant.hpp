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
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dprdm/params.hpp"

// Renyi-DP accounting for the subsampled Gaussian mechanism.
//
// The per-query guarantee is the order-alpha Renyi divergence
//
//   eps(alpha) = D_alpha((1-q) N(0, s^2) + q N(1, s^2) || N(0, s^2))
//
// where s is the noise multiplier (noise stddev divided by the query's L2
// sensitivity). Integer orders use the exact binomial expansion; fractional
// orders fall back to adaptive numerical quadrature, which also serves as an
// independent cross-check of the closed form. All epsilons are in nats.

namespace dprdm {

// RDP curve: eps(alpha) sampled on an ascending grid of orders alpha > 1.
struct RdpCurve {
  std::vector<double> orders;
  std::vector<double> epsilons;
  double noise_multiplier = 0.0;
  double q = 0.0;
  std::uint64_t t = 1;  // compositions folded into `epsilons`

  bool all_zero() const {
    for (double e : epsilons) {
      if (e != 0.0) return false;
    }
    return true;
  }
};

inline void to_json(nlohmann::json& j, const RdpCurve& curve) {
  j = nlohmann::json{{"orders", curve.orders},
                     {"epsilons", curve.epsilons},
                     {"noise_multiplier", curve.noise_multiplier},
                     {"q", curve.q},
                     {"t", curve.t}};
}

inline void from_json(const nlohmann::json& j, RdpCurve& curve) {
  j.at("orders").get_to(curve.orders);
  j.at("epsilons").get_to(curve.epsilons);
  j.at("noise_multiplier").get_to(curve.noise_multiplier);
  j.at("q").get_to(curve.q);
  j.at("t").get_to(curve.t);
}

enum class RdpConversion { kImproved, kClassical };

struct DpGuarantee {
  double epsilon = 0.0;
  double delta = 0.0;
  double best_order = 0.0;
  bool clamped = false;  // set when every converted value was negative
  RdpConversion conversion = RdpConversion::kImproved;
};

// Integer orders 2..64 plus 128 and 256. The high orders tighten the
// conversion for strongly composed, strongly amplified settings.
inline std::vector<double> default_orders() {
  std::vector<double> orders;
  for (int a = 2; a <= 64; ++a) orders.push_back(a);
  orders.push_back(128);
  orders.push_back(256);
  return orders;
}

// Orders used by the privacy-utility simulator: integers 2..64 only, the
// range standard DP accounting toolkits evaluate. Keeping the simulator on
// this grid makes its trade-off curves comparable with published ones.
inline std::vector<double> simulator_orders() {
  std::vector<double> orders;
  for (int a = 2; a <= 64; ++a) orders.push_back(a);
  return orders;
}

struct QuadratureError : std::runtime_error {
  QuadratureError(const std::string& msg, double achieved)
      : std::runtime_error(msg), achieved_tolerance(achieved) {}
  double achieved_tolerance;
};

namespace detail {

inline double log_comb(double n, double j) {
  return std::lgamma(n + 1.0) - std::lgamma(j + 1.0) - std::lgamma(n - j + 1.0);
}

// log(expm1(x)) without overflow; x must be positive.
inline double log_expm1(double x) {
  if (x > 36.0) return x;  // e^-x below double precision
  return std::log(std::expm1(x));
}

inline void check_sgm_args(double q, double noise_multiplier) {
  if (!(q >= 0.0 && q <= 1.0)) {
    throw std::invalid_argument("q must lie in [0, 1], got " + std::to_string(q));
  }
  if (!(noise_multiplier > 0.0)) {
    throw std::invalid_argument("noise multiplier must be positive, got " +
                                std::to_string(noise_multiplier));
  }
}

// Exact integer-order evaluation via the binomial expansion. Works on the
// excess sum A - 1 = sum_{j>=2} C(a,j) q^j (1-q)^(a-j) (e^{j(j-1)/(2 s^2)} - 1)
// so that the j = 0, 1 terms cancel exactly and small epsilons keep full
// relative precision; everything runs in log space.
inline double sgm_rdp_integer(double q, double s, std::int64_t alpha) {
  if (q == 0.0) return 0.0;
  if (q == 1.0) return static_cast<double>(alpha) / (2.0 * s * s);
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  const double inv_2s2 = 1.0 / (2.0 * s * s);
  std::vector<double> log_terms;
  log_terms.reserve(static_cast<std::size_t>(alpha - 1));
  const double a = static_cast<double>(alpha);
  for (std::int64_t j = 2; j <= alpha; ++j) {
    const double dj = static_cast<double>(j);
    const double x = dj * (dj - 1.0) * inv_2s2;
    log_terms.push_back(log_comb(a, dj) + dj * log_q + (a - dj) * log_1mq +
                        log_expm1(x));
  }
  const double m = *std::max_element(log_terms.begin(), log_terms.end());
  double sum = 0.0;
  for (double t : log_terms) sum += std::exp(t - m);
  const double log_excess = m + std::log(sum);
  if (log_excess > 36.0) return log_excess / (a - 1.0);
  return std::log1p(std::exp(log_excess)) / (a - 1.0);
}

// Gauss-Kronrod 15/7 nodes and weights on [-1, 1].
inline constexpr double kGk15Nodes[15] = {
    -0.991455371120812639206854697526329,
    -0.949107912342758524526189684047851,
    -0.864864423359769072789712788640926,
    -0.741531185599394439863864773280788,
    -0.586087235467691130294144838258730,
    -0.405845151377397166906606412076961,
    -0.207784955007898467600689403773245,
    0.0,
    0.207784955007898467600689403773245,
    0.405845151377397166906606412076961,
    0.586087235467691130294144838258730,
    0.741531185599394439863864773280788,
    0.864864423359769072789712788640926,
    0.949107912342758524526189684047851,
    0.991455371120812639206854697526329};

inline constexpr double kGk15Weights[15] = {
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
    0.204432940075298892414161999234649,
    0.190350578064785409913256402421014,
    0.169004726639267902826583426598550,
    0.140653259715525918745189590510238,
    0.104790010322250183839876322541518,
    0.063092092629978553290700663189204,
    0.022935322010529224963732008058970};

inline constexpr double kGauss7Weights[7] = {
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
    0.381830050505118944950369775488975,
    0.279705391489276667901467771423780,
    0.129484966168869693270611432679082};

struct GkEstimate {
  double value = 0.0;
  double error = 0.0;
};

template <typename F>
GkEstimate gk15(const F& f, double lo, double hi) {
  const double center = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  double kronrod = 0.0;
  double gauss = 0.0;
  for (int i = 0; i < 15; ++i) {
    const double y = f(center + half * kGk15Nodes[i]);
    kronrod += kGk15Weights[i] * y;
    if (i % 2 == 1) gauss += kGauss7Weights[i / 2] * y;
  }
  kronrod *= half;
  gauss *= half;
  return {kronrod, std::abs(kronrod - gauss)};
}

// Globally adaptive quadrature: repeatedly bisect the interval with the
// largest error estimate until abs/rel targets are met.
template <typename F>
double adaptive_integrate(const F& f, double lo, double hi, double abs_tol,
                          double rel_tol, double* achieved = nullptr) {
  struct Segment {
    double lo, hi, value, error;
  };
  std::vector<Segment> segments;
  const int initial = 64;
  segments.reserve(4096);
  for (int i = 0; i < initial; ++i) {
    const double a = lo + (hi - lo) * static_cast<double>(i) / initial;
    const double b = lo + (hi - lo) * static_cast<double>(i + 1) / initial;
    auto est = gk15(f, a, b);
    segments.push_back({a, b, est.value, est.error});
  }
  const std::size_t max_segments = 20000;
  while (true) {
    double total = 0.0, err = 0.0;
    std::size_t worst = 0;
    for (std::size_t i = 0; i < segments.size(); ++i) {
      total += segments[i].value;
      err += segments[i].error;
      if (segments[i].error > segments[worst].error) worst = i;
    }
    if (err <= std::max(abs_tol, rel_tol * std::abs(total))) {
      if (achieved != nullptr) *achieved = err;
      return total;
    }
    if (segments.size() >= max_segments || segments[worst].error == 0.0) {
      throw QuadratureError(
          "quadrature did not converge (achieved tolerance " +
              std::to_string(err) + ")",
          err);
    }
    Segment seg = segments[worst];
    const double mid = 0.5 * (seg.lo + seg.hi);
    auto left = gk15(f, seg.lo, mid);
    auto right = gk15(f, mid, seg.hi);
    segments[worst] = {seg.lo, mid, left.value, left.error};
    segments.push_back({mid, seg.hi, right.value, right.error});
  }
}

// Integrand helpers, in the standard-normal variable t:
//   u(t)    = t/s - 1/(2 s^2)                       (privacy-loss shift)
//   L(t)    = log((1-q) + q e^{u})                  (log likelihood ratio)
//   g(t)    = log phi(t) + alpha L(t)               (log integrand)
struct SgmIntegrand {
  double q, s, alpha;
  static constexpr double kLogInvSqrt2Pi = -0.918938533204672741780329736406;

  double u(double t) const { return t / s - 1.0 / (2.0 * s * s); }

  double L(double t) const {
    const double ut = u(t);
    if (q == 1.0) return ut;
    if (ut > 0.0) return ut + std::log(q + (1.0 - q) * std::exp(-ut));
    return std::log1p(q * std::expm1(ut));
  }

  double log_phi(double t) const { return kLogInvSqrt2Pi - 0.5 * t * t; }

  double g(double t) const { return log_phi(t) + alpha * L(t); }
};

}  // namespace detail

// Numerical oracle for the SGM Renyi divergence at any real order alpha > 1.
// Integrates the divergence integrand adaptively over the real line. For
// small divergences the identity  integral(phi * (ratio - 1)) = 0  is
// subtracted analytically so the result keeps full relative precision; large
// divergences are integrated in shifted log space.
inline double quadrature_rdp(double q, double noise_multiplier, double alpha) {
  detail::check_sgm_args(q, noise_multiplier);
  if (!(alpha > 1.0)) {
    throw std::invalid_argument("order alpha must exceed 1, got " +
                                std::to_string(alpha));
  }
  if (q == 0.0) return 0.0;
  const detail::SgmIntegrand f{q, noise_multiplier, alpha};

  const double t_lo = -45.0;
  const double t_hi = std::max(45.0, alpha / noise_multiplier + 45.0);

  // Locate the integrand peak on a uniform scan. The peak has curvature of
  // order one in t, so the scan keeps at least a few points per unit length
  // however wide the window gets.
  double peak = -std::numeric_limits<double>::infinity();
  const long scan = std::min<long>(
      2000000, std::max<long>(4096, static_cast<long>(8.0 * (t_hi - t_lo))));
  for (long i = 0; i <= scan; ++i) {
    const double t = t_lo + (t_hi - t_lo) * static_cast<double>(i) / scan;
    peak = std::max(peak, f.g(t));
  }

  if (peak <= 25.0) {
    // Small regime: integrate h = phi * (expm1(alpha L) - alpha q expm1(u)),
    // whose subtracted term integrates to zero exactly.
    auto h = [&f](double t) {
      const double lphi = f.log_phi(t);
      const double phi = std::exp(lphi);
      const double aL = f.alpha * f.L(t);
      const double lead =
          aL <= 36.0 ? phi * std::expm1(aL) : std::exp(lphi + aL) - phi;
      const double corr = f.alpha * f.q * (std::exp(lphi + f.u(t)) - phi);
      return lead - corr;
    };
    const double excess =
        detail::adaptive_integrate(h, t_lo, t_hi, 1e-13, 1e-10);
    return std::log1p(std::max(excess, 0.0)) / (alpha - 1.0);
  }

  // Large regime: shift by the peak and integrate in linear space.
  auto shifted = [&f, peak](double t) { return std::exp(f.g(t) - peak); };
  const double integral =
      detail::adaptive_integrate(shifted, t_lo, t_hi, 1e-300, 1e-11);
  return (peak + std::log(integral)) / (alpha - 1.0);
}

// Per-query RDP of the SGM at a single order: exact binomial closed form for
// integer orders, quadrature for fractional ones.
inline double sgm_rdp_at(double q, double noise_multiplier, double alpha) {
  detail::check_sgm_args(q, noise_multiplier);
  if (!(alpha > 1.0)) {
    throw std::invalid_argument("order alpha must exceed 1, got " +
                                std::to_string(alpha));
  }
  const double rounded = std::nearbyint(alpha);
  if (std::abs(alpha - rounded) <= 1e-9 && rounded <= 1e6) {
    return detail::sgm_rdp_integer(q, noise_multiplier,
                                   static_cast<std::int64_t>(rounded));
  }
  return quadrature_rdp(q, noise_multiplier, alpha);
}

inline RdpCurve sgm_rdp(double q, double noise_multiplier,
                        const std::vector<double>& orders) {
  if (orders.empty()) throw std::invalid_argument("order grid is empty");
  RdpCurve curve;
  curve.orders = orders;
  curve.noise_multiplier = noise_multiplier;
  curve.q = q;
  curve.t = 1;
  curve.epsilons.reserve(orders.size());
  for (double alpha : orders) {
    curve.epsilons.push_back(sgm_rdp_at(q, noise_multiplier, alpha));
  }
  return curve;
}

// Additive composition over t queries.
inline RdpCurve compose(RdpCurve curve, std::uint64_t t) {
  for (double& e : curve.epsilons) e *= static_cast<double>(t);
  curve.t *= t;
  return curve;
}

// RDP -> (epsilon, delta)-DP conversion, minimized over the stored orders.
//
// Improved bound:  eps(a) + log((a-1)/a) - (log delta + log a)/(a - 1)
// Classical bound: eps(a) + log(1/delta)/(a - 1)
//
// Both formulas are evaluated literally, even on an all-zero curve; the
// residual value there is the conversion overhead of the finite order grid.
inline DpGuarantee to_approx_dp(const RdpCurve& curve, double delta,
                                RdpConversion conversion = RdpConversion::kImproved) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("delta must lie in (0, 1), got " +
                                std::to_string(delta));
  }
  if (curve.orders.empty() || curve.orders.size() != curve.epsilons.size()) {
    throw std::invalid_argument("curve is empty or inconsistent");
  }
  DpGuarantee out;
  out.delta = delta;
  out.conversion = conversion;
  double best = std::numeric_limits<double>::infinity();
  double best_order = curve.orders.front();
  for (std::size_t i = 0; i < curve.orders.size(); ++i) {
    const double a = curve.orders[i];
    const double rdp = curve.epsilons[i];
    double eps;
    if (conversion == RdpConversion::kImproved) {
      eps = rdp + std::log((a - 1.0) / a) -
            (std::log(delta) + std::log(a)) / (a - 1.0);
    } else {
      eps = rdp + std::log(1.0 / delta) / (a - 1.0);
    }
    if (eps < best) {
      best = eps;
      best_order = a;
    }
  }
  if (best < 0.0) {
    out.clamped = true;
    best = 0.0;
  }
  out.epsilon = best;
  out.best_order = best_order;
  return out;
}

// Per-query RDP of the full retrieval mechanism. The k-neighbor mean of unit
// vectors has L2 sensitivity 2/k, so the effective noise multiplier is
// sigma * k / 2. With lambda = 0 the private dataset never influences the
// output and the curve is identically zero.
inline RdpCurve mechanism_rdp(const PrivacyParams& params,
                              const std::vector<double>& orders = default_orders()) {
  params.validate();
  if (params.lambda == 0.0 || params.q == 0.0) {
    RdpCurve curve;
    curve.orders = orders;
    curve.epsilons.assign(orders.size(), 0.0);
    curve.noise_multiplier =
        params.sigma * static_cast<double>(params.k) / 2.0;
    curve.q = params.q;
    curve.t = 1;
    return curve;
  }
  if (params.sigma == 0.0) {
    throw std::invalid_argument(
        "non-private configuration: lambda > 0 and q > 0 require sigma > 0");
  }
  return sgm_rdp(params.q, params.sigma * static_cast<double>(params.k) / 2.0,
                 orders);
}

}  // namespace dprdm
