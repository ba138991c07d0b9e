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
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dprdm/index.hpp"
#include "dprdm/ledger.hpp"
#include "dprdm/params.hpp"
#include "dprdm/rng.hpp"

// Privatized retrieval: subsample the private index, retrieve k neighbors,
// release their noisy mean z, and interpolate with k public neighbors into
// the conditioning set e. The divisor of the mean is always the nominal k so
// the 2/k sensitivity bound holds; retrieving fewer than k neighbors is an
// error, never a renormalized mean.

namespace dprdm {

struct InsufficientNeighborsError : std::runtime_error {
  InsufficientNeighborsError(std::size_t got, std::size_t want)
      : std::runtime_error("insufficient neighbors: retrieved " +
                           std::to_string(got) + ", need " +
                           std::to_string(want)),
        retrieved(got),
        required(want) {}
  std::size_t retrieved;
  std::size_t required;
};

struct BudgetExhaustedError : std::runtime_error {
  explicit BudgetExhaustedError(std::uint64_t budget)
      : std::runtime_error("query budget exhausted (t = " +
                           std::to_string(budget) + "), remaining = 0"),
        remaining(0) {}
  std::uint64_t remaining;
};

struct PrivatizedConditioning {
  std::vector<double> z;                          // privatized aggregate
  std::vector<std::vector<double>> interpolated;  // k conditioning vectors
  std::uint64_t noise_seed = 0;
};

// Mean of exactly k retrieved neighbors plus isotropic Gaussian noise of
// per-coordinate standard deviation sigma. Deterministic given the seed.
inline std::vector<double> noisy_aggregate(const NeighborSet& neighbors,
                                           std::size_t k, double sigma,
                                           std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be nonnegative");
  if (neighbors.entries.size() < k) {
    throw InsufficientNeighborsError(neighbors.entries.size(), k);
  }
  if (neighbors.entries.size() > k) {
    throw std::invalid_argument("neighbor set has more than k entries");
  }
  const std::size_t d = neighbors.entries.front().vector.size();
  std::vector<double> z(d, 0.0);
  for (const auto& nb : neighbors.entries) {
    if (nb.vector.size() != d) {
      throw std::invalid_argument("neighbor dimension mismatch");
    }
    for (std::size_t i = 0; i < d; ++i) z[i] += nb.vector[i];
  }
  const double inv_k = 1.0 / static_cast<double>(k);
  for (double& v : z) v *= inv_k;
  if (sigma > 0.0) {
    NormalStream noise(seed);
    for (std::size_t i = 0; i < d; ++i) z[i] += sigma * noise.at(i);
  }
  return z;
}

// Entry j of the conditioning set is (1 - lambda) * O_k[j] + lambda * z.
// The endpoints are exact: lambda = 0 copies the public neighbors, lambda = 1
// produces k copies of z. Outputs are not renormalized.
inline std::vector<std::vector<double>> interpolate(
    const NeighborSet& public_neighbors, std::span<const double> z,
    double lambda, std::size_t k) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("lambda must lie in [0, 1]");
  }
  if (public_neighbors.entries.size() != k) {
    throw std::invalid_argument("need exactly k public neighbors, got " +
                                std::to_string(public_neighbors.entries.size()));
  }
  std::vector<std::vector<double>> out;
  out.reserve(k);
  if (lambda == 1.0) {
    out.assign(k, std::vector<double>(z.begin(), z.end()));
    return out;
  }
  for (const auto& nb : public_neighbors.entries) {
    if (nb.vector.size() != z.size()) {
      throw std::invalid_argument(
          "dimension mismatch between z and public neighbors");
    }
    if (lambda == 0.0) {
      out.push_back(nb.vector);
      continue;
    }
    std::vector<double> e(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      e[i] = (1.0 - lambda) * nb.vector[i] + lambda * z[i];
    }
    out.push_back(std::move(e));
  }
  return out;
}

struct RetrievalTrace {
  PrivatizedConditioning conditioning;
  std::vector<std::uint64_t> private_neighbor_ids;  // empty when lambda = 0
};

namespace detail {

// The unmetered pipeline: subsample -> private knn -> noisy aggregate ->
// public knn -> interpolate. Pure function of its inputs; budget enforcement
// is layered on top by private_retrieve.
inline RetrievalTrace retrieve_pipeline(const RetrievalIndex& private_index,
                                        const RetrievalIndex& public_index,
                                        std::span<const double> query,
                                        const PrivacyParams& params,
                                        std::uint64_t seed) {
  params.validate();
  if (private_index.dim() != public_index.dim()) {
    throw std::invalid_argument("private and public index dimensions differ");
  }
  if (public_index.count() < params.k) {
    throw std::invalid_argument("public index holds fewer than k records");
  }

  RetrievalTrace trace;
  const NeighborSet public_neighbors = knn(public_index, query, params.k);

  if (params.lambda == 0.0) {
    // Public-only path: no private record can influence any output bit.
    trace.conditioning.z.assign(private_index.dim(), 0.0);
    trace.conditioning.interpolated =
        interpolate(public_neighbors, trace.conditioning.z, 0.0, params.k);
    trace.conditioning.noise_seed = seed;
    return trace;
  }

  const SubsetMask mask = poisson_subsample(private_index, params.q, seed);
  const std::size_t included = mask.included_count();
  if (included < params.k) {
    throw InsufficientNeighborsError(included, params.k);
  }
  const NeighborSet private_neighbors = knn(private_index, query, params.k, &mask);
  for (const auto& nb : private_neighbors.entries) {
    trace.private_neighbor_ids.push_back(nb.id);
  }
  trace.conditioning.z =
      noisy_aggregate(private_neighbors, params.k, params.sigma, seed);
  trace.conditioning.interpolated =
      interpolate(public_neighbors, trace.conditioning.z, params.lambda, params.k);
  trace.conditioning.noise_seed = seed;
  return trace;
}

}  // namespace detail

// One privatized retrieval under budget enforcement. Charges exactly one
// query on success. The charge happens after both retrievals succeed but
// before noise is sampled: an insufficient-neighbors failure (or a malformed
// query) releases nothing derived from private data and is not charged,
// while any released value always has a charge behind it.
inline PrivatizedConditioning private_retrieve(const RetrievalIndex& private_index,
                                               const RetrievalIndex& public_index,
                                               std::span<const double> query,
                                               const PrivacyParams& params,
                                               std::uint64_t seed,
                                               BudgetLedger& ledger) {
  if (!(params == ledger.params())) {
    throw std::invalid_argument("params differ from the ledger's parameters");
  }
  params.validate();
  if (private_index.dim() != public_index.dim()) {
    throw std::invalid_argument("private and public index dimensions differ");
  }
  if (public_index.count() < params.k) {
    throw std::invalid_argument("public index holds fewer than k records");
  }

  const NeighborSet public_neighbors = knn(public_index, query, params.k);

  NeighborSet private_neighbors;
  if (params.lambda > 0.0) {
    const SubsetMask mask = poisson_subsample(private_index, params.q, seed);
    const std::size_t included = mask.included_count();
    if (included < params.k) {
      throw InsufficientNeighborsError(included, params.k);
    }
    private_neighbors = knn(private_index, query, params.k, &mask);
  }

  const BudgetLedger::Charge charge = ledger.charge();
  if (!charge.authorized) throw BudgetExhaustedError(ledger.target().t);

  PrivatizedConditioning out;
  if (params.lambda == 0.0) {
    out.z.assign(private_index.dim(), 0.0);
    out.interpolated = interpolate(public_neighbors, out.z, 0.0, params.k);
  } else {
    out.z = noisy_aggregate(private_neighbors, params.k, params.sigma, seed);
    out.interpolated =
        interpolate(public_neighbors, out.z, params.lambda, params.k);
  }
  out.noise_seed = seed;
  return out;
}

// Leakage measurement for one target record: runs the unmetered pipeline over
// `trials` seeds and reports cosine similarity between the released
// conditioning (the mean of the interpolated set, which equals z when
// lambda = 1) and the target vector, plus how often the target was retrieved.
struct LeakageReport {
  double mean_cosine = 0.0;
  double max_cosine = 0.0;
  double hit_rate = 0.0;  // fraction of trials with the target in N_k
  std::uint64_t trials = 0;
};

inline LeakageReport leakage_probe(const RetrievalIndex& private_index,
                                   const RetrievalIndex& public_index,
                                   std::uint64_t target_id,
                                   std::span<const double> query,
                                   const PrivacyParams& params,
                                   std::uint64_t trials,
                                   std::uint64_t base_seed = 0) {
  if (trials < 1) throw std::invalid_argument("trials must be at least 1");
  const auto target_pos = private_index.position_of(target_id);
  if (!target_pos.has_value()) {
    throw std::invalid_argument("target id " + std::to_string(target_id) +
                                " not present in the private index");
  }
  const auto target = private_index.vector_at(*target_pos);

  LeakageReport report;
  report.trials = trials;
  report.max_cosine = -1.0;
  double cosine_sum = 0.0;
  std::uint64_t hits = 0;
  std::vector<double> mean;
  for (std::uint64_t i = 0; i < trials; ++i) {
    const std::uint64_t seed = mix64(base_seed, i);
    const RetrievalTrace trace = detail::retrieve_pipeline(
        private_index, public_index, query, params, seed);
    const auto& e = trace.conditioning.interpolated;
    mean.assign(private_index.dim(), 0.0);
    for (const auto& v : e) {
      for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += v[c];
    }
    for (double& c : mean) c /= static_cast<double>(e.size());
    const double norm = l2_norm(mean);
    const double cosine = norm > 0.0 ? dot(mean, target) / norm : 0.0;
    cosine_sum += cosine;
    report.max_cosine = std::max(report.max_cosine, cosine);
    if (std::find(trace.private_neighbor_ids.begin(),
                  trace.private_neighbor_ids.end(),
                  target_id) != trace.private_neighbor_ids.end()) {
      ++hits;
    }
  }
  report.mean_cosine = cosine_sum / static_cast<double>(trials);
  report.hit_rate = static_cast<double>(hits) / static_cast<double>(trials);
  return report;
}

}  // namespace dprdm
