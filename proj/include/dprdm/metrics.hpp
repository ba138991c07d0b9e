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
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

// K-nearest-neighbor-ball quality metrics over two embedding sets.
//
//   density  = (1 / (K |F|)) sum_j sum_i 1[ F_j inside B(R_i, NND_K(R_i)) ]
//   coverage = (1 / |R|)     sum_i 1[ exists j with F_j inside that ball ]
//
// NND_K(R_i) is the Euclidean distance from R_i to its K-th nearest other
// point of R (self excluded). Ball membership is strict (d < radius); with
// identical sets in general position this makes density exactly 1 and keeps
// coverage in [0, 1]. Density can exceed 1 when fakes pile into dense
// regions.

namespace dprdm {

struct SampleSet {
  std::vector<std::vector<double>> vectors;
  std::string label;
};

namespace detail {

inline void check_set(const SampleSet& set, const char* name) {
  if (set.vectors.empty()) {
    throw std::invalid_argument(std::string(name) + " sample set is empty");
  }
  const std::size_t d = set.vectors.front().size();
  for (const auto& v : set.vectors) {
    if (v.size() != d) {
      throw std::invalid_argument(std::string(name) +
                                  " sample set has inconsistent dimensions");
    }
  }
}

inline double squared_distance(const std::vector<double>& a,
                               const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return s;
}

// Squared K-th nearest-neighbor radius of every point within its own set.
inline std::vector<double> knn_radii_squared(const SampleSet& set, std::size_t K) {
  const std::size_t n = set.vectors.size();
  std::vector<double> radii(n);
  std::vector<double> dists;
  dists.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    dists.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      dists.push_back(squared_distance(set.vectors[i], set.vectors[j]));
    }
    std::nth_element(dists.begin(), dists.begin() + (K - 1), dists.end());
    radii[i] = dists[K - 1];
  }
  return radii;
}

}  // namespace detail

// Euclidean distance from point i to its K-th nearest other point in `set`.
inline double nnd_k(const SampleSet& set, std::size_t i, std::size_t K) {
  detail::check_set(set, "the");
  if (i >= set.vectors.size()) throw std::invalid_argument("index out of range");
  if (K < 1 || K >= set.vectors.size()) {
    throw std::invalid_argument("K must satisfy 1 <= K < set size, got K = " +
                                std::to_string(K) + " with " +
                                std::to_string(set.vectors.size()) + " points");
  }
  std::vector<double> dists;
  dists.reserve(set.vectors.size() - 1);
  for (std::size_t j = 0; j < set.vectors.size(); ++j) {
    if (j == i) continue;
    dists.push_back(detail::squared_distance(set.vectors[i], set.vectors[j]));
  }
  std::nth_element(dists.begin(), dists.begin() + (K - 1), dists.end());
  return std::sqrt(dists[K - 1]);
}

namespace detail {

inline void check_pair(const SampleSet& real, const SampleSet& fake,
                       std::size_t K) {
  check_set(real, "real");
  check_set(fake, "fake");
  if (real.vectors.front().size() != fake.vectors.front().size()) {
    throw std::invalid_argument("real and fake sets have different dimensions");
  }
  if (K < 1 || K >= real.vectors.size()) {
    throw std::invalid_argument("K must satisfy 1 <= K < |real|, got K = " +
                                std::to_string(K) + " with " +
                                std::to_string(real.vectors.size()) +
                                " real points");
  }
}

}  // namespace detail

inline double density(const SampleSet& real, const SampleSet& fake,
                      std::size_t K) {
  detail::check_pair(real, fake, K);
  const std::vector<double> radii = detail::knn_radii_squared(real, K);
  std::uint64_t inside = 0;
  for (const auto& f : fake.vectors) {
    for (std::size_t i = 0; i < real.vectors.size(); ++i) {
      if (detail::squared_distance(f, real.vectors[i]) < radii[i]) ++inside;
    }
  }
  return static_cast<double>(inside) /
         (static_cast<double>(K) * static_cast<double>(fake.vectors.size()));
}

inline double coverage(const SampleSet& real, const SampleSet& fake,
                       std::size_t K) {
  detail::check_pair(real, fake, K);
  const std::vector<double> radii = detail::knn_radii_squared(real, K);
  std::uint64_t covered = 0;
  for (std::size_t i = 0; i < real.vectors.size(); ++i) {
    for (const auto& f : fake.vectors) {
      if (detail::squared_distance(f, real.vectors[i]) < radii[i]) {
        ++covered;
        break;
      }
    }
  }
  return static_cast<double>(covered) /
         static_cast<double>(real.vectors.size());
}

struct MetricsReport {
  double density = 0.0;
  double coverage = 0.0;
  std::size_t K = 0;
  std::size_t n_real = 0;
  std::size_t n_fake = 0;
};

inline MetricsReport compute_metrics(const SampleSet& real, const SampleSet& fake,
                                     std::size_t K) {
  MetricsReport report;
  report.density = density(real, fake, K);
  report.coverage = coverage(real, fake, K);
  report.K = K;
  report.n_real = real.vectors.size();
  report.n_fake = fake.vectors.size();
  return report;
}

// Report schema reserves slots for externally computed model-based scores so
// downstream tables can be assembled from one document.
inline nlohmann::json to_json(const MetricsReport& report) {
  return nlohmann::json{{"density", report.density},
                        {"coverage", report.coverage},
                        {"K", report.K},
                        {"n_real", report.n_real},
                        {"n_fake", report.n_fake},
                        {"fid", nullptr},
                        {"clip_score", nullptr}};
}

}  // namespace dprdm
