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
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "dprdm/rng.hpp"

namespace dprdm {

// One identified unit vector. Vectors are L2-normalized when an index is
// built; raw records may carry any nonzero vector.
struct EmbeddingRecord {
  std::uint64_t id = 0;
  std::vector<double> vector;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double l2_norm(std::span<const double> v) {
  return std::sqrt(dot(v, v));
}

// Immutable store of unit-norm embeddings answering exact max-inner-product
// k-NN. Safe for concurrent read-only queries once built.
class RetrievalIndex {
 public:
  RetrievalIndex() = default;

  std::size_t count() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }

  std::uint64_t id_at(std::size_t pos) const { return ids_[pos]; }
  std::span<const double> vector_at(std::size_t pos) const {
    return {data_.data() + pos * dim_, dim_};
  }
  std::optional<std::size_t> position_of(std::uint64_t id) const {
    auto it = pos_.find(id);
    if (it == pos_.end()) return std::nullopt;
    return it->second;
  }

 private:
  friend RetrievalIndex build_index(const std::vector<EmbeddingRecord>& records);

  std::size_t dim_ = 0;
  std::vector<std::uint64_t> ids_;
  std::vector<double> data_;  // row-major, count x dim
  std::unordered_map<std::uint64_t, std::size_t> pos_;
};

// Builds an index from raw records: validates ids and dimensions, then stores
// L2-normalized copies.
inline RetrievalIndex build_index(const std::vector<EmbeddingRecord>& records) {
  if (records.empty()) throw std::invalid_argument("empty dataset");
  RetrievalIndex index;
  index.dim_ = records.front().vector.size();
  if (index.dim_ == 0) {
    throw std::invalid_argument("record " + std::to_string(records.front().id) +
                                ": zero-dimensional vector");
  }
  index.ids_.reserve(records.size());
  index.data_.reserve(records.size() * index.dim_);
  index.pos_.reserve(records.size());
  for (const auto& rec : records) {
    if (rec.vector.size() != index.dim_) {
      throw std::invalid_argument("record " + std::to_string(rec.id) +
                                  ": dimension mismatch (got " +
                                  std::to_string(rec.vector.size()) + ", want " +
                                  std::to_string(index.dim_) + ")");
    }
    if (!index.pos_.emplace(rec.id, index.ids_.size()).second) {
      throw std::invalid_argument("record " + std::to_string(rec.id) +
                                  ": duplicate id");
    }
    const double norm = l2_norm(rec.vector);
    if (!(norm > 1e-12)) {
      throw std::invalid_argument("record " + std::to_string(rec.id) +
                                  ": zero-norm vector");
    }
    index.ids_.push_back(rec.id);
    for (double v : rec.vector) index.data_.push_back(v / norm);
  }
  return index;
}

// Poisson-subsampling mask over one index: each record is included
// independently with probability `rate`, keyed by (seed, record id).
struct SubsetMask {
  std::vector<std::uint8_t> included;
  double rate = 0.0;
  std::uint64_t seed = 0;

  std::size_t included_count() const {
    return static_cast<std::size_t>(
        std::accumulate(included.begin(), included.end(), std::uint64_t{0}));
  }
};

inline SubsetMask poisson_subsample(const RetrievalIndex& index, double q,
                                    std::uint64_t seed) {
  if (!(q >= 0.0 && q <= 1.0)) {
    throw std::invalid_argument("subsample rate must lie in [0, 1], got " +
                                std::to_string(q));
  }
  SubsetMask mask;
  mask.rate = q;
  mask.seed = seed;
  mask.included.resize(index.count());
  for (std::size_t i = 0; i < index.count(); ++i) {
    mask.included[i] = record_included(seed, index.id_at(i), q) ? 1 : 0;
  }
  return mask;
}

struct Neighbor {
  std::uint64_t id = 0;
  double score = 0.0;
  std::vector<double> vector;
};

// Entries sorted by descending inner product, ties broken by ascending id.
struct NeighborSet {
  std::vector<Neighbor> entries;
};

// Exact k-NN under inner-product similarity, optionally restricted to the
// mask. Returns min(k, #included) entries. The query must be unit-norm; a
// drift of up to 1e-3 is renormalized, anything further is rejected.
inline NeighborSet knn(const RetrievalIndex& index, std::span<const double> query,
                       std::size_t k, const SubsetMask* mask = nullptr) {
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (query.size() != index.dim()) {
    throw std::invalid_argument("query dimension mismatch (got " +
                                std::to_string(query.size()) + ", want " +
                                std::to_string(index.dim()) + ")");
  }
  if (mask != nullptr && mask->included.size() != index.count()) {
    throw std::invalid_argument("mask size does not match index count");
  }
  const double norm = l2_norm(query);
  if (std::abs(norm - 1.0) > 1e-3) {
    throw std::invalid_argument("query is not unit-norm (|v| = " +
                                std::to_string(norm) + ")");
  }
  std::vector<double> unit(query.begin(), query.end());
  // Renormalize drifted queries; a deviation within double-precision noise
  // is left untouched so already-unit queries score bit-identically.
  if (std::abs(norm - 1.0) > 1e-12) {
    for (double& v : unit) v /= norm;
  }

  struct Hit {
    double score;
    std::uint64_t id;
    std::size_t pos;
  };
  // better(a, b): a ranks strictly ahead of b.
  auto better = [](const Hit& a, const Hit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  };

  std::vector<Hit> hits;
  hits.reserve(index.count());
  for (std::size_t pos = 0; pos < index.count(); ++pos) {
    if (mask != nullptr && !mask->included[pos]) continue;
    hits.push_back({dot(unit, index.vector_at(pos)), index.id_at(pos), pos});
  }
  if (hits.empty()) throw std::runtime_error("empty effective dataset");

  const std::size_t take = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + take, hits.end(), better);

  NeighborSet out;
  out.entries.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    auto vec = index.vector_at(hits[i].pos);
    out.entries.push_back(
        {hits[i].id, hits[i].score, std::vector<double>(vec.begin(), vec.end())});
  }
  return out;
}

}  // namespace dprdm
