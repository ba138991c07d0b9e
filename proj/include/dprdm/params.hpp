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

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dprdm {

// Mechanism tuple for one retrieval configuration: number of neighbors k,
// subsample rate q, per-coordinate noise standard deviation sigma, and the
// public/private interpolation weight lambda (0 = public only, 1 = private
// only).
struct PrivacyParams {
  std::uint64_t k = 1;
  double q = 1.0;
  double sigma = 0.0;
  double lambda = 1.0;

  void validate() const {
    if (k < 1) throw std::invalid_argument("k must be at least 1");
    if (!(q >= 0.0 && q <= 1.0)) {
      throw std::invalid_argument("q must lie in [0, 1], got " + std::to_string(q));
    }
    if (!(sigma >= 0.0)) {
      throw std::invalid_argument("sigma must be nonnegative, got " +
                                  std::to_string(sigma));
    }
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
      throw std::invalid_argument("lambda must lie in [0, 1], got " +
                                  std::to_string(lambda));
    }
  }

  friend bool operator==(const PrivacyParams&, const PrivacyParams&) = default;
};

// Total privacy budget: the (epsilon, delta)-DP guarantee to maintain across
// at most t answered queries.
struct BudgetTarget {
  double epsilon = 0.0;
  double delta = 0.0;
  std::uint64_t t = 1;

  void validate() const {
    if (!(epsilon >= 0.0)) {
      throw std::invalid_argument("target epsilon must be nonnegative");
    }
    if (!(delta > 0.0 && delta < 1.0)) {
      throw std::invalid_argument("delta must lie in (0, 1), got " +
                                  std::to_string(delta));
    }
    if (t < 1) throw std::invalid_argument("query budget t must be at least 1");
  }

  friend bool operator==(const BudgetTarget&, const BudgetTarget&) = default;
};

}  // namespace dprdm
