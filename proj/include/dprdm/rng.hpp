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

#include <cmath>
#include <cstdint>

namespace dprdm {

// SplitMix64 finalizer. Every draw below is a pure function of its key, so
// streams can be replayed exactly and are independent of evaluation order.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ mix64(b));
}

// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Uniform double in (0, 1]; safe as a log() argument.
inline double uniform01_open_low(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

// Domain tags keep the subsampling draws and the noise draws disjoint even
// when they share a seed.
inline constexpr std::uint64_t kSubsampleStream = 0x53554253414d504cULL;
inline constexpr std::uint64_t kNoiseStream = 0x4e4f495345535452ULL;

// Bernoulli inclusion draw for one record, keyed by (seed, id). Reproducible
// and independent of record order.
inline bool record_included(std::uint64_t seed, std::uint64_t id, double q) {
  if (q >= 1.0) return true;
  if (q <= 0.0) return false;
  return uniform01(mix64(mix64(seed, kSubsampleStream), id)) < q;
}

// Counter-based standard-normal stream: value i is a pure function of
// (seed, stream, i). Uses Box-Muller on two counter-derived uniforms.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed, std::uint64_t stream = kNoiseStream)
      : key_(mix64(seed, stream)) {}

  double at(std::uint64_t i) const {
    const std::uint64_t pair = i >> 1;
    const double u1 = uniform01_open_low(mix64(key_, 2 * pair));
    const double u2 = uniform01(mix64(key_, 2 * pair + 1));
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    return (i & 1) ? radius * std::sin(angle) : radius * std::cos(angle);
  }

 private:
  std::uint64_t key_;
};

}  // namespace dprdm
