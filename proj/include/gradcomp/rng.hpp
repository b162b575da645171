// Copyright 2026 The gradcomp Authors. All Rights Reserved.
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
// =============================================================================

#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "gradcomp/core.hpp"

namespace gradcomp {

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view text);

class Sampler;

/// Immutable handle naming one reproducible random stream.
///
/// A stream is identified by (seed, stream_id). Child streams are derived with
/// split(): child.stream_id = mix(stream_id, child), where
/// mix(a, b) = splitmix64(a * 0x9E3779B97F4A7C15 ^ splitmix64(b)).
/// The engine behind sampler() is std::mt19937_64 seeded with
/// splitmix64(seed ^ splitmix64(stream_id ^ 0xD1B54A32D192ED03)).
/// Equal (seed, stream_id) always replays the same draws.
class RngStream {
 public:
  constexpr explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0) noexcept
      : seed_(seed), stream_id_(stream_id) {}

  constexpr std::uint64_t seed() const noexcept { return seed_; }
  constexpr std::uint64_t stream_id() const noexcept { return stream_id_; }

  RngStream split(std::uint64_t child) const noexcept;
  // Children keyed by name use fnv1a64(name) as the child id.
  RngStream split(std::string_view name) const noexcept;

  Sampler sampler() const;

  friend constexpr bool operator==(const RngStream&, const RngStream&) = default;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
};

/// Mutable draw state for one stream. Distributions are implemented here
/// rather than taken from <random> so draws are identical across standard
/// library implementations.
class Sampler {
 public:
  explicit Sampler(std::uint64_t engine_seed) : engine_(engine_seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Standard normal, Box-Muller; values come in cached pairs.
  double normal();
  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  // Index in [0, weights.size()) drawn proportionally to nonnegative weights.
  Index categorical(const Vector& weights);

  Vector gaussian(Index dim);
  Matrix gaussian(Index rows, Index cols);
  // k distinct indices from [0, dim), sorted ascending.
  std::vector<Index> subset(Index dim, Index k);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace gradcomp
