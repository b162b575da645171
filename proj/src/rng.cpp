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

#include "gradcomp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace gradcomp {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

RngStream RngStream::split(std::uint64_t child) const noexcept {
  return RngStream(seed_, splitmix64((stream_id_ * 0x9E3779B97F4A7C15ULL) ^ splitmix64(child)));
}

RngStream RngStream::split(std::string_view name) const noexcept { return split(fnv1a64(name)); }

Sampler RngStream::sampler() const {
  return Sampler(splitmix64(seed_ ^ splitmix64(stream_id_ ^ 0xD1B54A32D192ED03ULL)));
}

double Sampler::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Sampler::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // 1 - u lies in (0, 1], so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t Sampler::below(std::uint64_t n) {
  // Rejection on the biased low range (2^64 mod n).
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = engine_();
    if (r >= threshold) return r % n;
  }
}

Index Sampler::categorical(const Vector& weights) {
  const double total = weights.sum();
  const double target = uniform() * total;
  double acc = 0.0;
  Index last_positive = 0;
  for (Index i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last_positive = i;
    if (target < acc) return i;
  }
  return last_positive;
}

Vector Sampler::gaussian(Index dim) {
  Vector v(dim);
  for (Index i = 0; i < dim; ++i) v[i] = normal();
  return v;
}

Matrix Sampler::gaussian(Index rows, Index cols) {
  // Filled column by column.
  Matrix m(rows, cols);
  double* data = m.data();
  for (Index i = 0; i < rows * cols; ++i) data[i] = normal();
  return m;
}

std::vector<Index> Sampler::subset(Index dim, Index k) {
  std::vector<Index> pool(static_cast<std::size_t>(dim));
  std::iota(pool.begin(), pool.end(), Index{0});
  // Partial Fisher-Yates over the first k slots.
  for (Index i = 0; i < k; ++i) {
    const auto j = i + static_cast<Index>(below(static_cast<std::uint64_t>(dim - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(k));
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace gradcomp
