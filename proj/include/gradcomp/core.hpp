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

#include <Eigen/Core>

#include <stdexcept>
#include <string>
#include <string_view>

namespace gradcomp {

inline constexpr std::string_view kVersion = "0.1.0";

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Invalid operator parameters or dimension mismatch.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A CompressedMessage whose payload is inconsistent with its header.
class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An operator was combined with another in a way that breaks a required
// property (e.g. a sparsifier as the inner quantizer of Kashin compression).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// RIP estimation could not find any usable (delta, eta) pair.
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Polytope construction failed its containment check.
class ConstructionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Convex-weight solver did not reach its residual target.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws ParameterError unless `x` is a non-empty vector of finite values.
template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& x, std::string_view what) {
  if (x.size() < 1) {
    throw ParameterError(std::string(what) + ": empty vector");
  }
  if (!x.allFinite()) {
    throw ParameterError(std::string(what) + ": non-finite entry");
  }
}

template <typename Derived>
void require_dim(const Eigen::MatrixBase<Derived>& x, Index dim, std::string_view what) {
  if (x.size() != dim) {
    throw ParameterError(std::string(what) + ": expected dimension " + std::to_string(dim) +
                         ", got " + std::to_string(x.size()));
  }
}

// ||c - x||^2 / ||x||^2, the per-draw normalized error. Zero x gives 0.
template <typename DerivedA, typename DerivedB>
double normalized_error(const Eigen::MatrixBase<DerivedA>& compressed,
                        const Eigen::MatrixBase<DerivedB>& x) {
  const double denom = x.squaredNorm();
  if (denom == 0.0) return 0.0;
  return (compressed - x).squaredNorm() / denom;
}

}  // namespace gradcomp
