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

#include <memory>

#include "gradcomp/compressors.hpp"
#include "gradcomp/core.hpp"
#include "gradcomp/rng.hpp"

namespace gradcomp {

inline constexpr Index kPolytopeMaxDim = 16;
inline constexpr Index kPolytopeMaxVertices = Index{1} << 16;

/// m vertices on the sphere of radius R whose convex hull contains the unit
/// ball. Compressing a direction picks one vertex at random with its convex
/// weight, so the operator is unbiased with omega = R^2 - 1.
class PolytopeFrame {
 public:
  // vertices: d x m, every column of norm `radius`.
  PolytopeFrame(Matrix vertices, double radius);

  Index dim() const { return vertices_.rows(); }
  Index size() const { return vertices_.cols(); }
  double radius() const { return radius_; }
  const Matrix& vertices() const { return vertices_; }
  double omega() const { return radius_ * radius_ - 1.0; }

 private:
  Matrix vertices_;
  double radius_;
};

// d = 2: regular m-gon circumscribing the unit circle, R = 1/cos(pi/m).
// d >= 3: spread directions scaled by the smallest R found by probing.
PolytopeFrame build_polytope(Index d, Index m, const RngStream& rng);

// Simplex weights w with sum_k w_k v_k = v. Throws InfeasibleError if the
// residual stays above 1e-6.
Vector convex_weights(const PolytopeFrame& polytope, const Vector& v);

// Draws a vertex index with probabilities `weights`.
Index sample_vertex(const Vector& weights, const RngStream& rng);

CompressedMessage polytope_compress(const Vector& x, std::shared_ptr<const PolytopeFrame> polytope,
                                    const RngStream& rng);

CompressorSpec polytope_spec(std::shared_ptr<const PolytopeFrame> polytope);

}  // namespace gradcomp
