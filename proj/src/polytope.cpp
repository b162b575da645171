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

#include "gradcomp/polytope.hpp"

#include <fmt/format.h>

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace gradcomp {

PolytopeFrame::PolytopeFrame(Matrix vertices, double radius)
    : vertices_(std::move(vertices)), radius_(radius) {
  if (vertices_.rows() < 1 || vertices_.cols() < 2) {
    throw ParameterError("polytope: need at least two vertices");
  }
  if (!(radius_ > 1.0) || !std::isfinite(radius_)) {
    throw ParameterError(fmt::format("polytope: radius {} must exceed 1", radius_));
  }
  for (Index k = 0; k < vertices_.cols(); ++k) {
    if (std::abs(vertices_.col(k).norm() - radius_) > 1e-8 * radius_) {
      throw ParameterError(fmt::format("polytope: vertex {} does not have norm {}", k, radius_));
    }
  }
}

namespace {

constexpr double kSolverTarget = 1e-12;
constexpr double kFeasibleResidual = 1e-6;
constexpr int kSolverIterations = 10000;
constexpr int kContainmentProbes = 1000;

Matrix unit_columns(Matrix m) {
  for (Index k = 0; k < m.cols(); ++k) m.col(k).normalize();
  return m;
}

// Riesz s = 1 energy descent on the sphere, started from random directions.
Matrix spread_directions(Index d, Index m, const RngStream& rng) {
  Matrix u = unit_columns(rng.sampler().gaussian(d, m));
  constexpr int kSteps = 300;
  Matrix force(d, m);
  for (int step = 0; step < kSteps; ++step) {
    const Matrix gram = u.transpose() * u;
    force.setZero();
    double closest = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < m; ++i) {
      for (Index j = 0; j < m; ++j) {
        if (i == j) continue;
        const double dist2 = std::max(2.0 - 2.0 * gram(i, j), 1e-12);
        const double dist = std::sqrt(dist2);
        closest = std::min(closest, dist);
        force.col(i) += (u.col(i) - u.col(j)) / (dist2 * dist);
      }
    }
    double largest = 0.0;
    for (Index i = 0; i < m; ++i) {
      force.col(i) -= u.col(i).dot(force.col(i)) * u.col(i);
      largest = std::max(largest, force.col(i).norm());
    }
    if (largest == 0.0) break;
    const double stepsize = 0.2 * closest * (1.0 - static_cast<double>(step) / kSteps) / largest;
    u += stepsize * force;
    u = unit_columns(std::move(u));
  }
  return u;
}

// Support function h(theta) = max_k <u_k, theta> of the unit-direction hull.
double support(const Matrix& u, const Vector& theta) { return (u.transpose() * theta).maxCoeff(); }

// Smallest support value found from random probes, each refined by moving to
// the normal of the facet spanned by its d most aligned vertices.
double min_support(const Matrix& u, const RngStream& rng) {
  const Index d = u.rows();
  const Index m = u.cols();
  Sampler sampler = rng.sampler();
  double best = std::numeric_limits<double>::infinity();
  std::vector<Index> order(static_cast<std::size_t>(m));
  Matrix facet(d, d);
  for (int p = 0; p < kContainmentProbes; ++p) {
    Vector theta = sampler.gaussian(d).normalized();
    double value = support(u, theta);
    for (int refine = 0; refine < 20; ++refine) {
      const Vector scores = u.transpose() * theta;
      std::iota(order.begin(), order.end(), Index{0});
      std::partial_sort(order.begin(), order.begin() + d, order.end(),
                        [&scores](Index a, Index b) { return scores[a] > scores[b]; });
      for (Index r = 0; r < d; ++r) facet.row(r) = u.col(order[static_cast<std::size_t>(r)]).transpose();
      Eigen::FullPivLU<Matrix> lu(facet);
      if (!lu.isInvertible()) break;
      const Vector normal = lu.solve(Vector::Ones(d));
      if (!normal.allFinite() || normal.norm() == 0.0) break;
      const Vector next = normal.normalized();
      const double next_value = support(u, next);
      if (!(next_value < value - 1e-15)) break;
      theta = next;
      value = next_value;
    }
    best = std::min(best, value);
  }
  return best;
}

bool contains_unit_ball(const PolytopeFrame& polytope, const RngStream& rng) {
  Sampler sampler = rng.sampler();
  for (int p = 0; p < kContainmentProbes; ++p) {
    try {
      convex_weights(polytope, sampler.gaussian(polytope.dim()).normalized());
    } catch (const InfeasibleError&) {
      return false;
    }
  }
  return true;
}

PolytopeFrame regular_polygon(Index m) {
  const double pi = std::numbers::pi;
  const double radius = 1.0 / std::cos(pi / static_cast<double>(m));
  Matrix v(2, m);
  for (Index k = 0; k < m; ++k) {
    const double angle = static_cast<double>(2 * k + 1) * pi / static_cast<double>(m);
    v(0, k) = radius * std::cos(angle);
    v(1, k) = radius * std::sin(angle);
  }
  return PolytopeFrame(std::move(v), radius);
}

}  // namespace

PolytopeFrame build_polytope(Index d, Index m, const RngStream& rng) {
  if (d < 2 || d > kPolytopeMaxDim) {
    throw ParameterError(fmt::format("polytope: d = {} outside [2, {}]", d, kPolytopeMaxDim));
  }
  if (m < 2 * d || m > kPolytopeMaxVertices) {
    throw ParameterError(fmt::format("polytope: m = {} outside [2d, {}]", m, kPolytopeMaxVertices));
  }
  if (d == 2) return regular_polygon(m);

  constexpr int kStarts = 3;
  Matrix best_u;
  double best_h = 0.0;
  for (int start = 0; start < kStarts; ++start) {
    Matrix u = spread_directions(d, m, rng.split("start").split(static_cast<std::uint64_t>(start)));
    const double h = min_support(u, rng.split("probe").split(static_cast<std::uint64_t>(start)));
    if (h > best_h) {
      best_h = h;
      best_u = std::move(u);
    }
  }
  if (!(best_h > 0.0)) throw ConstructionError("polytope: directions do not surround the origin");

  double radius = 1.0 / best_h;
  for (int attempt = 0; attempt < 20; ++attempt) {
    PolytopeFrame candidate(radius * best_u, radius);
    if (contains_unit_ball(candidate, rng.split("verify").split(static_cast<std::uint64_t>(attempt)))) {
      return candidate;
    }
    radius *= 1.01;
  }
  throw ConstructionError(fmt::format("polytope: hull of {} vertices in d = {} misses the unit ball", m, d));
}

Vector convex_weights(const PolytopeFrame& polytope, const Vector& v) {
  require_finite(v, "convex_weights");
  require_dim(v, polytope.dim(), "convex_weights");
  const Matrix& verts = polytope.vertices();
  const Index m = polytope.size();

  // Pairwise Frank-Wolfe on ||V w - v||^2 over the simplex, exact line search.
  Vector scores = verts.transpose() * v;
  Index start = 0;
  scores.maxCoeff(&start);
  Vector w = Vector::Zero(m);
  w[start] = 1.0;
  Vector r = verts.col(start) - v;
  Vector grad(m);
  for (int it = 0; it < kSolverIterations; ++it) {
    if (it % 256 == 255) r.noalias() = verts * w - v;
    if (r.norm() <= kSolverTarget) break;
    grad.noalias() = verts.transpose() * r;
    Index toward = 0;
    grad.minCoeff(&toward);
    Index away = -1;
    for (Index k = 0; k < m; ++k) {
      if (w[k] > 0.0 && (away < 0 || grad[k] > grad[away])) away = k;
    }
    if (away == toward) break;
    const Vector dir = verts.col(toward) - verts.col(away);
    const double dd = dir.squaredNorm();
    if (dd == 0.0) break;
    const double t = std::min(w[away], -r.dot(dir) / dd);
    if (!(t > 0.0)) break;
    w[toward] += t;
    w[away] -= t;
    r.noalias() += t * dir;
  }
  r.noalias() = verts * w - v;
  const double residual = r.norm();
  if (residual > kFeasibleResidual) {
    throw InfeasibleError(fmt::format("convex_weights: residual {:.3e} above {:.0e}; point outside hull",
                                      residual, kFeasibleResidual));
  }
  w = w.cwiseMax(0.0);
  w /= w.sum();
  return w;
}

Index sample_vertex(const Vector& weights, const RngStream& rng) {
  return rng.sampler().categorical(weights);
}

CompressorSpec polytope_spec(std::shared_ptr<const PolytopeFrame> polytope) {
  if (!polytope) throw ParameterError("polytope_spec: missing vertex set");
  CompressorSpec spec;
  spec.kind = SchemeKind::Polytope;
  spec.polytope = std::move(polytope);
  return spec;
}

CompressedMessage polytope_compress(const Vector& x, std::shared_ptr<const PolytopeFrame> polytope,
                                    const RngStream& rng) {
  const CompressorSpec spec = polytope_spec(polytope);
  require_finite(x, "polytope");
  validate(spec, x.size());
  CompressedMessage msg;
  msg.origin_dim = x.size();
  msg.bits = theoretical_bits(spec, x.size());
  msg.scheme_tag = scheme_tag(spec);
  const double norm = x.norm();
  if (norm == 0.0) {
    msg.payload = ZeroPayload{};
    return msg;
  }
  const Vector w = convex_weights(*polytope, x / norm);
  msg.payload = VertexPayload{norm, sample_vertex(w, rng), std::move(polytope)};
  return msg;
}

}  // namespace gradcomp
