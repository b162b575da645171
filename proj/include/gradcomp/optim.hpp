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

// Random quadratic problems and compressed gradient descent, single node and
// distributed over simulated workers.

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "gradcomp/compressors.hpp"
#include "gradcomp/core.hpp"
#include "gradcomp/rng.hpp"

namespace gradcomp {

/// f(x) = 1/2 x^T A x - b^T x with A symmetric positive definite.
struct QuadraticProblem {
  Matrix A;
  Vector b;
  Vector x_star;
  double f_star = 0.0;
  double L = 1.0;
  double mu = 1.0;
  double kappa = 1.0;

  Index dim() const { return A.rows(); }
  double value(const Vector& x) const { return 0.5 * x.dot(A * x) - b.dot(x); }
  Vector gradient(const Vector& x) const { return A * x - b; }
  // f(x) - f_star, evaluated as 1/2 (x - x*)^T A (x - x*).
  double gap(const Vector& x) const;
};

/// Average of n quadratics f_i(x) = 1/2 x^T A_i x; minimizer 0, minimum 0.
struct DistributedProblem {
  std::vector<QuadraticProblem> workers;
  Matrix A;  // (1/n) sum_i A_i
  double L = 1.0;
  double mu = 1.0;
  double kappa = 1.0;

  Index dim() const { return A.rows(); }
  std::size_t size() const { return workers.size(); }
  double value(const Vector& x) const { return 0.5 * x.dot(A * x); }
  Vector gradient(const Vector& x) const { return A * x; }
};

// A = Q diag(lambda) Q^T with Q Haar orthogonal and lambda log-uniform on
// [1, kappa] (smallest pinned to 1, largest to kappa); b standard Gaussian.
QuadraticProblem generate_quadratic(Index d, double kappa, const RngStream& rng);

// Worker i uses generate_quadratic's recipe on rng.split(i) with b = 0.
// L and mu are the extreme eigenvalues of the average.
DistributedProblem generate_distributed_quadratic(int n, Index d, double kappa,
                                                  const RngStream& rng);

struct TrajectoryPoint {
  int iter = 0;
  double subopt = 1.0;
  double cum_bits = 0.0;
};

struct Trajectory {
  std::vector<TrajectoryPoint> points;
  double gamma = 0.0;
  std::string scheme_tag;
  bool converged = false;
};

// Suboptimality ratio exceeded 1e10 (or became non-finite).
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, Trajectory t)
      : std::runtime_error(what), trajectory_(std::move(t)) {}
  const Trajectory& trajectory() const { return trajectory_; }

 private:
  Trajectory trajectory_;
};

inline constexpr double kDefaultTolerance = 1e-10;
inline constexpr double kDivergenceRatio = 1e10;

// Starting point used by both loops: standard Gaussian from rng.split("init").
Vector initial_point(Index d, const RngStream& rng);

// x_{k+1} = x_k - gamma decode(C(grad f(x_k))). Compression at iteration k
// uses rng.split("compress").split(k).split(0). Stops after max_iter steps or
// once the suboptimality ratio is <= tolerance.
Trajectory cgd_run(const QuadraticProblem& p, const CompressorSpec& spec, double gamma,
                   int max_iter, const RngStream& rng, double tolerance = kDefaultTolerance);

// Worker i compresses grad f_i(x_k) with
// rng.split("compress").split(k).split(i); the server averages the decoded
// messages and steps. Bits count every uplink message.
Trajectory dcgd_run(const DistributedProblem& p, const CompressorSpec& spec, double gamma,
                    int max_iter, const RngStream& rng, double tolerance = kDefaultTolerance);

std::vector<double> suboptimality_series(const Trajectory& t);

// 1/((1 + omega/n) L) for unbiased specs, 1/L otherwise.
double default_stepsize(const CompressorSpec& spec, Index d, int n_workers, double L);
// Same rule with omega replaced by an empirical value.
double stepsize_from_omega(double omega, int n_workers, double L);

// Largest empirical omega over `probes` Gaussian vectors, `trials` draws each.
double calibrated_omega(const CompressorSpec& spec, Index d, int probes, int trials,
                        const RngStream& rng);

}  // namespace gradcomp
