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

#include "gradcomp/optim.hpp"

#include <fmt/format.h>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>

#include "gradcomp/analysis.hpp"
#include "gradcomp/kashin.hpp"

namespace gradcomp {

double QuadraticProblem::gap(const Vector& x) const {
  const Vector e = x - x_star;
  return 0.5 * e.dot(A * e);
}

namespace {

Matrix haar_orthogonal(Index d, Sampler& sampler) {
  Matrix g = sampler.gaussian(d, d);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix& r = qr.matrixQR();
  for (Index j = 0; j < d; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return q;
}

Matrix random_spd(Index d, double kappa, Sampler& sampler) {
  Vector spectrum(d);
  spectrum[0] = 1.0;
  if (d > 1) {
    spectrum[d - 1] = kappa;
    for (Index i = 1; i + 1 < d; ++i) spectrum[i] = std::pow(kappa, sampler.uniform());
  }
  const Matrix q = haar_orthogonal(d, sampler);
  Matrix a = q * spectrum.asDiagonal() * q.transpose();
  // Exact symmetry regardless of rounding in the product.
  Matrix sym = 0.5 * (a + a.transpose());
  return sym;
}

void require_kappa(Index d, double kappa) {
  if (d < 1) throw ParameterError("quadratic: d must be >= 1");
  if (!(kappa >= 1.0) || !std::isfinite(kappa)) {
    throw ParameterError(fmt::format("quadratic: kappa = {} must be >= 1", kappa));
  }
  if (d == 1 && kappa != 1.0) {
    throw ParameterError("quadratic: a 1-dimensional problem has kappa = 1");
  }
}

}  // namespace

QuadraticProblem generate_quadratic(Index d, double kappa, const RngStream& rng) {
  require_kappa(d, kappa);
  Sampler sampler = rng.sampler();
  QuadraticProblem p;
  p.A = random_spd(d, kappa, sampler);
  p.b = sampler.gaussian(d);
  p.x_star = p.A.llt().solve(p.b);
  p.f_star = -0.5 * p.b.dot(p.x_star);
  p.L = kappa;
  p.mu = 1.0;
  p.kappa = kappa;
  return p;
}

DistributedProblem generate_distributed_quadratic(int n, Index d, double kappa,
                                                  const RngStream& rng) {
  if (n < 1) throw ParameterError("distributed quadratic: n must be >= 1");
  require_kappa(d, kappa);
  DistributedProblem dp;
  dp.workers.reserve(static_cast<std::size_t>(n));
  dp.A = Matrix::Zero(d, d);
  for (int i = 0; i < n; ++i) {
    Sampler sampler = rng.split(static_cast<std::uint64_t>(i)).sampler();
    QuadraticProblem w;
    w.A = random_spd(d, kappa, sampler);
    w.b = Vector::Zero(d);
    w.x_star = Vector::Zero(d);
    w.L = kappa;
    w.mu = 1.0;
    w.kappa = kappa;
    dp.A += w.A;
    dp.workers.push_back(std::move(w));
  }
  dp.A /= static_cast<double>(n);
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(dp.A, Eigen::EigenvaluesOnly);
  dp.mu = eig.eigenvalues()[0];
  dp.L = eig.eigenvalues()[d - 1];
  dp.kappa = dp.L / dp.mu;
  return dp;
}

Vector initial_point(Index d, const RngStream& rng) { return rng.split("init").sampler().gaussian(d); }

namespace {

struct Aggregate {
  Vector mean;
  double bits = 0.0;
};

// Compresses every column of `grads` and averages the decoded vectors. Kashin
// specs share one batched representation across columns.
Aggregate compress_average(const CompressorSpec& spec, const Matrix& grads, const RngStream& round) {
  const Index d = grads.rows();
  const Index n = grads.cols();
  Aggregate out;
  out.mean = Vector::Zero(d);
  if (spec.kind == SchemeKind::Kashin) {
    const KashinSetup& ks = *spec.kashin;
    double scale = 1.0;
    if (spec.contractive) {
      CompressorSpec base = spec;
      base.contractive = false;
      scale = 1.0 / (omega_of(base, d) + 1.0);
    }
    const Matrix coeffs = kashin_representation_batch(*ks.frame, grads, ks.params, ks.rounds);
    Matrix quantized(ks.frame->D(), n);
    for (Index i = 0; i < n; ++i) {
      const LevelPayload q =
          kashin_quantize(coeffs.col(i), ks.inner, round.split(static_cast<std::uint64_t>(i)));
      quantized.col(i) = decode_levels(q, ks.frame->D());
    }
    out.mean = scale * (ks.frame->u() * quantized).rowwise().sum() / static_cast<double>(n);
    out.bits = static_cast<double>(n) * theoretical_bits(spec, d);
    return out;
  }
  for (Index i = 0; i < n; ++i) {
    const CompressedMessage msg =
        compress(spec, grads.col(i), round.split(static_cast<std::uint64_t>(i)));
    out.mean += decode(msg);
    out.bits += msg.bits;
  }
  out.mean /= static_cast<double>(n);
  return out;
}

template <typename Gap, typename Grads>
Trajectory descend(const CompressorSpec& spec, Index d, double gamma, int max_iter,
                   const RngStream& rng, double tolerance, Gap gap, Grads grads) {
  validate(spec, d);
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    throw ParameterError(fmt::format("stepsize gamma = {} must be nonnegative", gamma));
  }
  if (max_iter < 0) throw ParameterError("max_iter must be >= 0");
  Trajectory t;
  t.gamma = gamma;
  t.scheme_tag = scheme_tag(spec);
  Vector x = initial_point(d, rng);
  const double gap0 = gap(x);
  if (!(gap0 > 0.0)) throw ParameterError("initial point is already optimal");
  t.points.push_back({0, 1.0, 0.0});
  const RngStream compress_rng = rng.split("compress");
  double bits = 0.0;
  for (int k = 0; k < max_iter; ++k) {
    const Aggregate g = compress_average(spec, grads(x), compress_rng.split(static_cast<std::uint64_t>(k)));
    x.noalias() -= gamma * g.mean;
    bits += g.bits;
    const double ratio = gap(x) / gap0;
    t.points.push_back({k + 1, ratio, bits});
    if (!std::isfinite(ratio) || ratio > kDivergenceRatio) {
      throw DivergenceError(
          fmt::format("{} diverged at iteration {} (suboptimality {:.3e})", t.scheme_tag, k + 1, ratio),
          std::move(t));
    }
    if (ratio <= tolerance) {
      t.converged = true;
      break;
    }
  }
  return t;
}

}  // namespace

Trajectory cgd_run(const QuadraticProblem& p, const CompressorSpec& spec, double gamma,
                   int max_iter, const RngStream& rng, double tolerance) {
  return descend(
      spec, p.dim(), gamma, max_iter, rng, tolerance, [&p](const Vector& x) { return p.gap(x); },
      [&p](const Vector& x) -> Matrix { return p.gradient(x); });
}

Trajectory dcgd_run(const DistributedProblem& p, const CompressorSpec& spec, double gamma,
                    int max_iter, const RngStream& rng, double tolerance) {
  if (p.workers.empty()) throw ParameterError("dcgd_run: no workers");
  const auto n = static_cast<Index>(p.size());
  Matrix grads(p.dim(), n);
  return descend(
      spec, p.dim(), gamma, max_iter, rng, tolerance, [&p](const Vector& x) { return p.value(x); },
      [&p, &grads, n](const Vector& x) -> const Matrix& {
        for (Index i = 0; i < n; ++i) {
          grads.col(i).noalias() = p.workers[static_cast<std::size_t>(i)].A * x;
        }
        return grads;
      });
}

std::vector<double> suboptimality_series(const Trajectory& t) {
  if (t.points.empty()) throw ParameterError("suboptimality_series: empty trajectory");
  std::vector<double> out;
  out.reserve(t.points.size());
  for (const auto& pt : t.points) out.push_back(pt.subopt);
  return out;
}

double stepsize_from_omega(double omega, int n_workers, double L) {
  if (n_workers < 1 || !(L > 0.0) || !(omega >= 0.0)) {
    throw ParameterError("stepsize: need n >= 1, L > 0 and omega >= 0");
  }
  return 1.0 / ((1.0 + omega / n_workers) * L);
}

double default_stepsize(const CompressorSpec& spec, Index d, int n_workers, double L) {
  const VarianceClass vc = variance_class(spec, d);
  if (const auto* u = std::get_if<Unbiased>(&vc)) return stepsize_from_omega(u->omega, n_workers, L);
  if (!(L > 0.0)) throw ParameterError("stepsize: need L > 0");
  return 1.0 / L;
}

double calibrated_omega(const CompressorSpec& spec, Index d, int probes, int trials,
                        const RngStream& rng) {
  validate(spec, d);
  if (probes < 1 || trials < 1) throw ParameterError("calibrated_omega: probes and trials must be positive");
  double worst = 0.0;
  for (int j = 0; j < probes; ++j) {
    const auto id = static_cast<std::uint64_t>(j);
    const Vector x = gaussian_test_vector(d, vector_stream(rng, id));
    worst = std::max(worst,
                     empirical_normalized_variance(spec, x, trials, rng.split("trials").split(id)).mean);
  }
  return worst;
}

}  // namespace gradcomp
