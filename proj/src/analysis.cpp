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

#include "gradcomp/analysis.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "gradcomp/kashin.hpp"
#include "gradcomp/polytope.hpp"

namespace gradcomp {

namespace {

VarianceEstimate summarize(const std::vector<double>& errors) {
  VarianceEstimate est;
  est.trials = static_cast<int>(errors.size());
  if (errors.empty()) return est;
  const double n = static_cast<double>(errors.size());
  double sum = 0.0;
  for (double e : errors) sum += e;
  est.mean = sum / n;
  if (errors.size() > 1) {
    double ss = 0.0;
    for (double e : errors) ss += (e - est.mean) * (e - est.mean);
    est.std_error = std::sqrt(ss / (n - 1.0) / n);
  }
  return est;
}

}  // namespace

std::vector<double> trial_errors(const CompressorSpec& spec, const Vector& x, int trials,
                                 const RngStream& rng) {
  require_finite(x, "trial_errors");
  validate(spec, x.size());
  if (trials < 1) throw ParameterError("trial_errors: trials must be >= 1");
  const double norm2 = x.squaredNorm();
  if (norm2 == 0.0) throw ParameterError("trial_errors: x must be nonzero");

  const int n = is_randomized(spec) ? trials : 1;
  double scale = 1.0;
  if (spec.contractive) {
    CompressorSpec base = spec;
    base.contractive = false;
    scale = 1.0 / (omega_of(base, x.size()) + 1.0);
  }

  if (spec.kind == SchemeKind::Kashin) {
    return kashin_trial_errors(*spec.kashin, x, n, rng, scale);
  }

  std::vector<double> errors(static_cast<std::size_t>(n));
  if (spec.kind == SchemeKind::Polytope) {
    const PolytopeFrame& poly = *spec.polytope;
    const double norm = std::sqrt(norm2);
    const Vector w = convex_weights(poly, x / norm);
    for (int t = 0; t < n; ++t) {
      const Index k = sample_vertex(w, rng.split(static_cast<std::uint64_t>(t)));
      errors[static_cast<std::size_t>(t)] =
          (scale * norm * poly.vertices().col(k) - x).squaredNorm() / norm2;
    }
    return errors;
  }

  for (int t = 0; t < n; ++t) {
    const CompressedMessage msg = compress(spec, x, rng.split(static_cast<std::uint64_t>(t)));
    errors[static_cast<std::size_t>(t)] = normalized_error(decode(msg), x);
  }
  return errors;
}

VarianceEstimate empirical_normalized_variance(const CompressorSpec& spec, const Vector& x,
                                               int trials, const RngStream& rng) {
  return summarize(trial_errors(spec, x, trials, rng));
}

VarianceEstimate alpha_at(const CompressorSpec& spec, const Vector& x, int trials,
                          const RngStream& rng) {
  VarianceEstimate est = empirical_normalized_variance(spec, x, trials, rng);
  if (is_unbiased(spec)) {
    // alpha = omega / (omega + 1); the standard error follows by the delta method.
    const double omega = est.mean;
    est.mean = omega / (omega + 1.0);
    est.std_error /= (omega + 1.0) * (omega + 1.0);
  }
  return est;
}

RngStream vector_stream(const RngStream& rng, std::uint64_t j) {
  return rng.split("vector").split(j);
}

Vector gaussian_test_vector(Index d, const RngStream& stream) {
  if (d < 1) throw ParameterError("gaussian_test_vector: d must be >= 1");
  return stream.sampler().gaussian(d);
}

double empirical_alpha(const CompressorSpec& spec, Index d, int n_vectors, int trials,
                       const RngStream& rng) {
  validate(spec, d);
  if (n_vectors < 1) throw ParameterError("empirical_alpha: need at least one vector");
  double worst = 0.0;
  for (int j = 0; j < n_vectors; ++j) {
    const auto id = static_cast<std::uint64_t>(j);
    const Vector x = gaussian_test_vector(d, vector_stream(rng, id));
    worst = std::max(worst, alpha_at(spec, x, trials, rng.split("trials").split(id)).mean);
  }
  return worst;
}

double up_check(double alpha, double bits, Index d) {
  if (d < 1 || bits < 0.0) throw ParameterError("up_check: need d >= 1 and bits >= 0");
  return alpha * std::exp2(2.0 * bits / static_cast<double>(d));
}

double up_check_adjusted(double alpha, double bits, Index d, int r) {
  if (r < 1) throw ParameterError("up_check_adjusted: r must be >= 1");
  if (d < 1 || bits < 0.0) throw ParameterError("up_check_adjusted: need d >= 1 and bits >= 0");
  // 4^(b/d - r) + alpha 4^(b/d), computed without forming 4^-r separately.
  const double exponent = 2.0 * bits / static_cast<double>(d);
  return alpha * std::exp2(exponent) + std::exp2(exponent - 2.0 * r);
}

double up_margin(double alpha, double bits, Index d) {
  return alpha > 0.0 ? up_check(alpha, bits, d) : up_check_adjusted(alpha, bits, d, 32);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const std::size_t workers =
      std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            body(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

std::vector<VarianceBitsRecord> variance_bits_sweep(const std::vector<CompressorSpec>& specs,
                                                    Index d, int n_vectors, int trials,
                                                    const RngStream& rng) {
  if (d < 2) throw ParameterError("variance_bits_sweep: d must be >= 2");
  if (n_vectors < 1 || trials < 1) {
    throw ParameterError("variance_bits_sweep: n_vectors and trials must be positive");
  }
  for (const auto& spec : specs) validate(spec, d);

  const auto nv = static_cast<std::size_t>(n_vectors);
  std::vector<Vector> vectors(nv);
  for (std::size_t j = 0; j < nv; ++j) vectors[j] = gaussian_test_vector(d, vector_stream(rng, j));

  std::vector<VarianceBitsRecord> records(specs.size() * nv);
  parallel_for(records.size(), [&](std::size_t idx) {
    const std::size_t s = idx / nv;
    const std::size_t j = idx % nv;
    const CompressorSpec& spec = specs[s];
    const VarianceEstimate est = alpha_at(spec, vectors[j], trials, rng.split("trials").split(j));
    VarianceBitsRecord& rec = records[idx];
    rec.scheme_tag = scheme_tag(spec);
    rec.d = d;
    rec.vector_seed = vector_stream(rng, j).stream_id();
    rec.alpha_hat = est.mean;
    rec.std_error = est.std_error;
    rec.bits = theoretical_bits(spec, d);
    rec.bits_per_coord = rec.bits / static_cast<double>(d);
    rec.up_margin = up_margin(rec.alpha_hat, rec.bits, d);
    rec.trials = est.trials;
  });
  return records;
}

}  // namespace gradcomp
