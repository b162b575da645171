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

// Monte Carlo variance estimates and the variance/bits tradeoff check
// alpha * 4^(b/d) >= 1.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gradcomp/compressors.hpp"
#include "gradcomp/core.hpp"
#include "gradcomp/rng.hpp"

namespace gradcomp {

struct VarianceEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  int trials = 0;
};

// Mean of ||decode(C(x)) - x||^2 / ||x||^2 over trials, trial t compressing
// with rng.split(t). Deterministic specs run a single trial.
VarianceEstimate empirical_normalized_variance(const CompressorSpec& spec, const Vector& x,
                                               int trials, const RngStream& rng);

// Per-trial normalized errors behind empirical_normalized_variance.
std::vector<double> trial_errors(const CompressorSpec& spec, const Vector& x, int trials,
                                 const RngStream& rng);

// Contraction parameter estimated at one vector. Biased specs report the mean
// error directly; unbiased specs report omega_hat / (omega_hat + 1).
VarianceEstimate alpha_at(const CompressorSpec& spec, const Vector& x, int trials,
                          const RngStream& rng);

// Test vector j of a sweep: i.i.d. standard Gaussian entries drawn from
// vector_stream(rng, j).
RngStream vector_stream(const RngStream& rng, std::uint64_t j);
Vector gaussian_test_vector(Index d, const RngStream& stream);

// Largest alpha_at over n_vectors Gaussian test vectors.
double empirical_alpha(const CompressorSpec& spec, Index d, int n_vectors, int trials,
                       const RngStream& rng);

// alpha * 4^(b/d)
double up_check(double alpha, double bits, Index d);
// (alpha + 4^-r) * 4^(b/d), the form that stays meaningful at alpha = 0.
double up_check_adjusted(double alpha, double bits, Index d, int r);
// up_check when alpha > 0, otherwise up_check_adjusted with r = 32.
double up_margin(double alpha, double bits, Index d);

struct VarianceBitsRecord {
  std::string scheme_tag;
  Index d = 0;
  std::uint64_t vector_seed = 0;  // stream_id of the test vector's stream
  double alpha_hat = 0.0;
  double std_error = 0.0;
  double bits = 0.0;
  double bits_per_coord = 0.0;
  double up_margin = 0.0;
  int trials = 0;
};

// One record per (spec, test vector), ordered by spec then vector. Vector j
// is shared by every spec.
std::vector<VarianceBitsRecord> variance_bits_sweep(const std::vector<CompressorSpec>& specs,
                                                    Index d, int n_vectors, int trials,
                                                    const RngStream& rng);

// Runs body(i) for i in [0, n) on up to hardware_concurrency threads.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace gradcomp
