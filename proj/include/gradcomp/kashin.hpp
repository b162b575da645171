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

// Tight frames, restricted isometry estimates, Kashin representations and the
// compression operator built on them.
//
// A frame is a d x D matrix U with orthonormal rows (U U^T = I_d), D > d.
// Any x has the frame representation a = U^T x; a Kashin representation is a
// different a with x = U a whose entries are uniformly small:
//
//     max_i |a_i| <= K / sqrt(D) * ||x||_2.
//
// kashin_representation() computes one by repeated clipping, provided U
// contracts every (delta*D)-sparse vector by a factor eta < 1 (RIP). The level
// is then K = 1 / (sqrt(delta) * (1 - eta)).

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "gradcomp/compressors.hpp"
#include "gradcomp/core.hpp"
#include "gradcomp/rng.hpp"

namespace gradcomp {

class FrameMatrix {
 public:
  // Takes ownership of a d x D matrix with orthonormal rows.
  explicit FrameMatrix(Matrix u);

  Index d() const { return u_.rows(); }
  Index D() const { return u_.cols(); }
  double lambda() const { return static_cast<double>(D()) / static_cast<double>(d()); }
  const Matrix& u() const { return u_; }

  // U^T x
  Vector analyze(const Vector& x) const { return u_.transpose() * x; }
  // U a
  Vector synthesize(const Vector& a) const { return u_ * a; }

  // ||U U^T - I||_F
  double orthogonality_error() const;

 private:
  Matrix u_;
};

enum class RipSource { Empirical, Theoretical };

struct RipParams {
  double delta = 0.0;
  double eta = 0.0;
  double level_K = 0.0;
  RipSource source = RipSource::Empirical;

  // Fills level_K = 1 / (sqrt(delta) * (1 - eta)). Requires delta, eta in (0, 1).
  static RipParams make(double delta, double eta, RipSource source);
};

struct KashinCoefficients {
  Vector a;
  double residual_norm = 0.0;  // ||x - U a||_2
  double level_bound = 0.0;    // K / sqrt(D) * ||x||_2
  int rounds = 0;              // rounds requested
};

// D = round(lambda * d) must exceed d. Rows come from a QR factorization of a
// D x d Gaussian matrix, with column signs fixed so the result is Haar
// distributed.
FrameMatrix generate_frame(Index d, double lambda, const RngStream& rng);

// eta = 3/4 + 1/(4 sqrt(lambda)), delta = (1 - 1/sqrt(lambda))^2 / 5^4.
RipParams theoretical_rip_params(double lambda);

// Lower bound on the probability that a random frame satisfies the
// theoretical RIP parameters, clamped to [0, 1].
double rip_probability_bound(Index d, double lambda);

// Largest ||U x||_2 over `samples` random unit vectors with `support` nonzero
// entries (uniform support, Gaussian values). For support above 64, groups of
// up to 32 samples share one support. Supports above D - d return exactly 1,
// the true supremum there.
double sampled_rip_norm(const FrameMatrix& frame, Index support, int samples,
                        const RngStream& rng);

// Searches delta over a descending geometric grid starting at 0.9, estimating
// eta(delta) by sampled_rip_norm, and keeps the pair minimizing K.
RipParams estimate_rip(const FrameMatrix& frame, int sample_size, const RngStream& rng);

// Sampled check of the RIP inequality with support max(1, floor(delta*D)).
bool rip_check(const FrameMatrix& frame, const RipParams& params, int samples,
               const RngStream& rng);

// Smallest r with eta^r <= 1e-6.
int default_rounds(double eta);

KashinCoefficients kashin_representation(const FrameMatrix& frame, const Vector& x,
                                         const RipParams& params, int rounds);

// Column-wise kashin_representation of several vectors at once; returns the
// D x n coefficient matrix.
Matrix kashin_representation_batch(const FrameMatrix& frame, const Matrix& xs,
                                   const RipParams& params, int rounds);

struct KashinSetup {
  std::shared_ptr<const FrameMatrix> frame;
  RipParams params;
  int rounds = 0;
  CompressorSpec inner;
};

// Throws ContractError unless `inner` is ternary, standard or natural
// dithering (the quantizers that keep sign and stay within ||a||_inf).
void require_magnitude_preserving(const CompressorSpec& inner);

// rounds <= 0 selects default_rounds(params.eta).
CompressorSpec kashin_spec(std::shared_ptr<const FrameMatrix> frame, const RipParams& params,
                           const CompressorSpec& inner, int rounds = 0);

// The inner quantizer applied to coefficients, always in its Linf form.
LevelPayload kashin_quantize(const Vector& a, const CompressorSpec& inner, const RngStream& rng);

CompressedMessage kashin_compress(const Vector& x, std::shared_ptr<const FrameMatrix> frame,
                                  const RipParams& params, int rounds,
                                  const CompressorSpec& inner, const RngStream& rng);
CompressedMessage kashin_compress(const KashinSetup& setup, const Vector& x,
                                  const RngStream& rng);

// (10 sqrt(lambda) / (sqrt(lambda) - 1))^4
double kashin_variance_bound(double lambda);

// ||scale * U C(a) - x||^2 / ||x||^2 for trials t = 0..trials-1, trial t
// using rng.split(t). Matches decode(kashin_compress(setup, x, rng.split(t)))
// up to floating-point summation order.
std::vector<double> kashin_trial_errors(const KashinSetup& setup, const Vector& x, int trials,
                                        const RngStream& rng, double scale = 1.0);

// ---------------------------------------------------------------------------
// Frame cache file. All fields little-endian.
//
//   offset  size  field
//   0       8     magic "GCKFRAME"
//   8       4     version (uint32, currently 1)
//   12      4     reserved (zero)
//   16      8     d (uint64)
//   24      8     D (uint64)
//   32      8     seed (uint64)
//   40      8     delta (float64)
//   48      8     eta (float64)
//   56      8     K (float64)
//   64      8*d*D U entries, row-major float64
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kFrameFileVersion = 1;

struct StoredFrame {
  std::shared_ptr<const FrameMatrix> frame;
  std::uint64_t seed = 0;
  RipParams params;
};

void save_frame(const std::filesystem::path& path, const FrameMatrix& frame, std::uint64_t seed,
                const RipParams& params);
StoredFrame load_frame(const std::filesystem::path& path);

// Stream used to generate the frame cached under (d, D, seed).
RngStream frame_stream(std::uint64_t seed, Index d, Index D);

// Loads cache_dir/frame_d<d>_D<D>_seed<seed>.bin if present, otherwise
// generates the frame, estimates RIP with `rip_samples` vectors and writes the
// file. An empty cache_dir disables persistence.
StoredFrame cached_frame(const std::filesystem::path& cache_dir, Index d, double lambda,
                         std::uint64_t seed, int rip_samples);

}  // namespace gradcomp
