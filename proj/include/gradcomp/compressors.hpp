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
#include <string>
#include <variant>

#include "gradcomp/core.hpp"
#include "gradcomp/message.hpp"
#include "gradcomp/rng.hpp"

namespace gradcomp {

struct KashinSetup;

enum class SchemeKind {
  Identity,
  RandK,
  TopK,
  StdDither,
  NatDither,
  Ternary,
  ScaledSign,
  Kashin,
  Polytope,
};

// Which norm a magnitude quantizer divides by. L2 is the textbook form of
// ternary and dithering; Linf keeps every output within +-||x||_inf, which is
// the sign/magnitude-preserving form used for Kashin coefficients.
enum class Normalization { L2, Linf };

struct Unbiased {
  double omega;
};
struct Biased {
  double alpha;
};
using VarianceClass = std::variant<Unbiased, Biased>;

/// Tagged description of one compression operator.
struct CompressorSpec {
  SchemeKind kind = SchemeKind::Identity;
  Index k = 0;  // RandK, TopK
  int s = 0;    // StdDither, NatDither
  Normalization normalization = Normalization::L2;
  // Decode multiplied by 1/(omega+1): the unbiased operator turned contractive.
  bool contractive = false;
  std::shared_ptr<const KashinSetup> kashin;
  std::shared_ptr<const PolytopeFrame> polytope;
};

CompressorSpec identity_spec();
CompressorSpec rand_k_spec(Index k);
CompressorSpec top_k_spec(Index k);
CompressorSpec standard_dithering_spec(int s, Normalization norm = Normalization::L2);
CompressorSpec natural_dithering_spec(int s, Normalization norm = Normalization::L2);
CompressorSpec ternary_spec(Normalization norm = Normalization::L2);
CompressorSpec scaled_sign_spec();

// Throws ParameterError if the spec cannot run at dimension d.
void validate(const CompressorSpec& spec, Index d);

bool is_randomized(const CompressorSpec& spec);
// Unbiasedness of the operator as configured (false once made contractive).
bool is_unbiased(const CompressorSpec& spec);

// Variance parameter of the operator at dimension d.
VarianceClass variance_class(const CompressorSpec& spec, Index d);
// omega for unbiased specs; throws ParameterError for biased ones.
double omega_of(const CompressorSpec& spec, Index d);

// Stable identifier, safe to embed in CSV (no commas or whitespace).
std::string scheme_tag(const CompressorSpec& spec);

// Encoding length in bits at dimension d.
double theoretical_bits(const CompressorSpec& spec, Index d);

// log2 of the binomial coefficient C(n, k).
double log2_binomial(Index n, Index k);

// Wraps an unbiased operator so its decode is multiplied by 1/(omega+1).
CompressorSpec scale_to_contractive(const CompressorSpec& spec);

CompressedMessage identity_compress(const Vector& x);
CompressedMessage random_sparsification(const Vector& x, Index k, const RngStream& rng);
CompressedMessage topk(const Vector& x, Index k);
CompressedMessage standard_dithering(const Vector& x, int s, const RngStream& rng,
                                     Normalization norm = Normalization::L2);
CompressedMessage natural_dithering(const Vector& x, int s, const RngStream& rng,
                                    Normalization norm = Normalization::L2);
CompressedMessage ternary_quantize(const Vector& x, const RngStream& rng,
                                   Normalization norm = Normalization::L2);
CompressedMessage scaled_sign(const Vector& x);

// Randomized rounding of every |x_i| / ||x|| onto `grid`, keeping signs.
// Level l_hi is chosen with probability (t - l_lo) / (l_hi - l_lo).
LevelPayload quantize_on_grid(const Vector& x, std::shared_ptr<const LevelGrid> grid,
                              Normalization norm, Sampler& sampler);

// The level grid used by a ternary or dithering spec.
std::shared_ptr<const LevelGrid> grid_for(const CompressorSpec& spec);

// Runs any spec. Kashin and polytope specs dispatch to their modules.
CompressedMessage compress(const CompressorSpec& spec, const Vector& x, const RngStream& rng);

}  // namespace gradcomp
