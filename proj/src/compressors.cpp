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

#include "gradcomp/compressors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gradcomp/kashin.hpp"
#include "gradcomp/polytope.hpp"

namespace gradcomp {

namespace {

// Norm bits: the norm is positive, so its sign bit is not sent.
constexpr double kNormBits = 31.0;
constexpr double kFloatBits = 32.0;

CompressedMessage zero_message(const CompressorSpec& spec, Index d) {
  CompressedMessage msg;
  msg.payload = ZeroPayload{};
  msg.bits = theoretical_bits(spec, d);
  msg.origin_dim = d;
  msg.scheme_tag = scheme_tag(spec);
  return msg;
}

CompressedMessage make_message(const CompressorSpec& spec, Index d, Payload payload) {
  CompressedMessage msg;
  msg.payload = std::move(payload);
  msg.bits = theoretical_bits(spec, d);
  msg.origin_dim = d;
  msg.scheme_tag = scheme_tag(spec);
  return msg;
}

double scale_of(const Vector& x, Normalization norm) {
  return norm == Normalization::L2 ? x.norm() : x.lpNorm<Eigen::Infinity>();
}

std::string base_tag(const CompressorSpec& spec) {
  std::string tag;
  switch (spec.kind) {
    case SchemeKind::Identity:
      return "identity";
    case SchemeKind::RandK:
      return fmt::format("randk-k{}", spec.k);
    case SchemeKind::TopK:
      return fmt::format("topk-k{}", spec.k);
    case SchemeKind::StdDither:
      tag = fmt::format("std-dither-s{}", spec.s);
      break;
    case SchemeKind::NatDither:
      tag = fmt::format("nat-dither-s{}", spec.s);
      break;
    case SchemeKind::Ternary:
      tag = "ternary";
      break;
    case SchemeKind::ScaledSign:
      return "scaled-sign";
    case SchemeKind::Kashin: {
      if (!spec.kashin || !spec.kashin->frame) return "kashin";
      CompressorSpec inner = spec.kashin->inner;
      inner.normalization = Normalization::L2;
      inner.contractive = false;
      return fmt::format("kashin-{}-lambda{:g}", base_tag(inner), spec.kashin->frame->lambda());
    }
    case SchemeKind::Polytope:
      return spec.polytope ? fmt::format("polytope-m{}", spec.polytope->size()) : "polytope";
  }
  if (spec.normalization == Normalization::Linf) tag += "-linf";
  return tag;
}

}  // namespace

CompressorSpec identity_spec() { return CompressorSpec{}; }

CompressorSpec rand_k_spec(Index k) {
  CompressorSpec spec;
  spec.kind = SchemeKind::RandK;
  spec.k = k;
  return spec;
}

CompressorSpec top_k_spec(Index k) {
  CompressorSpec spec;
  spec.kind = SchemeKind::TopK;
  spec.k = k;
  return spec;
}

CompressorSpec standard_dithering_spec(int s, Normalization norm) {
  CompressorSpec spec;
  spec.kind = SchemeKind::StdDither;
  spec.s = s;
  spec.normalization = norm;
  return spec;
}

CompressorSpec natural_dithering_spec(int s, Normalization norm) {
  CompressorSpec spec;
  spec.kind = SchemeKind::NatDither;
  spec.s = s;
  spec.normalization = norm;
  return spec;
}

CompressorSpec ternary_spec(Normalization norm) {
  CompressorSpec spec;
  spec.kind = SchemeKind::Ternary;
  spec.normalization = norm;
  return spec;
}

CompressorSpec scaled_sign_spec() {
  CompressorSpec spec;
  spec.kind = SchemeKind::ScaledSign;
  return spec;
}

void validate(const CompressorSpec& spec, Index d) {
  if (d < 1) throw ParameterError("dimension must be >= 1");
  switch (spec.kind) {
    case SchemeKind::Identity:
    case SchemeKind::Ternary:
    case SchemeKind::ScaledSign:
      break;
    case SchemeKind::RandK:
    case SchemeKind::TopK:
      if (spec.k < 1 || spec.k > d) {
        throw ParameterError(fmt::format("{}: k = {} outside [1, {}]", base_tag(spec), spec.k, d));
      }
      break;
    case SchemeKind::StdDither:
      if (spec.s < 1 || spec.s > (1 << 20)) {
        throw ParameterError(fmt::format("standard dithering: s = {} outside [1, 2^20]", spec.s));
      }
      break;
    case SchemeKind::NatDither:
      if (spec.s < 1 || spec.s > 1000) {
        throw ParameterError(fmt::format("natural dithering: s = {} outside [1, 1000]", spec.s));
      }
      break;
    case SchemeKind::Kashin:
      if (!spec.kashin || !spec.kashin->frame) throw ParameterError("kashin: missing frame");
      if (spec.kashin->frame->d() != d) {
        throw ParameterError(fmt::format("kashin: frame built for d = {}, got d = {}",
                                         spec.kashin->frame->d(), d));
      }
      require_magnitude_preserving(spec.kashin->inner);
      validate(spec.kashin->inner, spec.kashin->frame->D());
      break;
    case SchemeKind::Polytope:
      if (!spec.polytope) throw ParameterError("polytope: missing vertex set");
      if (spec.polytope->dim() != d) {
        throw ParameterError(fmt::format("polytope: built for d = {}, got d = {}",
                                         spec.polytope->dim(), d));
      }
      break;
  }
}

bool is_randomized(const CompressorSpec& spec) {
  switch (spec.kind) {
    case SchemeKind::Identity:
    case SchemeKind::TopK:
    case SchemeKind::ScaledSign:
      return false;
    default:
      return true;
  }
}

bool is_unbiased(const CompressorSpec& spec) {
  if (spec.contractive) return false;
  return spec.kind != SchemeKind::TopK && spec.kind != SchemeKind::ScaledSign;
}

VarianceClass variance_class(const CompressorSpec& spec, Index d) {
  validate(spec, d);
  const double dd = static_cast<double>(d);
  double omega = 0.0;
  switch (spec.kind) {
    case SchemeKind::Identity:
      omega = 0.0;
      break;
    case SchemeKind::RandK:
      omega = dd / static_cast<double>(spec.k) - 1.0;
      break;
    case SchemeKind::TopK:
      return Biased{1.0 - static_cast<double>(spec.k) / dd};
    case SchemeKind::StdDither: {
      const double s = spec.s;
      omega = std::min(std::sqrt(dd) / s, dd / (s * s));
      break;
    }
    case SchemeKind::NatDither: {
      const double top = std::ldexp(1.0, spec.s - 1);
      omega = std::min(std::sqrt(dd) / top, dd / (top * top));
      break;
    }
    case SchemeKind::Ternary:
      omega = std::sqrt(dd) - 1.0;
      break;
    case SchemeKind::ScaledSign:
      return Biased{1.0 - 1.0 / dd};
    case SchemeKind::Kashin:
      // Uniform bound ||C(a) - a||^2 <= D ||a||_inf^2 <= K^2 ||x||^2.
      omega = spec.kashin->params.level_K * spec.kashin->params.level_K;
      break;
    case SchemeKind::Polytope:
      omega = spec.polytope->omega();
      break;
  }
  if (spec.contractive) return Biased{omega / (omega + 1.0)};
  return Unbiased{omega};
}

double omega_of(const CompressorSpec& spec, Index d) {
  const VarianceClass vc = variance_class(spec, d);
  if (const auto* u = std::get_if<Unbiased>(&vc)) return u->omega;
  throw ParameterError(scheme_tag(spec) + ": operator is biased, omega undefined");
}

std::string scheme_tag(const CompressorSpec& spec) {
  const std::string tag = base_tag(spec);
  return spec.contractive ? "contractive-" + tag : tag;
}

double log2_binomial(Index n, Index k) {
  if (k < 0 || k > n) throw ParameterError("log2_binomial: k outside [0, n]");
  const Index j = std::min(k, n - k);
  double acc = 0.0;
  for (Index i = 1; i <= j; ++i) {
    acc += std::log2(static_cast<double>(n - j + i) / static_cast<double>(i));
  }
  return acc;
}

double theoretical_bits(const CompressorSpec& spec, Index d) {
  const double dd = static_cast<double>(d);
  switch (spec.kind) {
    case SchemeKind::Identity:
      return kFloatBits * dd;
    case SchemeKind::RandK:
    case SchemeKind::TopK:
      if (spec.k < 1 || spec.k > d) throw ParameterError("sparsifier: k outside [1, d]");
      return kFloatBits * static_cast<double>(spec.k) + log2_binomial(d, spec.k);
    case SchemeKind::StdDither:
      if (spec.s < 1) throw ParameterError("standard dithering: s must be >= 1");
      // Sign bit plus a fixed-width level index per coordinate.
      return kNormBits + dd * (1.0 + std::ceil(std::log2(static_cast<double>(spec.s) + 1.0)));
    case SchemeKind::NatDither:
      if (spec.s < 1) throw ParameterError("natural dithering: s must be >= 1");
      return kNormBits + dd * std::log2(2.0 * spec.s + 1.0);
    case SchemeKind::Ternary:
      return kNormBits + dd * std::log2(3.0);
    case SchemeKind::ScaledSign:
      return kNormBits + dd;
    case SchemeKind::Kashin:
      if (!spec.kashin || !spec.kashin->frame) throw ParameterError("kashin: missing frame");
      return theoretical_bits(spec.kashin->inner, spec.kashin->frame->D());
    case SchemeKind::Polytope:
      if (!spec.polytope) throw ParameterError("polytope: missing vertex set");
      return kNormBits + std::log2(static_cast<double>(spec.polytope->size()));
  }
  throw ParameterError("theoretical_bits: unsupported scheme");
}

CompressorSpec scale_to_contractive(const CompressorSpec& spec) {
  if (!is_unbiased(spec)) {
    throw ParameterError(scheme_tag(spec) + ": contractive scaling needs an unbiased operator");
  }
  CompressorSpec out = spec;
  out.contractive = true;
  return out;
}

std::shared_ptr<const LevelGrid> grid_for(const CompressorSpec& spec) {
  switch (spec.kind) {
    case SchemeKind::Ternary:
      return LevelGrid::uniform(1);
    case SchemeKind::StdDither:
      return LevelGrid::uniform(spec.s);
    case SchemeKind::NatDither:
      return LevelGrid::binary(spec.s);
    default:
      throw ParameterError(scheme_tag(spec) + ": not a level quantizer");
  }
}

LevelPayload quantize_on_grid(const Vector& x, std::shared_ptr<const LevelGrid> grid,
                              Normalization norm, Sampler& sampler) {
  LevelPayload out;
  out.scale = scale_of(x, norm);
  out.grid = std::move(grid);
  out.codes.assign(static_cast<std::size_t>(x.size()), 0);
  if (out.scale == 0.0) return out;
  const LevelGrid& g = *out.grid;
  for (Index i = 0; i < x.size(); ++i) {
    const double t = std::min(1.0, std::abs(x[i]) / out.scale);
    int j = g.floor_index(t);
    if (j < g.top()) {
      const double lo = g.level(j);
      const double hi = g.level(j + 1);
      const double p = std::clamp((t - lo) / (hi - lo), 0.0, 1.0);
      // One uniform per coordinate, drawn even when p is 0 or 1, so the
      // stream position depends only on the dimension.
      if (sampler.uniform() < p) ++j;
    }
    out.codes[static_cast<std::size_t>(i)] = x[i] < 0.0 ? -j : j;
  }
  return out;
}

CompressedMessage identity_compress(const Vector& x) {
  require_finite(x, "identity");
  return make_message(identity_spec(), x.size(), DensePayload{x});
}

CompressedMessage random_sparsification(const Vector& x, Index k, const RngStream& rng) {
  require_finite(x, "random sparsification");
  const CompressorSpec spec = rand_k_spec(k);
  validate(spec, x.size());
  if (x.isZero(0.0)) return zero_message(spec, x.size());
  Sampler sampler = rng.sampler();
  SparsePayload payload;
  payload.indices = sampler.subset(x.size(), k);
  payload.values.reserve(payload.indices.size());
  const double gain = static_cast<double>(x.size()) / static_cast<double>(k);
  for (Index idx : payload.indices) payload.values.push_back(gain * x[idx]);
  return make_message(spec, x.size(), std::move(payload));
}

CompressedMessage topk(const Vector& x, Index k) {
  require_finite(x, "top-k");
  const CompressorSpec spec = top_k_spec(k);
  validate(spec, x.size());
  if (x.isZero(0.0)) return zero_message(spec, x.size());
  std::vector<Index> order(static_cast<std::size_t>(x.size()));
  std::iota(order.begin(), order.end(), Index{0});
  // Larger magnitude first, ties to the lower index.
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&x](Index a, Index b) {
    const double ma = std::abs(x[a]);
    const double mb = std::abs(x[b]);
    return ma > mb || (ma == mb && a < b);
  });
  order.resize(static_cast<std::size_t>(k));
  std::sort(order.begin(), order.end());
  SparsePayload payload;
  payload.indices = order;
  payload.values.reserve(order.size());
  for (Index idx : order) payload.values.push_back(x[idx]);
  return make_message(spec, x.size(), std::move(payload));
}

namespace {

CompressedMessage level_quantize(const CompressorSpec& spec, const Vector& x, const RngStream& rng) {
  validate(spec, x.size());
  if (x.isZero(0.0)) return zero_message(spec, x.size());
  Sampler sampler = rng.sampler();
  return make_message(spec, x.size(),
                      quantize_on_grid(x, grid_for(spec), spec.normalization, sampler));
}

}  // namespace

CompressedMessage standard_dithering(const Vector& x, int s, const RngStream& rng,
                                     Normalization norm) {
  require_finite(x, "standard dithering");
  return level_quantize(standard_dithering_spec(s, norm), x, rng);
}

CompressedMessage natural_dithering(const Vector& x, int s, const RngStream& rng,
                                    Normalization norm) {
  require_finite(x, "natural dithering");
  return level_quantize(natural_dithering_spec(s, norm), x, rng);
}

CompressedMessage ternary_quantize(const Vector& x, const RngStream& rng, Normalization norm) {
  require_finite(x, "ternary");
  return level_quantize(ternary_spec(norm), x, rng);
}

CompressedMessage scaled_sign(const Vector& x) {
  require_finite(x, "scaled sign");
  const CompressorSpec spec = scaled_sign_spec();
  if (x.isZero(0.0)) return zero_message(spec, x.size());
  SignPayload payload;
  payload.scale = x.lpNorm<1>() / static_cast<double>(x.size());
  payload.negative.resize(static_cast<std::size_t>(x.size()));
  for (Index i = 0; i < x.size(); ++i) payload.negative[static_cast<std::size_t>(i)] = x[i] < 0.0;
  return make_message(spec, x.size(), std::move(payload));
}

CompressedMessage compress(const CompressorSpec& spec, const Vector& x, const RngStream& rng) {
  if (spec.contractive) {
    CompressorSpec base = spec;
    base.contractive = false;
    const double omega = omega_of(base, x.size());
    CompressedMessage msg = compress(base, x, rng);
    msg.decode_scale = 1.0 / (omega + 1.0);
    msg.scheme_tag = scheme_tag(spec);
    return msg;
  }
  switch (spec.kind) {
    case SchemeKind::Identity:
      return identity_compress(x);
    case SchemeKind::RandK:
      return random_sparsification(x, spec.k, rng);
    case SchemeKind::TopK:
      return topk(x, spec.k);
    case SchemeKind::StdDither:
    case SchemeKind::NatDither:
    case SchemeKind::Ternary:
      require_finite(x, scheme_tag(spec));
      return level_quantize(spec, x, rng);
    case SchemeKind::ScaledSign:
      return scaled_sign(x);
    case SchemeKind::Kashin:
      validate(spec, x.size());
      return kashin_compress(*spec.kashin, x, rng);
    case SchemeKind::Polytope:
      validate(spec, x.size());
      return polytope_compress(x, spec.polytope, rng);
  }
  throw ParameterError("compress: unsupported scheme");
}

}  // namespace gradcomp
