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

#include "gradcomp/message.hpp"

#include <cmath>
#include <cstdlib>

#include "gradcomp/kashin.hpp"
#include "gradcomp/polytope.hpp"

namespace gradcomp {

std::shared_ptr<const LevelGrid> LevelGrid::uniform(int s) {
  if (s < 1) throw ParameterError("uniform level grid: s must be >= 1");
  std::vector<double> levels(static_cast<std::size_t>(s) + 1);
  for (int j = 0; j <= s; ++j) levels[static_cast<std::size_t>(j)] = static_cast<double>(j) / s;
  return std::shared_ptr<const LevelGrid>(new LevelGrid(Spacing::Uniform, s, std::move(levels)));
}

std::shared_ptr<const LevelGrid> LevelGrid::binary(int s) {
  if (s < 1 || s > 1000) throw ParameterError("binary level grid: s must be in [1, 1000]");
  std::vector<double> levels(static_cast<std::size_t>(s) + 1);
  levels[0] = 0.0;
  for (int j = 1; j <= s; ++j) levels[static_cast<std::size_t>(j)] = std::ldexp(1.0, j - s);
  return std::shared_ptr<const LevelGrid>(new LevelGrid(Spacing::Binary, s, std::move(levels)));
}

int LevelGrid::floor_index(double t) const {
  if (t >= 1.0) return top();
  if (t <= 0.0) return 0;
  if (spacing_ == Spacing::Uniform) {
    int j = static_cast<int>(std::floor(t * s_));
    if (j >= s_) j = s_ - 1;
    // t * s can round across an integer; settle against the stored level.
    while (j > 0 && level(j) > t) --j;
    while (j + 1 < top() && level(j + 1) <= t) ++j;
    return j;
  }
  if (t < level(1)) return 0;
  int exponent = 0;
  std::frexp(t, &exponent);  // 2^(exponent-1) <= t < 2^exponent
  int j = exponent - 1 + s_;
  if (j > top()) j = top();
  if (j < 1) j = 1;
  return j;
}

namespace {

void check(bool ok, const char* what) {
  if (!ok) throw DecodeError(what);
}

struct Decoder {
  Index dim;

  Vector operator()(const ZeroPayload&) const { return Vector::Zero(dim); }

  Vector operator()(const DensePayload& p) const {
    check(p.values.size() == dim, "dense payload: length mismatch");
    return p.values;
  }

  Vector operator()(const SparsePayload& p) const {
    check(p.indices.size() == p.values.size(), "sparse payload: index/value count mismatch");
    Vector out = Vector::Zero(dim);
    Index prev = -1;
    for (std::size_t i = 0; i < p.indices.size(); ++i) {
      const Index idx = p.indices[i];
      check(idx > prev && idx < dim, "sparse payload: index out of order or out of range");
      out[idx] = p.values[i];
      prev = idx;
    }
    return out;
  }

  Vector operator()(const LevelPayload& p) const { return decode_levels(p, dim); }

  Vector operator()(const SignPayload& p) const {
    check(static_cast<Index>(p.negative.size()) == dim, "sign payload: length mismatch");
    check(std::isfinite(p.scale) && p.scale >= 0.0, "sign payload: bad scale");
    Vector out(dim);
    for (Index i = 0; i < dim; ++i) out[i] = p.negative[static_cast<std::size_t>(i)] ? -p.scale : p.scale;
    return out;
  }

  Vector operator()(const VertexPayload& p) const {
    check(p.polytope != nullptr, "vertex payload: missing polytope");
    check(p.polytope->dim() == dim, "vertex payload: polytope dimension mismatch");
    check(p.vertex >= 0 && p.vertex < p.polytope->size(), "vertex payload: vertex out of range");
    check(std::isfinite(p.norm) && p.norm >= 0.0, "vertex payload: bad norm");
    return p.norm * p.polytope->vertices().col(p.vertex);
  }

  Vector operator()(const FramePayload& p) const {
    check(p.frame != nullptr, "frame payload: missing frame");
    check(p.frame->d() == dim, "frame payload: frame dimension mismatch");
    const Vector coeffs = decode_levels(p.coefficients, p.frame->D());
    return p.frame->synthesize(coeffs);
  }
};

}  // namespace

Vector decode_levels(const LevelPayload& p, Index dim) {
  check(p.grid != nullptr, "level payload: missing grid");
  check(static_cast<Index>(p.codes.size()) == dim, "level payload: length mismatch");
  check(std::isfinite(p.scale) && p.scale >= 0.0, "level payload: bad scale");
  const int top = p.grid->top();
  Vector out(dim);
  for (Index i = 0; i < dim; ++i) {
    const std::int32_t code = p.codes[static_cast<std::size_t>(i)];
    check(code >= -top && code <= top, "level payload: code outside grid");
    const double magnitude = p.scale * p.grid->level(std::abs(code));
    out[i] = code < 0 ? -magnitude : magnitude;
  }
  return out;
}

Vector decode(const CompressedMessage& msg) {
  if (msg.origin_dim < 1) throw DecodeError("message: origin_dim must be positive");
  if (!std::isfinite(msg.decode_scale)) throw DecodeError("message: bad decode scale");
  Vector out = std::visit(Decoder{msg.origin_dim}, msg.payload);
  if (msg.decode_scale != 1.0) out *= msg.decode_scale;
  return out;
}

}  // namespace gradcomp
