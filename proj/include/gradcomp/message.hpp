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

#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "gradcomp/core.hpp"

namespace gradcomp {

class FrameMatrix;
class PolytopeFrame;

/// Magnitude levels in [0, 1] used by ternary and dithering quantizers.
/// Level 0 is always 0 and the top level is always 1.
class LevelGrid {
 public:
  enum class Spacing { Uniform, Binary };

  // {0, 1/s, 2/s, ..., 1}
  static std::shared_ptr<const LevelGrid> uniform(int s);
  // {0, 2^(1-s), 2^(2-s), ..., 1}
  static std::shared_ptr<const LevelGrid> binary(int s);

  Spacing spacing() const { return spacing_; }
  int s() const { return s_; }
  int top() const { return static_cast<int>(levels_.size()) - 1; }
  double level(int j) const { return levels_[static_cast<std::size_t>(j)]; }
  const std::vector<double>& levels() const { return levels_; }

  // Largest j with level(j) <= t, for t in [0, 1].
  int floor_index(double t) const;

 private:
  LevelGrid(Spacing spacing, int s, std::vector<double> levels)
      : spacing_(spacing), s_(s), levels_(std::move(levels)) {}

  Spacing spacing_;
  int s_;
  std::vector<double> levels_;
};

// Payload alternatives. Each decodes to a vector of the message's origin_dim.

struct ZeroPayload {};

struct DensePayload {
  Vector values;
};

// Kept entries, already rescaled; indices strictly increasing.
struct SparsePayload {
  std::vector<Index> indices;
  std::vector<double> values;
};

// Entry i decodes to scale * sign(code_i) * grid->level(|code_i|).
struct LevelPayload {
  double scale = 0.0;
  std::shared_ptr<const LevelGrid> grid;
  std::vector<std::int32_t> codes;
};

// Entry i decodes to scale * (negative_i ? -1 : +1).
struct SignPayload {
  double scale = 0.0;
  std::vector<std::uint8_t> negative;
};

// Decodes to norm * vertex.
struct VertexPayload {
  double norm = 0.0;
  Index vertex = 0;
  std::shared_ptr<const PolytopeFrame> polytope;
};

// Quantized frame coefficients; decodes to U * coefficients.
struct FramePayload {
  LevelPayload coefficients;
  std::shared_ptr<const FrameMatrix> frame;
};

using Payload = std::variant<ZeroPayload, DensePayload, SparsePayload, LevelPayload,
                             SignPayload, VertexPayload, FramePayload>;

struct CompressedMessage {
  Payload payload;
  double bits = 0.0;
  Index origin_dim = 0;
  std::string scheme_tag;
  // Receiver-side multiplier; 1/(omega+1) for contractive-scaled operators.
  double decode_scale = 1.0;
};

// Reconstructs the receiver's vector. Throws DecodeError on malformed input.
Vector decode(const CompressedMessage& msg);

// Decodes a level payload of the given length.
Vector decode_levels(const LevelPayload& payload, Index dim);

}  // namespace gradcomp
