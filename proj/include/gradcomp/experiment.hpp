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

// Config-driven experiment runner: INI config, scheme strings, CSV and
// manifest output.
//
// Scheme strings have the form name[:key=value[,key=value...]]:
//
//   identity
//   randk:k=100        randk:frac=0.1      (k = max(1, round(frac * d)))
//   topk:k=100         topk:frac=0.1
//   std-dither:s=4     nat-dither:s=4      (optional norm=l2|linf)
//   ternary            scaled-sign
//   kashin:inner=ternary,lambda=2          (inner = ternary | std-dither |
//                                           nat-dither, s=, rip=empirical |
//                                           theoretical, rounds=)
//   polytope:m=64      (only built for d <= 16; skipped otherwise)
//
// Any unbiased scheme accepts scaled=1 for its contractive form C/(omega+1).
// Lists of schemes are separated by whitespace.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gradcomp/analysis.hpp"
#include "gradcomp/compressors.hpp"
#include "gradcomp/core.hpp"
#include "gradcomp/kashin.hpp"
#include "gradcomp/optim.hpp"
#include "gradcomp/polytope.hpp"

namespace gradcomp {

// Invalid configuration; the message names the file, line and field.
class ConfigError : public ParameterError {
 public:
  using ParameterError::ParameterError;
};

/// Flat [section] key = value configuration with per-key provenance.
class Config {
 public:
  using Section = std::map<std::string, std::string>;

  static Config from_file(const std::filesystem::path& path);
  static Config from_string(std::string_view text, std::string source = "<config>");

  // Sets "section.key" = value, as from --override.
  void set(std::string_view dotted_key, std::string value);

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback) const;
  std::string require(const std::string& section, const std::string& key) const;
  long long get_int(const std::string& section, const std::string& key, long long fallback) const;
  std::uint64_t get_u64(const std::string& section, const std::string& key,
                        std::uint64_t fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  std::vector<long long> get_int_list(const std::string& section, const std::string& key,
                                      const std::vector<long long>& fallback) const;

  // "file:line" of a key, or "--override" for values set afterwards.
  std::string where(const std::string& section, const std::string& key) const;
  // Throws ConfigError naming the key's location.
  [[noreturn]] void fail(const std::string& section, const std::string& key,
                         const std::string& message) const;

  const std::map<std::string, Section>& sections() const { return sections_; }
  const std::string& source() const { return source_; }

 private:
  std::map<std::string, Section> sections_;
  std::map<std::string, std::string> origins_;
  std::string source_;
};

struct SchemeRequest {
  std::string text;
  std::string name;
  std::map<std::string, std::string> params;
};

SchemeRequest parse_scheme(std::string_view text);
std::vector<SchemeRequest> parse_scheme_list(std::string_view text);

/// Builds specs from scheme strings, caching frames and polytopes per run.
class SpecFactory {
 public:
  SpecFactory(std::filesystem::path frame_cache, std::uint64_t frame_seed, int rip_samples);

  // nullopt when the scheme does not apply at d (polytope above d = 16).
  std::optional<CompressorSpec> build(const SchemeRequest& request, Index d);

 private:
  std::filesystem::path frame_cache_;
  std::uint64_t frame_seed_;
  int rip_samples_;
  std::map<std::pair<Index, Index>, StoredFrame> frames_;
  std::map<std::pair<Index, Index>, std::shared_ptr<const PolytopeFrame>> polytopes_;
};

enum class ExperimentKind { Sweep, VarCompare, Cgd, Dcgd, RipEstimate, FrameGen };

std::optional<ExperimentKind> parse_experiment_kind(std::string_view name);
std::string_view experiment_name(ExperimentKind kind);

struct RunReport {
  int exit_code = 0;  // 0 ok, 3 when a descent run diverged
  std::string status = "ok";
  std::vector<std::string> diagnostics;
  std::vector<std::filesystem::path> files;  // relative to the output directory
  double wall_seconds = 0.0;
};

// Validates the config for `kind`, runs it and writes CSV/JSON files plus
// manifest.json into out_dir. Throws ConfigError before any computation if
// the config is invalid.
RunReport run_experiment(ExperimentKind kind, const Config& config,
                         const std::filesystem::path& out_dir);

// Output directory: explicit flag, then [run] out, then $GRADCOMP_OUT_DIR,
// then "gradcomp-out".
std::filesystem::path resolve_out_dir(const std::optional<std::string>& flag, const Config& config);

std::string sha256_hex(const std::filesystem::path& path);

// Shortest round-trip representation, so CSV text is reproducible.
std::string format_number(double value);

void write_sweep_csv(const std::filesystem::path& path, std::vector<VarianceBitsRecord> records);
void write_trajectory_csv(const std::filesystem::path& path, const std::vector<Trajectory>& runs);

}  // namespace gradcomp
