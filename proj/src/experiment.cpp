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

#include "gradcomp/experiment.hpp"

#include <fmt/format.h>
#include <openssl/evp.h>

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "json.hpp"

namespace gradcomp {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::string origin_key(const std::string& section, const std::string& key) {
  return section + "." + key;
}

template <typename T>
std::optional<T> parse_integer(std::string_view text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return value;
}

std::optional<double> parse_real(const std::string& text) {
  if (text.empty()) return std::nullopt;
  char* end = nullptr;
  const double value = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

Config Config::from_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("{}: cannot open config file", path.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_string(buffer.str(), path.string());
}

Config Config::from_string(std::string_view text, std::string source) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream stream{std::string(text)};
  try {
    pt::ini_parser::read_ini(stream, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("{}:{}: {}", source, e.line(), e.message()));
  }

  Config cfg;
  cfg.source_ = source;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      throw ConfigError(fmt::format("{}: key '{}' appears outside any [section]", source, section));
    }
    auto& dst = cfg.sections_[section];
    for (const auto& [key, value] : body) dst[key] = trim(value.data());
  }

  // Second pass only to remember where each key was written.
  std::istringstream lines{std::string(text)};
  std::string line;
  std::string section;
  for (int number = 1; std::getline(lines, line); ++number) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == ';' || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) continue;
    cfg.origins_[origin_key(section, trim(std::string_view(t).substr(0, eq)))] =
        fmt::format("{}:{}", source, number);
  }
  return cfg;
}

void Config::set(std::string_view dotted_key, std::string value) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string_view::npos || dot == 0 || dot + 1 == dotted_key.size()) {
    throw ConfigError(fmt::format("--override: expected section.key=value, got '{}'", dotted_key));
  }
  const std::string section(dotted_key.substr(0, dot));
  const std::string key(dotted_key.substr(dot + 1));
  sections_[section][key] = trim(value);
  origins_[origin_key(section, key)] = "--override";
}

bool Config::has(const std::string& section, const std::string& key) const {
  const auto s = sections_.find(section);
  return s != sections_.end() && s->second.count(key) > 0;
}

std::string Config::get(const std::string& section, const std::string& key,
                        const std::string& fallback) const {
  if (!has(section, key)) return fallback;
  return sections_.at(section).at(key);
}

std::string Config::require(const std::string& section, const std::string& key) const {
  if (!has(section, key)) {
    throw ConfigError(fmt::format("{}: [{}] is missing required key '{}'", source_, section, key));
  }
  return sections_.at(section).at(key);
}

long long Config::get_int(const std::string& section, const std::string& key,
                          long long fallback) const {
  if (!has(section, key)) return fallback;
  const auto v = parse_integer<long long>(get(section, key, ""));
  if (!v) fail(section, key, "expected an integer");
  return *v;
}

std::uint64_t Config::get_u64(const std::string& section, const std::string& key,
                              std::uint64_t fallback) const {
  if (!has(section, key)) return fallback;
  const auto v = parse_integer<std::uint64_t>(get(section, key, ""));
  if (!v) fail(section, key, "expected an unsigned 64-bit integer");
  return *v;
}

double Config::get_double(const std::string& section, const std::string& key,
                          double fallback) const {
  if (!has(section, key)) return fallback;
  const auto v = parse_real(get(section, key, ""));
  if (!v) fail(section, key, "expected a finite number");
  return *v;
}

std::vector<long long> Config::get_int_list(const std::string& section, const std::string& key,
                                            const std::vector<long long>& fallback) const {
  if (!has(section, key)) return fallback;
  std::vector<long long> out;
  std::string text = get(section, key, "");
  std::replace(text.begin(), text.end(), ',', ' ');
  std::istringstream items(text);
  std::string item;
  while (items >> item) {
    const auto v = parse_integer<long long>(item);
    if (!v) fail(section, key, fmt::format("'{}' is not an integer", item));
    out.push_back(*v);
  }
  if (out.empty()) fail(section, key, "expected at least one integer");
  return out;
}

std::string Config::where(const std::string& section, const std::string& key) const {
  const auto it = origins_.find(origin_key(section, key));
  return it != origins_.end() ? it->second : source_;
}

void Config::fail(const std::string& section, const std::string& key,
                  const std::string& message) const {
  throw ConfigError(fmt::format("{}: [{}] {}: {}", where(section, key), section, key, message));
}

// ---------------------------------------------------------------------------
// Scheme strings

SchemeRequest parse_scheme(std::string_view text) {
  SchemeRequest req;
  req.text = trim(text);
  if (req.text.empty()) throw ParameterError("empty scheme string");
  const auto colon = req.text.find(':');
  req.name = req.text.substr(0, colon);
  if (colon == std::string::npos) return req;
  std::istringstream items(req.text.substr(colon + 1));
  std::string item;
  while (std::getline(items, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ParameterError(fmt::format("scheme '{}': expected key=value, got '{}'", req.text, item));
    }
    const std::string key = trim(std::string_view(item).substr(0, eq));
    if (!req.params.emplace(key, trim(std::string_view(item).substr(eq + 1))).second) {
      throw ParameterError(fmt::format("scheme '{}': '{}' given twice", req.text, key));
    }
  }
  return req;
}

std::vector<SchemeRequest> parse_scheme_list(std::string_view text) {
  std::vector<SchemeRequest> out;
  std::istringstream items{std::string(text)};
  std::string item;
  while (items >> item) out.push_back(parse_scheme(item));
  if (out.empty()) throw ParameterError("scheme list is empty");
  return out;
}

namespace {

class Params {
 public:
  explicit Params(const SchemeRequest& req) : req_(req) {}

  bool has(const std::string& key) {
    used_.insert(key);
    return req_.params.count(key) > 0;
  }
  long long integer(const std::string& key, long long fallback) {
    if (!has(key)) return fallback;
    const auto v = parse_integer<long long>(req_.params.at(key));
    if (!v) fail(fmt::format("{} must be an integer", key));
    return *v;
  }
  double real(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const auto v = parse_real(req_.params.at(key));
    if (!v) fail(fmt::format("{} must be a number", key));
    return *v;
  }
  std::string text(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    return req_.params.at(key);
  }
  void finish() const {
    for (const auto& [key, value] : req_.params) {
      if (!used_.count(key)) fail(fmt::format("unknown parameter '{}'", key));
    }
  }
  [[noreturn]] void fail(const std::string& message) const {
    throw ParameterError(fmt::format("scheme '{}': {}", req_.text, message));
  }

 private:
  const SchemeRequest& req_;
  std::set<std::string> used_;
};

Normalization parse_norm(Params& p) {
  const std::string norm = p.text("norm", "l2");
  if (norm == "l2") return Normalization::L2;
  if (norm == "linf") return Normalization::Linf;
  p.fail("norm must be l2 or linf");
}

Index sparsity(Params& p, Index d) {
  const bool has_k = p.has("k");
  const bool has_frac = p.has("frac");
  if (has_k == has_frac) p.fail("give exactly one of k or frac");
  if (has_k) return static_cast<Index>(p.integer("k", 0));
  const double frac = p.real("frac", 0.0);
  if (!(frac > 0.0 && frac <= 1.0)) p.fail("frac must lie in (0, 1]");
  return std::max<Index>(1, static_cast<Index>(std::llround(frac * static_cast<double>(d))));
}

int level_count(Params& p) {
  const long long s = p.integer("s", -1);
  if (s < 1 || s > 1000000) p.fail("s must be a positive integer");
  return static_cast<int>(s);
}

struct KashinRequest {
  CompressorSpec inner;
  double lambda = 2.0;
  bool theoretical = false;
  int rounds = 0;
};

KashinRequest kashin_request(Params& p) {
  KashinRequest kr;
  const std::string inner = p.text("inner", "ternary");
  if (inner == "ternary") {
    kr.inner = ternary_spec(Normalization::Linf);
  } else if (inner == "std-dither") {
    kr.inner = standard_dithering_spec(level_count(p), Normalization::Linf);
  } else if (inner == "nat-dither") {
    kr.inner = natural_dithering_spec(level_count(p), Normalization::Linf);
  } else {
    throw ContractError(fmt::format(
        "kashin: inner operator '{}' must be ternary, std-dither or nat-dither", inner));
  }
  kr.lambda = p.real("lambda", 2.0);
  if (!(kr.lambda > 1.0)) p.fail("lambda must exceed 1");
  const std::string rip = p.text("rip", "empirical");
  if (rip != "empirical" && rip != "theoretical") p.fail("rip must be empirical or theoretical");
  kr.theoretical = rip == "theoretical";
  kr.rounds = static_cast<int>(p.integer("rounds", 0));
  return kr;
}

// Everything except frame and polytope construction. Returns nullopt for a
// polytope above the dimension cap; Kashin and polytope specs come back
// without their heavy members.
std::optional<CompressorSpec> light_spec(const SchemeRequest& req, Index d, KashinRequest* kashin,
                                         Index* vertices) {
  Params p(req);
  const bool scaled = p.integer("scaled", 0) != 0;
  CompressorSpec spec;
  bool skip = false;
  if (req.name == "identity") {
    spec = identity_spec();
  } else if (req.name == "randk") {
    spec = rand_k_spec(sparsity(p, d));
  } else if (req.name == "topk") {
    spec = top_k_spec(sparsity(p, d));
  } else if (req.name == "std-dither") {
    spec = standard_dithering_spec(level_count(p), parse_norm(p));
  } else if (req.name == "nat-dither") {
    spec = natural_dithering_spec(level_count(p), parse_norm(p));
  } else if (req.name == "ternary") {
    spec = ternary_spec(parse_norm(p));
  } else if (req.name == "scaled-sign") {
    spec = scaled_sign_spec();
  } else if (req.name == "kashin") {
    KashinRequest kr = kashin_request(p);
    const auto D = static_cast<Index>(std::llround(kr.lambda * static_cast<double>(d)));
    if (D <= d) p.fail("round(lambda * d) must exceed d");
    validate(kr.inner, D);
    if (kashin) *kashin = kr;
    spec.kind = SchemeKind::Kashin;
  } else if (req.name == "polytope") {
    const long long m = p.integer("m", -1);
    if (m < 2) p.fail("m must be an integer >= 2");
    if (d > kPolytopeMaxDim) {
      skip = true;
    } else if (m < 2 * d || m > kPolytopeMaxVertices) {
      p.fail(fmt::format("m must lie in [2d, {}] at d = {}", kPolytopeMaxVertices, d));
    }
    if (vertices) *vertices = static_cast<Index>(m);
    spec.kind = SchemeKind::Polytope;
  } else {
    p.fail("unknown scheme name");
  }
  p.finish();
  if (scaled && spec.kind != SchemeKind::TopK && spec.kind != SchemeKind::ScaledSign) {
    spec.contractive = true;
  } else if (scaled) {
    p.fail("scaled=1 needs an unbiased scheme");
  }
  if (skip) return std::nullopt;
  if (spec.kind != SchemeKind::Kashin && spec.kind != SchemeKind::Polytope) validate(spec, d);
  return spec;
}

}  // namespace

SpecFactory::SpecFactory(fs::path frame_cache, std::uint64_t frame_seed, int rip_samples)
    : frame_cache_(std::move(frame_cache)), frame_seed_(frame_seed), rip_samples_(rip_samples) {}

std::optional<CompressorSpec> SpecFactory::build(const SchemeRequest& request, Index d) {
  KashinRequest kr;
  Index m = 0;
  std::optional<CompressorSpec> spec = light_spec(request, d, &kr, &m);
  if (!spec) return spec;
  const bool contractive = spec->contractive;
  if (spec->kind == SchemeKind::Kashin) {
    const auto D = static_cast<Index>(std::llround(kr.lambda * static_cast<double>(d)));
    auto it = frames_.find({d, D});
    if (it == frames_.end()) {
      it = frames_.emplace(std::pair{d, D}, cached_frame(frame_cache_, d, kr.lambda, frame_seed_, rip_samples_))
               .first;
    }
    const StoredFrame& stored = it->second;
    const RipParams params =
        kr.theoretical ? theoretical_rip_params(stored.frame->lambda()) : stored.params;
    spec = kashin_spec(stored.frame, params, kr.inner, kr.rounds);
  } else if (spec->kind == SchemeKind::Polytope) {
    auto it = polytopes_.find({d, m});
    if (it == polytopes_.end()) {
      const RngStream rng = RngStream(frame_seed_)
                                .split("polytope")
                                .split(static_cast<std::uint64_t>(d))
                                .split(static_cast<std::uint64_t>(m));
      it = polytopes_.emplace(std::pair{d, m}, std::make_shared<const PolytopeFrame>(build_polytope(d, m, rng)))
               .first;
    }
    spec = polytope_spec(it->second);
  }
  spec->contractive = contractive;
  validate(*spec, d);
  return spec;
}

// ---------------------------------------------------------------------------
// Output helpers

std::string format_number(double value) { return fmt::format("{}", value); }

std::string sha256_hex(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot read {}", path.string()));
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256: digest initialization failed");
  }
  std::vector<char> buffer(1 << 20);
  while (in) {
    in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buffer.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &length);
  std::string hex;
  for (unsigned int i = 0; i < length; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

void write_sweep_csv(const fs::path& path, std::vector<VarianceBitsRecord> records) {
  std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    return std::tie(a.scheme_tag, a.d, a.vector_seed) < std::tie(b.scheme_tag, b.d, b.vector_seed);
  });
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  out << "scheme,d,vector_seed,alpha_hat,stderr,bits,bits_per_coord,up_margin\n";
  for (const auto& r : records) {
    out << fmt::format("{},{},{},{},{},{},{},{}\n", r.scheme_tag, r.d, r.vector_seed,
                       format_number(r.alpha_hat), format_number(r.std_error),
                       format_number(r.bits), format_number(r.bits_per_coord),
                       format_number(r.up_margin));
  }
}

void write_trajectory_csv(const fs::path& path, const std::vector<Trajectory>& runs) {
  std::vector<const Trajectory*> order;
  for (const auto& t : runs) order.push_back(&t);
  std::stable_sort(order.begin(), order.end(),
                   [](const Trajectory* a, const Trajectory* b) { return a->scheme_tag < b->scheme_tag; });
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  out << "scheme,iter,subopt,cum_bits\n";
  for (const Trajectory* t : order) {
    for (const auto& pt : t->points) {
      out << fmt::format("{},{},{},{}\n", t->scheme_tag, pt.iter, format_number(pt.subopt),
                         format_number(pt.cum_bits));
    }
  }
}

std::optional<ExperimentKind> parse_experiment_kind(std::string_view name) {
  if (name == "sweep") return ExperimentKind::Sweep;
  if (name == "var-compare") return ExperimentKind::VarCompare;
  if (name == "cgd") return ExperimentKind::Cgd;
  if (name == "dcgd") return ExperimentKind::Dcgd;
  if (name == "rip-estimate") return ExperimentKind::RipEstimate;
  if (name == "frame-gen") return ExperimentKind::FrameGen;
  return std::nullopt;
}

std::string_view experiment_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Sweep:
      return "sweep";
    case ExperimentKind::VarCompare:
      return "var-compare";
    case ExperimentKind::Cgd:
      return "cgd";
    case ExperimentKind::Dcgd:
      return "dcgd";
    case ExperimentKind::RipEstimate:
      return "rip-estimate";
    case ExperimentKind::FrameGen:
      return "frame-gen";
  }
  return "unknown";
}

fs::path resolve_out_dir(const std::optional<std::string>& flag, const Config& config) {
  if (flag && !flag->empty()) return *flag;
  if (config.has("run", "out")) return config.get("run", "out", "");
  if (const char* env = std::getenv("GRADCOMP_OUT_DIR"); env && *env) return env;
  return "gradcomp-out";
}

// ---------------------------------------------------------------------------
// Runner

namespace {

using nlohmann::json;

const std::map<std::string, std::set<std::string>>& allowed_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"run", {"seed", "out", "frame_cache", "frame_seed", "rip_samples"}},
      {"sweep", {"dims", "schemes", "vectors", "trials"}},
      {"var-compare", {"dims", "schemes", "vectors", "trials"}},
      {"cgd",
       {"d", "kappa", "schemes", "max_iter", "tolerance", "stepsize_policy", "gamma",
        "calibration_probes", "calibration_trials"}},
      {"dcgd",
       {"n", "d", "kappa", "schemes", "max_iter", "tolerance", "stepsize_policy", "gamma",
        "calibration_probes", "calibration_trials"}},
      {"rip-estimate", {"d", "lambda", "samples", "check_samples"}},
      {"frame-gen", {"d", "lambda"}},
  };
  return keys;
}

void check_known_keys(const Config& cfg) {
  for (const auto& [section, body] : cfg.sections()) {
    const auto it = allowed_keys().find(section);
    if (it == allowed_keys().end()) {
      const std::string first = body.empty() ? std::string() : body.begin()->first;
      throw ConfigError(fmt::format("{}: unknown section [{}]", cfg.where(section, first), section));
    }
    for (const auto& [key, value] : body) {
      if (!it->second.count(key)) cfg.fail(section, key, "unknown key");
    }
  }
}

struct RunSettings {
  std::uint64_t seed = 1;
  std::uint64_t frame_seed = 1;
  int rip_samples = 1000;
  fs::path frame_cache;
};

RunSettings run_settings(const Config& cfg, const fs::path& out_dir) {
  RunSettings rs;
  rs.seed = cfg.get_u64("run", "seed", 1);
  rs.frame_seed = cfg.get_u64("run", "frame_seed", rs.seed);
  const long long samples = cfg.get_int("run", "rip_samples", 1000);
  if (samples < 1 || samples > 10000000) cfg.fail("run", "rip_samples", "must be a positive integer");
  rs.rip_samples = static_cast<int>(samples);
  rs.frame_cache = cfg.has("run", "frame_cache") ? fs::path(cfg.get("run", "frame_cache", ""))
                                                 : out_dir / "frames";
  return rs;
}

int positive_int(const Config& cfg, const std::string& section, const std::string& key,
                 long long fallback, long long max = 100000000) {
  const long long v = cfg.get_int(section, key, fallback);
  if (v < 1 || v > max) cfg.fail(section, key, fmt::format("must lie in [1, {}]", max));
  return static_cast<int>(v);
}

std::vector<SchemeRequest> schemes_of(const Config& cfg, const std::string& section) {
  const std::string text = cfg.require(section, "schemes");
  try {
    return parse_scheme_list(text);
  } catch (const ParameterError& e) {
    cfg.fail(section, "schemes", e.what());
  } catch (const ContractError& e) {
    cfg.fail(section, "schemes", e.what());
  }
}

// Checks every scheme at every dimension without building frames.
void check_schemes(const Config& cfg, const std::string& section,
                   const std::vector<SchemeRequest>& schemes, const std::vector<Index>& dims) {
  for (const auto& req : schemes) {
    for (Index d : dims) {
      try {
        light_spec(req, d, nullptr, nullptr);
      } catch (const ParameterError& e) {
        cfg.fail(section, "schemes", fmt::format("{} (d = {})", e.what(), d));
      } catch (const ContractError& e) {
        cfg.fail(section, "schemes", fmt::format("{} (d = {})", e.what(), d));
      }
    }
  }
}

std::vector<Index> dims_of(const Config& cfg, const std::string& section,
                           const std::vector<long long>& fallback, Index min_d) {
  std::vector<Index> dims;
  for (long long d : cfg.get_int_list(section, "dims", fallback)) {
    if (d < min_d || d > 10000000) cfg.fail(section, "dims", fmt::format("dimension {} out of range", d));
    dims.push_back(static_cast<Index>(d));
  }
  return dims;
}

double scheme_param(const CompressorSpec& spec) {
  switch (spec.kind) {
    case SchemeKind::RandK:
    case SchemeKind::TopK:
      return static_cast<double>(spec.k);
    case SchemeKind::StdDither:
    case SchemeKind::NatDither:
      return spec.s;
    case SchemeKind::Ternary:
      return 1.0;
    case SchemeKind::Kashin:
      return spec.kashin->inner.kind == SchemeKind::Ternary ? 1.0 : spec.kashin->inner.s;
    case SchemeKind::Polytope:
      return static_cast<double>(spec.polytope->size());
    default:
      return 0.0;
  }
}

struct Output {
  fs::path out_dir;
  RunReport* report;

  fs::path file(const std::string& name) const {
    report->files.push_back(name);
    return out_dir / name;
  }
};

void run_sweep(const Config& cfg, const RunSettings& rs, const Output& out) {
  const std::string sec = "sweep";
  const auto dims = dims_of(cfg, sec, {1000}, 2);
  const auto schemes = schemes_of(cfg, sec);
  const int vectors = positive_int(cfg, sec, "vectors", 100);
  const int trials = positive_int(cfg, sec, "trials", 1000);
  check_schemes(cfg, sec, schemes, dims);

  SpecFactory factory(rs.frame_cache, rs.frame_seed, rs.rip_samples);
  const RngStream master(rs.seed);
  std::vector<VarianceBitsRecord> records;
  for (Index d : dims) {
    std::vector<CompressorSpec> specs;
    for (const auto& req : schemes) {
      if (auto spec = factory.build(req, d)) {
        specs.push_back(std::move(*spec));
      } else {
        out.report->diagnostics.push_back(fmt::format("skipped {} at d = {}", req.text, d));
      }
    }
    auto part = variance_bits_sweep(specs, d, vectors, trials,
                                    master.split("sweep").split(static_cast<std::uint64_t>(d)));
    records.insert(records.end(), part.begin(), part.end());
  }
  write_sweep_csv(out.file("sweep.csv"), std::move(records));
}

void run_var_compare(const Config& cfg, const RunSettings& rs, const Output& out) {
  const std::string sec = "var-compare";
  const auto dims = dims_of(cfg, sec, {100, 1000}, 1);
  const auto schemes = schemes_of(cfg, sec);
  const int vectors = positive_int(cfg, sec, "vectors", 10);
  const int trials = positive_int(cfg, sec, "trials", 1000);
  check_schemes(cfg, sec, schemes, dims);

  struct Row {
    std::string scheme;
    Index d;
    double param;
    int trial;
    double omega;
  };
  SpecFactory factory(rs.frame_cache, rs.frame_seed, rs.rip_samples);
  const RngStream master(rs.seed);
  std::vector<Row> rows;
  for (Index d : dims) {
    const RngStream rng = master.split("var-compare").split(static_cast<std::uint64_t>(d));
    std::vector<Vector> xs;
    for (int j = 0; j < vectors; ++j) {
      xs.push_back(gaussian_test_vector(d, vector_stream(rng, static_cast<std::uint64_t>(j))));
    }
    std::vector<CompressorSpec> specs;
    for (const auto& req : schemes) {
      if (auto spec = factory.build(req, d)) {
        specs.push_back(std::move(*spec));
      } else {
        out.report->diagnostics.push_back(fmt::format("skipped {} at d = {}", req.text, d));
      }
    }
    std::vector<Row> part(specs.size() * xs.size());
    parallel_for(part.size(), [&](std::size_t idx) {
      const std::size_t s = idx / xs.size();
      const std::size_t j = idx % xs.size();
      const VarianceEstimate est =
          empirical_normalized_variance(specs[s], xs[j], trials, rng.split("trials").split(j));
      part[idx] = {scheme_tag(specs[s]), d, scheme_param(specs[s]), static_cast<int>(j), est.mean};
    });
    rows.insert(rows.end(), part.begin(), part.end());
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::tie(a.scheme, a.d, a.param, a.trial) < std::tie(b.scheme, b.d, b.param, b.trial);
  });
  std::ofstream csv(out.file("variance_compare.csv"), std::ios::binary | std::ios::trunc);
  csv << "scheme,d,param,trial,omega_hat\n";
  for (const Row& r : rows) {
    csv << fmt::format("{},{},{},{},{}\n", r.scheme, r.d, format_number(r.param), r.trial,
                       format_number(r.omega));
  }
}

struct DescentSettings {
  Index d = 0;
  double kappa = 0.0;
  int n = 1;
  int max_iter = 0;
  double tolerance = kDefaultTolerance;
  bool calibrated = false;
  std::optional<double> gamma;
  int probes = 10;
  int calibration_trials = 200;
  std::vector<SchemeRequest> schemes;
};

DescentSettings descent_settings(const Config& cfg, const std::string& sec, bool distributed) {
  DescentSettings ds;
  ds.d = positive_int(cfg, sec, "d", distributed ? 1000 : 100, 100000);
  ds.kappa = cfg.get_double(sec, "kappa", 100.0);
  if (!(ds.kappa >= 1.0)) cfg.fail(sec, "kappa", "must be >= 1");
  if (ds.d == 1 && ds.kappa != 1.0) cfg.fail(sec, "kappa", "must be 1 when d = 1");
  if (distributed) ds.n = positive_int(cfg, sec, "n", 10, 100000);
  ds.max_iter = positive_int(cfg, sec, "max_iter", 10000);
  ds.tolerance = cfg.get_double(sec, "tolerance", kDefaultTolerance);
  if (!(ds.tolerance > 0.0 && ds.tolerance < 1.0)) cfg.fail(sec, "tolerance", "must lie in (0, 1)");
  const std::string policy = cfg.get(sec, "stepsize_policy", "theory");
  if (policy != "theory" && policy != "calibrated") {
    cfg.fail(sec, "stepsize_policy", "must be theory or calibrated");
  }
  ds.calibrated = policy == "calibrated";
  if (cfg.has(sec, "gamma")) {
    ds.gamma = cfg.get_double(sec, "gamma", 0.0);
    if (!(*ds.gamma > 0.0)) cfg.fail(sec, "gamma", "must be positive");
  }
  ds.probes = positive_int(cfg, sec, "calibration_probes", 10);
  ds.calibration_trials = positive_int(cfg, sec, "calibration_trials", 200);
  ds.schemes = schemes_of(cfg, sec);
  check_schemes(cfg, sec, ds.schemes, {ds.d});
  return ds;
}

double choose_stepsize(const DescentSettings& ds, const CompressorSpec& spec, double L,
                       const RngStream& calibration) {
  if (ds.gamma) return *ds.gamma;
  if (ds.calibrated && is_unbiased(spec)) {
    const double omega = calibrated_omega(spec, ds.d, ds.probes, ds.calibration_trials, calibration);
    return stepsize_from_omega(omega, ds.n, L);
  }
  return default_stepsize(spec, ds.d, ds.n, L);
}

template <typename Problem, typename RunFn>
void run_descent(const DescentSettings& ds, const RunSettings& rs, const std::string& name,
                 const Problem& problem, double L, RunFn run, const Output& out) {
  SpecFactory factory(rs.frame_cache, rs.frame_seed, rs.rip_samples);
  const RngStream master(rs.seed);
  std::vector<CompressorSpec> specs;
  for (const auto& req : ds.schemes) {
    auto spec = factory.build(req, ds.d);
    if (!spec) throw ConfigError(fmt::format("scheme {} does not apply at d = {}", req.text, ds.d));
    specs.push_back(std::move(*spec));
  }
  std::vector<Trajectory> runs(specs.size());
  std::vector<std::string> notes(specs.size());
  std::vector<char> diverged(specs.size(), 0);
  parallel_for(specs.size(), [&](std::size_t i) {
    const double gamma = choose_stepsize(ds, specs[i], L, master.split("calibrate"));
    try {
      runs[i] = run(problem, specs[i], gamma, master.split(name).split("run"));
      notes[i] = fmt::format("{}: gamma = {}, iterations = {}, final suboptimality = {}, {}",
                             runs[i].scheme_tag, format_number(gamma), runs[i].points.back().iter,
                             format_number(runs[i].points.back().subopt),
                             runs[i].converged ? "converged" : "iteration limit reached");
    } catch (const DivergenceError& e) {
      runs[i] = e.trajectory();
      diverged[i] = 1;
      notes[i] = fmt::format("{}: gamma = {}, {}", runs[i].scheme_tag, format_number(gamma), e.what());
    }
  });
  for (std::size_t i = 0; i < specs.size(); ++i) {
    out.report->diagnostics.push_back(notes[i]);
    if (diverged[i]) {
      out.report->status = "diverged";
      out.report->exit_code = 3;
    }
  }
  write_trajectory_csv(out.file(fmt::format("trajectory_{}.csv", name)), runs);
}

void run_cgd(const Config& cfg, const RunSettings& rs, const Output& out) {
  const DescentSettings ds = descent_settings(cfg, "cgd", false);
  const QuadraticProblem p =
      generate_quadratic(ds.d, ds.kappa, RngStream(rs.seed).split("cgd").split("problem"));
  run_descent(ds, rs, "cgd", p, p.L,
              [&ds](const QuadraticProblem& q, const CompressorSpec& spec, double gamma,
                    const RngStream& rng) { return cgd_run(q, spec, gamma, ds.max_iter, rng, ds.tolerance); },
              out);
}

void run_dcgd(const Config& cfg, const RunSettings& rs, const Output& out) {
  const DescentSettings ds = descent_settings(cfg, "dcgd", true);
  const DistributedProblem p = generate_distributed_quadratic(
      ds.n, ds.d, ds.kappa, RngStream(rs.seed).split("dcgd").split("problem"));
  run_descent(ds, rs, "dcgd", p, p.L,
              [&ds](const DistributedProblem& q, const CompressorSpec& spec, double gamma,
                    const RngStream& rng) { return dcgd_run(q, spec, gamma, ds.max_iter, rng, ds.tolerance); },
              out);
}

json rip_json(const RipParams& params, Index D) {
  return json{{"delta", params.delta},
              {"eta", params.eta},
              {"K", params.level_K},
              {"support", static_cast<long long>(std::floor(params.delta * static_cast<double>(D) + 1e-9))},
              {"rounds", default_rounds(params.eta)}};
}

void run_rip_estimate(const Config& cfg, const RunSettings& rs, const Output& out) {
  const std::string sec = "rip-estimate";
  const Index d = positive_int(cfg, sec, "d", 64, 100000);
  const double lambda = cfg.get_double(sec, "lambda", 2.0);
  const auto D = static_cast<Index>(std::llround(lambda * static_cast<double>(d)));
  if (!(lambda > 1.0) || D <= d) cfg.fail(sec, "lambda", "round(lambda * d) must exceed d");
  const int samples = positive_int(cfg, sec, "samples", 1000);
  const int check_samples = positive_int(cfg, sec, "check_samples", 1000);

  const StoredFrame stored = cached_frame({}, d, lambda, rs.frame_seed, samples);
  const RipParams theory = theoretical_rip_params(stored.frame->lambda());
  const bool passes = rip_check(*stored.frame, theory, check_samples,
                                RngStream(rs.seed).split("rip-check"));
  json doc;
  doc["d"] = d;
  doc["D"] = D;
  doc["lambda"] = stored.frame->lambda();
  doc["frame_seed"] = rs.frame_seed;
  doc["samples"] = samples;
  doc["orthogonality_error"] = stored.frame->orthogonality_error();
  doc["empirical"] = rip_json(stored.params, D);
  doc["theoretical"] = rip_json(theory, D);
  doc["theoretical"]["omega_lambda"] = kashin_variance_bound(stored.frame->lambda());
  doc["theoretical"]["probability_bound"] = rip_probability_bound(d, stored.frame->lambda());
  doc["theoretical"]["sampled_check_passes"] = passes;
  std::ofstream(out.file("rip_estimate.json"), std::ios::binary | std::ios::trunc) << doc.dump(2) << "\n";
}

void run_frame_gen(const Config& cfg, const RunSettings& rs, const Output& out) {
  const std::string sec = "frame-gen";
  const Index d = positive_int(cfg, sec, "d", 1000, 100000);
  const double lambda = cfg.get_double(sec, "lambda", 2.0);
  const auto D = static_cast<Index>(std::llround(lambda * static_cast<double>(d)));
  if (!(lambda > 1.0) || D <= d) cfg.fail(sec, "lambda", "round(lambda * d) must exceed d");

  const StoredFrame stored = cached_frame(rs.frame_cache, d, lambda, rs.frame_seed, rs.rip_samples);
  const fs::path file = rs.frame_cache / fmt::format("frame_d{}_D{}_seed{}.bin", d, D, rs.frame_seed);
  json doc;
  doc["path"] = file.string();
  doc["d"] = d;
  doc["D"] = D;
  doc["seed"] = rs.frame_seed;
  doc["sha256"] = sha256_hex(file);
  doc["rip"] = rip_json(stored.params, D);
  std::ofstream(out.file("frame_gen.json"), std::ios::binary | std::ios::trunc) << doc.dump(2) << "\n";
}

void write_manifest(ExperimentKind kind, const Config& cfg, const RunSettings& rs,
                    const fs::path& out_dir, const RunReport& report) {
  json doc;
  doc["tool"] = "gradcomp";
  doc["version"] = std::string(kVersion);
  doc["experiment"] = std::string(experiment_name(kind));
  doc["seed"] = rs.seed;
  doc["frame_seed"] = rs.frame_seed;
  json config = json::object();
  for (const auto& [section, body] : cfg.sections()) {
    for (const auto& [key, value] : body) config[section][key] = value;
  }
  doc["config"] = config;
  doc["wall_time_seconds"] = report.wall_seconds;
  doc["status"] = report.status;
  doc["exit_code"] = report.exit_code;
  doc["diagnostics"] = report.diagnostics;
  json files = json::array();
  for (const auto& rel : report.files) {
    const fs::path full = out_dir / rel;
    files.push_back({{"path", rel.generic_string()},
                     {"bytes", fs::file_size(full)},
                     {"sha256", sha256_hex(full)}});
  }
  doc["files"] = files;
  std::ofstream(out_dir / "manifest.json", std::ios::binary | std::ios::trunc) << doc.dump(2) << "\n";
}

}  // namespace

RunReport run_experiment(ExperimentKind kind, const Config& config, const fs::path& out_dir) {
  const auto start = std::chrono::steady_clock::now();
  check_known_keys(config);
  const RunSettings rs = run_settings(config, out_dir);
  RunReport report;
  fs::create_directories(out_dir);
  const Output out{out_dir, &report};
  switch (kind) {
    case ExperimentKind::Sweep:
      run_sweep(config, rs, out);
      break;
    case ExperimentKind::VarCompare:
      run_var_compare(config, rs, out);
      break;
    case ExperimentKind::Cgd:
      run_cgd(config, rs, out);
      break;
    case ExperimentKind::Dcgd:
      run_dcgd(config, rs, out);
      break;
    case ExperimentKind::RipEstimate:
      run_rip_estimate(config, rs, out);
      break;
    case ExperimentKind::FrameGen:
      run_frame_gen(config, rs, out);
      break;
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_manifest(kind, config, rs, out_dir, report);
  return report;
}

}  // namespace gradcomp
