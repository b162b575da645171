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

#include "gradcomp/kashin.hpp"

#include <fmt/format.h>

#include <Eigen/QR>
#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace gradcomp {

FrameMatrix::FrameMatrix(Matrix u) : u_(std::move(u)) {
  if (u_.rows() < 1 || u_.cols() <= u_.rows()) {
    throw ParameterError(fmt::format("frame: need D > d >= 1, got {} x {}", u_.rows(), u_.cols()));
  }
}

double FrameMatrix::orthogonality_error() const {
  Matrix gram = u_ * u_.transpose();
  gram.diagonal().array() -= 1.0;
  return gram.norm();
}

RipParams RipParams::make(double delta, double eta, RipSource source) {
  if (!(delta > 0.0 && delta < 1.0) || !(eta > 0.0 && eta < 1.0)) {
    throw ParameterError(fmt::format("RIP parameters must lie in (0, 1): delta = {}, eta = {}",
                                     delta, eta));
  }
  RipParams p;
  p.delta = delta;
  p.eta = eta;
  p.level_K = 1.0 / (std::sqrt(delta) * (1.0 - eta));
  p.source = source;
  return p;
}

namespace {

Index frame_columns(Index d, double lambda) {
  if (d < 1) throw ParameterError("frame: d must be >= 1");
  if (!(lambda > 1.0) || !std::isfinite(lambda)) {
    throw ParameterError(fmt::format("frame: redundancy lambda = {} must exceed 1", lambda));
  }
  const auto D = static_cast<Index>(std::llround(lambda * static_cast<double>(d)));
  if (D <= d) {
    throw ParameterError(fmt::format("frame: round(lambda * d) = {} must exceed d = {}", D, d));
  }
  return D;
}

void require_lambda(double lambda) {
  if (!(lambda > 1.0) || !std::isfinite(lambda)) {
    throw ParameterError(fmt::format("redundancy lambda = {} must exceed 1", lambda));
  }
}

// Orthonormal columns of a D x d Gaussian matrix, or an empty matrix if the
// factorization is numerically rank deficient.
Matrix orthonormal_columns(Index D, Index d, const RngStream& rng) {
  Matrix g = rng.sampler().gaussian(D, d);
  Eigen::HouseholderQR<Eigen::Ref<Matrix>> qr(g);
  const auto diag = g.diagonal();
  const double scale = diag.cwiseAbs().maxCoeff();
  if (!(diag.cwiseAbs().minCoeff() > 1e-10 * scale)) return {};
  Matrix q = qr.householderQ() * Matrix::Identity(D, d);
  // Positive diagonal of R makes Q Haar distributed.
  for (Index j = 0; j < d; ++j) {
    if (diag[j] < 0.0) q.col(j) *= -1.0;
  }
  return q;
}

}  // namespace

FrameMatrix generate_frame(Index d, double lambda, const RngStream& rng) {
  const Index D = frame_columns(d, lambda);
  for (std::uint64_t attempt = 0; attempt < 8; ++attempt) {
    Matrix q = orthonormal_columns(D, d, rng.split(attempt));
    if (q.size() == 0) continue;
    Matrix u = q.transpose();
    q.resize(0, 0);
    return FrameMatrix(std::move(u));
  }
  throw ParameterError("frame: QR factorization repeatedly rank deficient");
}

RipParams theoretical_rip_params(double lambda) {
  require_lambda(lambda);
  const double root = std::sqrt(lambda);
  const double eta = 0.75 + 0.25 / root;
  const double gap = 1.0 - 1.0 / root;
  const double delta = gap * gap / 625.0;
  return RipParams::make(delta, eta, RipSource::Theoretical);
}

double rip_probability_bound(Index d, double lambda) {
  require_lambda(lambda);
  if (d < 1) throw ParameterError("rip_probability_bound: d must be >= 1");
  const double root = std::sqrt(lambda);
  const double rate = (root - 1.0) * (root - 1.0) *
                      (1.0 / 26.0 + std::log(1.0 - 1.0 / root) / 208.0);
  const double bound = 1.0 - 5.0 * std::exp(-static_cast<double>(d) * rate);
  return std::clamp(bound, 0.0, 1.0);
}

double sampled_rip_norm(const FrameMatrix& frame, Index support, int samples,
                        const RngStream& rng) {
  const Index d = frame.d();
  const Index D = frame.D();
  if (support < 1 || support > D) {
    throw ParameterError(fmt::format("RIP sample support {} outside [1, {}]", support, D));
  }
  if (samples < 1) throw ParameterError("RIP sampling needs at least one sample");
  // The d-dimensional row space meets every coordinate subspace of dimension
  // greater than D - d, so the supremum is exactly 1 there.
  if (support > D - d) return 1.0;

  // Large supports are sampled in groups that share one support, so the
  // gathered columns are reused by a matrix product.
  const int group = static_cast<int>(std::clamp<Index>(support / 64, 1, 32));
  const Matrix& u = frame.u();
  Sampler sampler = rng.sampler();
  Matrix columns(d, support);
  Matrix values(support, group);
  Matrix images(d, group);
  double worst = 0.0;
  for (int start = 0; start < samples; start += group) {
    const int count = std::min(group, samples - start);
    const std::vector<Index> cols = sampler.subset(D, support);
    for (Index j = 0; j < support; ++j) columns.col(j) = u.col(cols[static_cast<std::size_t>(j)]);
    for (int c = 0; c < count; ++c) {
      for (Index j = 0; j < support; ++j) values(j, c) = sampler.normal();
    }
    images.leftCols(count).noalias() = columns * values.leftCols(count);
    for (int c = 0; c < count; ++c) {
      const double norm = values.col(c).norm();
      if (norm > 0.0) worst = std::max(worst, images.col(c).norm() / norm);
    }
  }
  return worst;
}

namespace {

Index support_of(double delta, Index D) {
  return static_cast<Index>(std::floor(delta * static_cast<double>(D) + 1e-9));
}

}  // namespace

RipParams estimate_rip(const FrameMatrix& frame, int sample_size, const RngStream& rng) {
  if (sample_size < 1) throw ParameterError("estimate_rip: sample_size must be positive");
  const Index D = frame.D();
  constexpr int kGridPoints = 40;
  constexpr int kRefinePoints = 20;
  constexpr double kDeltaMax = 0.9;
  constexpr double kDeltaMin = 1e-4;

  struct Candidate {
    double delta = 0.0;
    double eta = 1.0;
    double level = std::numeric_limits<double>::infinity();
  };
  Candidate best;
  std::vector<Index> seen;

  // Candidates with the same support size are the same RIP condition; delta
  // is snapped to support / D.
  auto evaluate = [&](double delta, const RngStream& stream) {
    const Index support = support_of(delta, D);
    if (support < 1) return;
    if (std::find(seen.begin(), seen.end(), support) != seen.end()) return;
    seen.push_back(support);
    const double eta = sampled_rip_norm(frame, support, sample_size, stream);
    if (!(eta < 1.0)) return;
    const double snapped = static_cast<double>(support) / static_cast<double>(D);
    const double level = 1.0 / (std::sqrt(snapped) * (1.0 - eta));
    if (level < best.level) best = {snapped, eta, level};
  };

  const double ratio = std::pow(kDeltaMin / kDeltaMax, 1.0 / (kGridPoints - 1));
  std::vector<double> grid(kGridPoints);
  for (int i = 0; i < kGridPoints; ++i) grid[static_cast<std::size_t>(i)] = kDeltaMax * std::pow(ratio, i);
  for (int i = 0; i < kGridPoints; ++i) {
    evaluate(grid[static_cast<std::size_t>(i)], rng.split(static_cast<std::uint64_t>(i)));
  }
  if (!std::isfinite(best.level)) {
    throw EstimationError("estimate_rip: eta >= 1 for every candidate delta");
  }

  // One refinement pass between the neighbours of the best grid point.
  const double hi = std::min(kDeltaMax, best.delta / ratio);
  const double lo = std::max(kDeltaMin, best.delta * ratio);
  for (int j = 0; j < kRefinePoints; ++j) {
    const double delta = lo * std::pow(hi / lo, static_cast<double>(j) / (kRefinePoints - 1));
    evaluate(delta, rng.split("refine").split(static_cast<std::uint64_t>(j)));
  }
  return RipParams::make(best.delta, best.eta, RipSource::Empirical);
}

bool rip_check(const FrameMatrix& frame, const RipParams& params, int samples,
               const RngStream& rng) {
  const Index support = std::max<Index>(1, support_of(params.delta, frame.D()));
  return sampled_rip_norm(frame, support, samples, rng) <= params.eta;
}

int default_rounds(double eta) {
  if (!(eta > 0.0 && eta < 1.0)) throw ParameterError("default_rounds: eta must lie in (0, 1)");
  const double r = std::ceil(std::log(1e-6) / std::log(eta));
  return std::max(1, static_cast<int>(r));
}

KashinCoefficients kashin_representation(const FrameMatrix& frame, const Vector& x,
                                         const RipParams& params, int rounds) {
  require_finite(x, "kashin_representation");
  require_dim(x, frame.d(), "kashin_representation");
  if (rounds < 1) throw ParameterError("kashin_representation: rounds must be >= 1");
  if (!(params.eta < 1.0) || !(params.delta > 0.0)) {
    throw ParameterError("kashin_representation: need delta > 0 and eta < 1");
  }
  const Index D = frame.D();
  const double norm_x = x.norm();

  KashinCoefficients out;
  out.a = Vector::Zero(D);
  out.rounds = rounds;
  out.level_bound = params.level_K / std::sqrt(static_cast<double>(D)) * norm_x;
  if (norm_x == 0.0) return out;

  double clip = norm_x / std::sqrt(params.delta * static_cast<double>(D));
  Vector residual = x;
  Vector b(D);
  for (int round = 0; round < rounds; ++round) {
    b.noalias() = frame.u().transpose() * residual;
    bool clipped = false;
    for (Index i = 0; i < D; ++i) {
      if (std::abs(b[i]) > clip) {
        b[i] = std::copysign(clip, b[i]);
        clipped = true;
      }
    }
    residual.noalias() -= frame.u() * b;
    out.a += b;
    clip *= params.eta;
    // Without clipping the update is the full projection and the residual is
    // at rounding level; further rounds would only add rounding noise.
    if (!clipped) break;
  }
  out.residual_norm = residual.norm();
  return out;
}

Matrix kashin_representation_batch(const FrameMatrix& frame, const Matrix& xs,
                                   const RipParams& params, int rounds) {
  if (xs.rows() != frame.d()) throw ParameterError("kashin_representation_batch: row mismatch");
  if (rounds < 1) throw ParameterError("kashin_representation_batch: rounds must be >= 1");
  const Index D = frame.D();
  const Index n = xs.cols();
  Matrix coeffs = Matrix::Zero(D, n);
  if (n == 0) return coeffs;
  Vector clip(n);
  for (Index j = 0; j < n; ++j) {
    clip[j] = xs.col(j).norm() / std::sqrt(params.delta * static_cast<double>(D));
  }
  Matrix residual = xs;
  Matrix b(D, n);
  for (int round = 0; round < rounds; ++round) {
    b.noalias() = frame.u().transpose() * residual;
    bool clipped = false;
    for (Index j = 0; j < n; ++j) {
      for (Index i = 0; i < D; ++i) {
        if (std::abs(b(i, j)) > clip[j]) {
          b(i, j) = std::copysign(clip[j], b(i, j));
          clipped = true;
        }
      }
    }
    residual.noalias() -= frame.u() * b;
    coeffs += b;
    clip *= params.eta;
    if (!clipped) break;
  }
  return coeffs;
}

void require_magnitude_preserving(const CompressorSpec& inner) {
  const bool ok = inner.kind == SchemeKind::Ternary || inner.kind == SchemeKind::StdDither ||
                  inner.kind == SchemeKind::NatDither;
  if (!ok || inner.contractive) {
    throw ContractError(fmt::format(
        "kashin: inner operator {} must be an unbiased quantizer that keeps each coefficient's "
        "sign and stays within ||a||_inf (ternary, standard or natural dithering)",
        scheme_tag(inner)));
  }
}

CompressorSpec kashin_spec(std::shared_ptr<const FrameMatrix> frame, const RipParams& params,
                           const CompressorSpec& inner, int rounds) {
  if (!frame) throw ParameterError("kashin_spec: missing frame");
  require_magnitude_preserving(inner);
  auto setup = std::make_shared<KashinSetup>();
  setup->frame = std::move(frame);
  setup->params = params;
  setup->rounds = rounds > 0 ? rounds : default_rounds(params.eta);
  setup->inner = inner;
  setup->inner.normalization = Normalization::Linf;
  validate(setup->inner, setup->frame->D());
  CompressorSpec spec;
  spec.kind = SchemeKind::Kashin;
  spec.kashin = std::move(setup);
  return spec;
}

LevelPayload kashin_quantize(const Vector& a, const CompressorSpec& inner, const RngStream& rng) {
  require_magnitude_preserving(inner);
  Sampler sampler = rng.sampler();
  return quantize_on_grid(a, grid_for(inner), Normalization::Linf, sampler);
}

CompressedMessage kashin_compress(const KashinSetup& setup, const Vector& x,
                                  const RngStream& rng) {
  require_magnitude_preserving(setup.inner);
  if (!setup.frame) throw ParameterError("kashin_compress: missing frame");
  require_finite(x, "kashin_compress");
  require_dim(x, setup.frame->d(), "kashin_compress");

  CompressorSpec spec;
  spec.kind = SchemeKind::Kashin;
  spec.kashin = std::make_shared<KashinSetup>(setup);

  CompressedMessage msg;
  msg.origin_dim = x.size();
  msg.bits = theoretical_bits(setup.inner, setup.frame->D());
  msg.scheme_tag = scheme_tag(spec);
  if (x.isZero(0.0)) {
    msg.payload = ZeroPayload{};
    return msg;
  }
  const KashinCoefficients rep = kashin_representation(*setup.frame, x, setup.params, setup.rounds);
  msg.payload = FramePayload{kashin_quantize(rep.a, setup.inner, rng), setup.frame};
  return msg;
}

CompressedMessage kashin_compress(const Vector& x, std::shared_ptr<const FrameMatrix> frame,
                                  const RipParams& params, int rounds,
                                  const CompressorSpec& inner, const RngStream& rng) {
  require_magnitude_preserving(inner);
  KashinSetup setup;
  setup.frame = std::move(frame);
  setup.params = params;
  setup.rounds = rounds;
  setup.inner = inner;
  setup.inner.normalization = Normalization::Linf;
  return kashin_compress(setup, x, rng);
}

double kashin_variance_bound(double lambda) {
  require_lambda(lambda);
  const double root = std::sqrt(lambda);
  const double base = 10.0 * root / (root - 1.0);
  return base * base * base * base;
}

std::vector<double> kashin_trial_errors(const KashinSetup& setup, const Vector& x, int trials,
                                        const RngStream& rng, double scale) {
  require_magnitude_preserving(setup.inner);
  require_dim(x, setup.frame->d(), "kashin_trial_errors");
  std::vector<double> errors(static_cast<std::size_t>(std::max(trials, 0)), 0.0);
  const double denom = x.squaredNorm();
  if (trials <= 0 || denom == 0.0) return errors;

  const FrameMatrix& frame = *setup.frame;
  const Vector a = kashin_representation(frame, x, setup.params, setup.rounds).a;
  const auto grid = grid_for(setup.inner);
  constexpr int kBatch = 128;
  Matrix quantized(frame.D(), kBatch);
  Matrix images(frame.d(), kBatch);
  for (int start = 0; start < trials; start += kBatch) {
    const int count = std::min(kBatch, trials - start);
    for (int j = 0; j < count; ++j) {
      Sampler sampler = rng.split(static_cast<std::uint64_t>(start + j)).sampler();
      quantized.col(j) = decode_levels(quantize_on_grid(a, grid, Normalization::Linf, sampler),
                                       frame.D());
    }
    images.leftCols(count).noalias() = frame.u() * quantized.leftCols(count);
    for (int j = 0; j < count; ++j) {
      errors[static_cast<std::size_t>(start + j)] =
          (scale * images.col(j) - x).squaredNorm() / denom;
    }
  }
  return errors;
}

namespace {

constexpr char kFrameMagic[8] = {'G', 'C', 'K', 'F', 'R', 'A', 'M', 'E'};
constexpr std::size_t kHeaderBytes = 64;

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(v);
  return v;
}

void put_u64(unsigned char* dst, std::uint64_t v) {
  v = to_little(v);
  std::memcpy(dst, &v, 8);
}

void put_f64(unsigned char* dst, double v) { put_u64(dst, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_u64(const unsigned char* src) {
  std::uint64_t v = 0;
  std::memcpy(&v, src, 8);
  return to_little(v);
}

double get_f64(const unsigned char* src) { return std::bit_cast<double>(get_u64(src)); }

}  // namespace

void save_frame(const std::filesystem::path& path, const FrameMatrix& frame, std::uint64_t seed,
                const RipParams& params) {
  std::array<unsigned char, kHeaderBytes> header{};
  std::memcpy(header.data(), kFrameMagic, 8);
  const std::uint32_t version = kFrameFileVersion;
  for (int b = 0; b < 4; ++b) header[8 + b] = static_cast<unsigned char>(version >> (8 * b));
  put_u64(header.data() + 16, static_cast<std::uint64_t>(frame.d()));
  put_u64(header.data() + 24, static_cast<std::uint64_t>(frame.D()));
  put_u64(header.data() + 32, seed);
  put_f64(header.data() + 40, params.delta);
  put_f64(header.data() + 48, params.eta);
  put_f64(header.data() + 56, params.level_K);

  // Write to a temporary name first so an interrupted run never leaves a
  // truncated cache entry behind.
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(fmt::format("cannot write frame file {}", tmp.string()));
    out.write(reinterpret_cast<const char*>(header.data()), kHeaderBytes);
    std::vector<unsigned char> row(static_cast<std::size_t>(frame.D()) * 8);
    for (Index i = 0; i < frame.d(); ++i) {
      for (Index j = 0; j < frame.D(); ++j) put_f64(row.data() + 8 * j, frame.u()(i, j));
      out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw std::runtime_error(fmt::format("short write to frame file {}", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

StoredFrame load_frame(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot open frame file {}", path.string()));
  std::array<unsigned char, kHeaderBytes> header{};
  in.read(reinterpret_cast<char*>(header.data()), kHeaderBytes);
  if (in.gcount() != static_cast<std::streamsize>(kHeaderBytes) ||
      std::memcmp(header.data(), kFrameMagic, 8) != 0) {
    throw DecodeError(fmt::format("{}: not a frame file", path.string()));
  }
  std::uint32_t version = 0;
  for (int b = 0; b < 4; ++b) version |= static_cast<std::uint32_t>(header[8 + b]) << (8 * b);
  if (version != kFrameFileVersion) {
    throw DecodeError(fmt::format("{}: unsupported frame file version {}", path.string(), version));
  }
  const std::uint64_t d = get_u64(header.data() + 16);
  const std::uint64_t D = get_u64(header.data() + 24);
  if (d < 1 || D <= d || D > (std::uint64_t{1} << 32)) {
    throw DecodeError(fmt::format("{}: bad frame shape {} x {}", path.string(), d, D));
  }
  const auto expected = kHeaderBytes + 8 * d * D;
  if (std::filesystem::file_size(path) != expected) {
    throw DecodeError(fmt::format("{}: file size does not match a {} x {} frame", path.string(), d, D));
  }

  StoredFrame stored;
  stored.seed = get_u64(header.data() + 32);
  stored.params.delta = get_f64(header.data() + 40);
  stored.params.eta = get_f64(header.data() + 48);
  stored.params.level_K = get_f64(header.data() + 56);
  stored.params.source = RipSource::Empirical;

  Matrix u(static_cast<Index>(d), static_cast<Index>(D));
  std::vector<unsigned char> row(static_cast<std::size_t>(D) * 8);
  for (Index i = 0; i < u.rows(); ++i) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    if (!in) throw DecodeError(fmt::format("{}: truncated frame data", path.string()));
    for (Index j = 0; j < u.cols(); ++j) u(i, j) = get_f64(row.data() + 8 * j);
  }
  stored.frame = std::make_shared<const FrameMatrix>(std::move(u));
  return stored;
}

RngStream frame_stream(std::uint64_t seed, Index d, Index D) {
  return RngStream(seed).split("frame").split(static_cast<std::uint64_t>(d)).split(
      static_cast<std::uint64_t>(D));
}

StoredFrame cached_frame(const std::filesystem::path& cache_dir, Index d, double lambda,
                         std::uint64_t seed, int rip_samples) {
  const Index D = frame_columns(d, lambda);
  std::filesystem::path file;
  if (!cache_dir.empty()) {
    file = cache_dir / fmt::format("frame_d{}_D{}_seed{}.bin", d, D, seed);
    if (std::filesystem::exists(file)) {
      StoredFrame stored = load_frame(file);
      if (stored.frame->d() == d && stored.frame->D() == D && stored.seed == seed) return stored;
    }
  }
  StoredFrame stored;
  stored.seed = seed;
  stored.frame = std::make_shared<const FrameMatrix>(generate_frame(d, lambda, frame_stream(seed, d, D)));
  const RngStream rip_rng =
      RngStream(seed).split("rip").split(static_cast<std::uint64_t>(d)).split(static_cast<std::uint64_t>(D));
  stored.params = estimate_rip(*stored.frame, rip_samples, rip_rng);
  if (!file.empty()) {
    std::filesystem::create_directories(cache_dir);
    save_frame(file, *stored.frame, seed, stored.params);
  }
  return stored;
}

}  // namespace gradcomp
