#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gradcomp/analysis.hpp"
#include "gradcomp/kashin.hpp"

using namespace gradcomp;
namespace fs = std::filesystem;

namespace {

Vector gaussian(Index d, std::uint64_t seed) { return RngStream(seed).sampler().gaussian(d); }

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("gradcomp_test_kashin_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("generated frames have orthonormal rows") {
  for (Index d : {1, 5, 64}) {
    const FrameMatrix f = generate_frame(d, 2.0, RngStream(d));
    CHECK(f.d() == d);
    CHECK(f.D() == 2 * d);
    CHECK(f.orthogonality_error() < 1e-12);
    const Vector x = gaussian(d, 3);
    // Parseval: ||U^T x|| = ||x|| and U U^T x = x.
    CHECK(f.analyze(x).norm() == doctest::Approx(x.norm()).epsilon(1e-12));
    CHECK((f.synthesize(f.analyze(x)) - x).norm() < 1e-12 * x.norm());
  }
  CHECK(generate_frame(10, 1.5, RngStream(1)).D() == 15);
  CHECK_THROWS_AS(generate_frame(10, 1.0, RngStream(1)), ParameterError);
  CHECK_THROWS_AS(generate_frame(0, 2.0, RngStream(1)), ParameterError);
}

TEST_CASE("frame generation is deterministic per stream") {
  const FrameMatrix a = generate_frame(20, 2.0, RngStream(5));
  const FrameMatrix b = generate_frame(20, 2.0, RngStream(5));
  const FrameMatrix c = generate_frame(20, 2.0, RngStream(6));
  CHECK(a.u() == b.u());
  CHECK(a.u() != c.u());
}

TEST_CASE("theoretical parameters") {
  const RipParams p = theoretical_rip_params(4.0);
  CHECK(p.eta == doctest::Approx(0.875));
  CHECK(p.delta == doctest::Approx(0.25 / 625.0));
  CHECK(p.level_K == doctest::Approx(400.0));
  CHECK(p.source == RipSource::Theoretical);

  // K^2 equals the variance bound at every lambda.
  for (double lambda : {1.5, 2.0, 4.0, 9.0}) {
    const RipParams q = theoretical_rip_params(lambda);
    CHECK(q.level_K * q.level_K == doctest::Approx(kashin_variance_bound(lambda)).epsilon(1e-12));
  }
  CHECK(kashin_variance_bound(2.0) == doctest::Approx(1358822.5099390845).epsilon(1e-12));
  CHECK_THROWS_AS(theoretical_rip_params(1.0), ParameterError);
  CHECK_THROWS_AS(RipParams::make(0.0, 0.5, RipSource::Empirical), ParameterError);
  CHECK_THROWS_AS(RipParams::make(0.5, 1.0, RipSource::Empirical), ParameterError);
}

TEST_CASE("probability bound") {
  CHECK(rip_probability_bound(10, 2.0) == 0.0);
  CHECK(rip_probability_bound(1000, 2.0) == doctest::Approx(0.98125114397).epsilon(1e-9));
  double prev = 0.0;
  for (Index d : {100, 300, 1000, 3000}) {
    const double p = rip_probability_bound(d, 2.0);
    CHECK(p >= prev);
    CHECK(p <= 1.0);
    prev = p;
  }
}

TEST_CASE("default rounds") {
  CHECK(default_rounds(0.5) == 20);
  CHECK(std::pow(0.9, default_rounds(0.9)) <= 1e-6);
  CHECK(std::pow(0.9, default_rounds(0.9) - 1) > 1e-6);
}

TEST_CASE("sampled RIP norm") {
  const FrameMatrix f = generate_frame(32, 2.0, RngStream(2));
  const double n1 = sampled_rip_norm(f, 4, 200, RngStream(3));
  CHECK(n1 > 0.0);
  CHECK(n1 <= 1.0 + 1e-12);
  CHECK(n1 == sampled_rip_norm(f, 4, 200, RngStream(3)));
  CHECK(sampled_rip_norm(f, f.D() - f.d() + 1, 10, RngStream(3)) == 1.0);
  // Larger supports can only look less contractive in the worst case.
  CHECK(sampled_rip_norm(f, 30, 200, RngStream(4)) >= sampled_rip_norm(f, 1, 200, RngStream(4)) - 0.2);
}

TEST_CASE("empirical RIP estimate beats the theoretical level") {
  const FrameMatrix f = generate_frame(64, 2.0, RngStream(8));
  const RipParams est = estimate_rip(f, 200, RngStream(9));
  CHECK(est.source == RipSource::Empirical);
  CHECK(est.delta > 0.0);
  CHECK(est.delta < 1.0);
  CHECK(est.eta < 1.0);
  CHECK(est.level_K == doctest::Approx(1.0 / (std::sqrt(est.delta) * (1.0 - est.eta))));
  CHECK(est.level_K < theoretical_rip_params(2.0).level_K);
  // delta snapped to a whole support size.
  const double support = est.delta * static_cast<double>(f.D());
  CHECK(support == doctest::Approx(std::round(support)));
  const RipParams again = estimate_rip(f, 200, RngStream(9));
  CHECK(again.delta == est.delta);
  CHECK(again.eta == est.eta);
}

TEST_CASE("Kashin representation output contract") {
  const FrameMatrix f = generate_frame(48, 2.0, RngStream(12));
  const RipParams p = estimate_rip(f, 300, RngStream(13));
  const int r = default_rounds(p.eta);
  const double root_D = std::sqrt(static_cast<double>(f.D()));
  for (std::uint64_t s = 0; s < 30; ++s) {
    Vector x = gaussian(48, 100 + s);
    if (s % 5 == 0) {
      // Spiky inputs exercise the clipping path.
      x.setZero();
      x[static_cast<Index>(s) % 48] = 10.0;
    }
    const KashinCoefficients kc = kashin_representation(f, x, p, r);
    CHECK(kc.rounds == r);
    CHECK(kc.residual_norm == doctest::Approx((x - f.synthesize(kc.a)).norm()).epsilon(1e-9));
    CHECK(kc.residual_norm <= std::pow(p.eta, r) * x.norm() + 1e-12);
    CHECK(kc.level_bound == doctest::Approx(p.level_K / root_D * x.norm()));
    CHECK(kc.a.cwiseAbs().maxCoeff() <= kc.level_bound * (1.0 + 1e-12));
  }
}

TEST_CASE("zero vector has zero representation") {
  const FrameMatrix f = generate_frame(8, 2.0, RngStream(1));
  const KashinCoefficients kc = kashin_representation(f, Vector::Zero(8), theoretical_rip_params(2.0), 3);
  CHECK(kc.a == Vector::Zero(16));
  CHECK(kc.residual_norm == 0.0);
}

TEST_CASE("batch representation matches the single-vector path") {
  const FrameMatrix f = generate_frame(24, 2.0, RngStream(4));
  const RipParams p = estimate_rip(f, 100, RngStream(5));
  Matrix xs(24, 5);
  for (Index j = 0; j < 5; ++j) xs.col(j) = gaussian(24, 50 + static_cast<std::uint64_t>(j));
  xs.col(3).setZero();
  const Matrix batch = kashin_representation_batch(f, xs, p, 10);
  for (Index j = 0; j < 5; ++j) {
    const Vector single = kashin_representation(f, xs.col(j), p, 10).a;
    CHECK((batch.col(j) - single).norm() <= 1e-10 * (1.0 + single.norm()));
  }
}

TEST_CASE("sparsifiers are rejected as inner quantizers") {
  auto frame = std::make_shared<const FrameMatrix>(generate_frame(8, 2.0, RngStream(1)));
  const RipParams p = theoretical_rip_params(2.0);
  CHECK_THROWS_AS(kashin_spec(frame, p, rand_k_spec(2)), ContractError);
  CHECK_THROWS_AS(kashin_spec(frame, p, top_k_spec(2)), ContractError);
  CHECK_THROWS_AS(kashin_spec(frame, p, scaled_sign_spec()), ContractError);
  CHECK_NOTHROW(kashin_spec(frame, p, ternary_spec()));
  CHECK_NOTHROW(kashin_spec(frame, p, natural_dithering_spec(2)));
  CHECK_NOTHROW(kashin_spec(frame, p, standard_dithering_spec(2)));
}

TEST_CASE("Kashin compression") {
  auto frame = std::make_shared<const FrameMatrix>(generate_frame(32, 2.0, RngStream(21)));
  const RipParams p = estimate_rip(*frame, 200, RngStream(22));
  const CompressorSpec spec = kashin_spec(frame, p, ternary_spec());
  CHECK(theoretical_bits(spec, 32) == doctest::Approx(31.0 + 64.0 * std::log2(3.0)));
  CHECK(omega_of(spec, 32) == doctest::Approx(p.level_K * p.level_K));
  CHECK_THROWS_AS(validate(spec, 31), ParameterError);

  const Vector x = gaussian(32, 23);
  const CompressedMessage msg = compress(spec, x, RngStream(24));
  CHECK(msg.bits == theoretical_bits(spec, 32));
  const Vector y = decode(msg);
  CHECK(y.size() == 32);
  // Uniform error: ||U C(a) - U a|| <= ||C(a) - a|| <= sqrt(D) max|a_i| <= K ||x||.
  CHECK((y - x).norm() <= p.level_K * x.norm() + 1e-9);

  // Trial errors agree with decode(compress(...)).
  const KashinSetup& setup = *spec.kashin;
  const auto errs = kashin_trial_errors(setup, x, 10, RngStream(30));
  for (std::uint64_t t = 0; t < 10; ++t) {
    const Vector z = decode(kashin_compress(setup, x, RngStream(30).split(t)));
    CHECK(errs[t] == doctest::Approx((z - x).squaredNorm() / x.squaredNorm()).epsilon(1e-9));
  }

  const CompressedMessage zero = compress(spec, Vector::Zero(32), RngStream(1));
  CHECK(decode(zero) == Vector::Zero(32));
}

TEST_CASE("Kashin compression is unbiased up to the residual") {
  auto frame = std::make_shared<const FrameMatrix>(generate_frame(6, 2.0, RngStream(41)));
  const RipParams p = estimate_rip(*frame, 200, RngStream(42));
  const CompressorSpec spec = kashin_spec(frame, p, natural_dithering_spec(2));
  const Vector x = gaussian(6, 43);
  const int trials = 40000;
  Vector sum = Vector::Zero(6);
  Vector sumsq = Vector::Zero(6);
  for (int t = 0; t < trials; ++t) {
    const Vector y = decode(compress(spec, x, RngStream(44).split(static_cast<std::uint64_t>(t))));
    sum += y;
    sumsq += y.cwiseProduct(y);
  }
  const Vector mean = sum / trials;
  const Vector var = sumsq / trials - mean.cwiseProduct(mean);
  for (Index i = 0; i < 6; ++i) {
    CHECK(std::abs(mean[i] - x[i]) <= 5.0 * std::sqrt(var[i] / trials) + 1e-6 * x.norm());
  }
}

TEST_CASE("frame file round trip") {
  const fs::path dir = scratch_dir("roundtrip");
  const FrameMatrix f = generate_frame(7, 2.0, RngStream(3));
  const RipParams p = RipParams::make(0.25, 0.5, RipSource::Empirical);
  const fs::path file = dir / "f.bin";
  save_frame(file, f, 99, p);
  CHECK(fs::file_size(file) == 64 + 8 * 7 * 14);
  const StoredFrame s = load_frame(file);
  CHECK(s.frame->u() == f.u());
  CHECK(s.seed == 99);
  CHECK(s.params.delta == p.delta);
  CHECK(s.params.eta == p.eta);
  CHECK(s.params.level_K == p.level_K);

  // Truncated and corrupted files are rejected.
  fs::resize_file(file, 100);
  CHECK_THROWS_AS(load_frame(file), DecodeError);
  {
    std::ofstream out(dir / "bad.bin", std::ios::binary);
    out << "NOTAFRAMEFILE_______________________________________________________";
  }
  CHECK_THROWS_AS(load_frame(dir / "bad.bin"), DecodeError);
  CHECK_THROWS(load_frame(dir / "missing.bin"));
  fs::remove_all(dir);
}

TEST_CASE("frame cache reuses the stored frame") {
  const fs::path dir = scratch_dir("cache");
  const StoredFrame a = cached_frame(dir, 12, 2.0, 5, 50);
  CHECK(fs::exists(dir / "frame_d12_D24_seed5.bin"));
  const StoredFrame b = cached_frame(dir, 12, 2.0, 5, 50);
  CHECK(a.frame->u() == b.frame->u());
  CHECK(a.params.level_K == b.params.level_K);
  const StoredFrame c = cached_frame("", 12, 2.0, 5, 50);
  CHECK(c.frame->u() == a.frame->u());
  CHECK(c.params.level_K == a.params.level_K);
  fs::remove_all(dir);
}
