#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "gradcomp/kashin.hpp"
#include "gradcomp/optim.hpp"

using namespace gradcomp;

TEST_CASE("generated quadratics have the requested spectrum") {
  const QuadraticProblem p = generate_quadratic(20, 50.0, RngStream(1));
  CHECK(p.dim() == 20);
  CHECK((p.A - p.A.transpose()).norm() == 0.0);
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(p.A);
  CHECK(eig.eigenvalues()[0] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(eig.eigenvalues()[19] == doctest::Approx(50.0).epsilon(1e-10));
  CHECK(p.L == 50.0);
  CHECK(p.mu == 1.0);
  CHECK((p.gradient(p.x_star)).norm() < 1e-10);
  CHECK(p.value(p.x_star) == doctest::Approx(p.f_star));
  const Vector x = RngStream(2).sampler().gaussian(20);
  CHECK(p.gap(x) == doctest::Approx(p.value(x) - p.f_star).epsilon(1e-10));
  CHECK_THROWS_AS(generate_quadratic(5, 0.5, RngStream(1)), ParameterError);
  CHECK_THROWS_AS(generate_quadratic(1, 2.0, RngStream(1)), ParameterError);
  CHECK_NOTHROW(generate_quadratic(1, 1.0, RngStream(1)));
}

TEST_CASE("gradient matches central finite differences") {
  const QuadraticProblem p = generate_quadratic(15, 100.0, RngStream(3));
  const Vector x = RngStream(4).sampler().gaussian(15);
  const Vector g = p.gradient(x);
  const double h = 1e-5;
  Vector fd(15);
  for (Index i = 0; i < 15; ++i) {
    Vector xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    fd[i] = (p.value(xp) - p.value(xm)) / (2 * h);
  }
  CHECK((fd - g).norm() / g.norm() < 1e-6);

  const DistributedProblem dp = generate_distributed_quadratic(3, 15, 10.0, RngStream(5));
  Vector sum = Vector::Zero(15);
  for (const auto& w : dp.workers) sum += w.gradient(x);
  CHECK((sum / 3.0 - dp.gradient(x)).norm() < 1e-12 * sum.norm());
}

TEST_CASE("distributed problem statistics") {
  const DistributedProblem dp = generate_distributed_quadratic(4, 10, 20.0, RngStream(6));
  CHECK(dp.size() == 4);
  CHECK(dp.mu >= 1.0 - 1e-12);
  CHECK(dp.L <= 20.0 + 1e-12);
  CHECK(dp.kappa == doctest::Approx(dp.L / dp.mu));
  // Worker i is reproducible from its own stream.
  const DistributedProblem again = generate_distributed_quadratic(4, 10, 20.0, RngStream(6));
  CHECK(again.workers[2].A == dp.workers[2].A);
}

TEST_CASE("kappa = 1 with gamma = 1/L converges in one step") {
  const QuadraticProblem p = generate_quadratic(10, 1.0, RngStream(7));
  const Trajectory t = cgd_run(p, identity_spec(), 1.0, 5, RngStream(8));
  CHECK(t.converged);
  CHECK(t.points.size() == 2);
  CHECK(t.points[1].subopt < 1e-20);
}

TEST_CASE("identity descent contracts at the classical rate") {
  const QuadraticProblem p = generate_quadratic(30, 10.0, RngStream(9));
  const double gamma = 2.0 / (p.mu + p.L);
  const double rate = std::pow((p.kappa - 1.0) / (p.kappa + 1.0), 2);
  const Trajectory t = cgd_run(p, identity_spec(), gamma, 50, RngStream(10), 0.0);
  const auto s = suboptimality_series(t);
  REQUIRE(s.size() == 51);
  CHECK(s[0] == 1.0);
  for (std::size_t k = 1; k < s.size(); ++k) {
    CHECK(s[k] <= s[k - 1] * rate * (1.0 + 1e-9) + 1e-300);
    CHECK(t.points[k].cum_bits == doctest::Approx(32.0 * 30.0 * static_cast<double>(k)));
  }
}

TEST_CASE("a single worker reproduces compressed GD") {
  const DistributedProblem dp = generate_distributed_quadratic(1, 12, 5.0, RngStream(11));
  QuadraticProblem p = dp.workers[0];
  const CompressorSpec spec = ternary_spec();
  const double gamma = default_stepsize(spec, 12, 1, dp.L);
  const Trajectory a = dcgd_run(dp, spec, gamma, 30, RngStream(12));
  const Trajectory b = cgd_run(p, spec, gamma, 30, RngStream(12));
  REQUIRE(a.points.size() == b.points.size());
  for (std::size_t k = 0; k < a.points.size(); ++k) {
    CHECK(a.points[k].subopt == doctest::Approx(b.points[k].subopt).epsilon(1e-10));
    CHECK(a.points[k].cum_bits == b.points[k].cum_bits);
  }
}

TEST_CASE("distributed bits count every worker") {
  const DistributedProblem dp = generate_distributed_quadratic(5, 8, 4.0, RngStream(13));
  const CompressorSpec spec = ternary_spec();
  const Trajectory t = dcgd_run(dp, spec, default_stepsize(spec, 8, 5, dp.L), 10, RngStream(14));
  for (std::size_t k = 0; k < t.points.size(); ++k) {
    CHECK(t.points[k].cum_bits == doctest::Approx(5.0 * theoretical_bits(spec, 8) * static_cast<double>(k)));
  }
}

TEST_CASE("descent with an unbiased compressor decreases on average") {
  const QuadraticProblem p = generate_quadratic(20, 10.0, RngStream(15));
  const CompressorSpec spec = rand_k_spec(5);
  const double gamma = 1.0 / ((1.0 + omega_of(spec, 20)) * p.L);
  std::vector<double> mean(61, 0.0);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Trajectory t = cgd_run(p, spec, gamma, 60, RngStream(100 + s), 0.0);
    for (std::size_t k = 0; k < t.points.size(); ++k) mean[k] += t.points[k].subopt / 20.0;
  }
  for (std::size_t k = 10; k < mean.size(); k += 10) CHECK(mean[k] < mean[k - 10]);
  CHECK(mean[60] < 0.1);
}

TEST_CASE("Kashin descent matches the generic compression path") {
  const DistributedProblem dp = generate_distributed_quadratic(3, 16, 4.0, RngStream(16));
  auto frame = std::make_shared<const FrameMatrix>(generate_frame(16, 2.0, RngStream(17)));
  const CompressorSpec spec = kashin_spec(frame, estimate_rip(*frame, 100, RngStream(18)), ternary_spec());
  const Trajectory t = dcgd_run(dp, spec, 0.05, 5, RngStream(19), 0.0);
  // Replay the first step by hand.
  const Vector x0 = initial_point(16, RngStream(19));
  const RngStream round = RngStream(19).split("compress").split(std::uint64_t{0});
  Vector g = Vector::Zero(16);
  for (std::size_t i = 0; i < 3; ++i) {
    g += decode(compress(spec, dp.workers[i].gradient(x0), round.split(static_cast<std::uint64_t>(i))));
  }
  const Vector x1 = x0 - 0.05 * g / 3.0;
  CHECK(t.points[1].subopt == doctest::Approx(dp.value(x1) / dp.value(x0)).epsilon(1e-9));
}

TEST_CASE("divergence is reported with the partial trajectory") {
  const QuadraticProblem p = generate_quadratic(10, 10.0, RngStream(20));
  try {
    cgd_run(p, identity_spec(), 1.0, 1000, RngStream(21));
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.trajectory().points.size() > 1);
    CHECK_FALSE(e.trajectory().converged);
  }
  CHECK_THROWS_AS(cgd_run(p, identity_spec(), -1.0, 10, RngStream(1)), ParameterError);
}

TEST_CASE("stepsize rules") {
  CHECK(stepsize_from_omega(9.0, 1, 2.0) == doctest::Approx(0.05));
  CHECK(stepsize_from_omega(9.0, 10, 2.0) == doctest::Approx(1.0 / 3.8));
  CHECK(default_stepsize(top_k_spec(1), 4, 1, 4.0) == 0.25);
  CHECK(default_stepsize(ternary_spec(), 100, 1, 1.0) == doctest::Approx(0.1));
  const double w = calibrated_omega(ternary_spec(), 100, 3, 200, RngStream(1));
  CHECK(w > 0.0);
  CHECK(w < 9.0);
}
