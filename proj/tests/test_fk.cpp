#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cellhom/fk.hpp"
#include "cellhom/fields.hpp"

#include <cmath>

using namespace cellhom;

namespace {

ProblemSpec flat_spec(int d) {
  ProblemSpec spec;
  spec.d = d;
  spec.m = d;
  MatrixField s(d, VectorField(d));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) s[i][j] = constant_field(d, i == j ? 1.0 : 0.0);
  spec.sigma = s;
  for (int i = 0; i < d; ++i) spec.b.push_back(constant_field(d, 0.0));
  spec.validate();
  return spec;
}

Domain segment() {
  Vec c = Vec::Zero(1);
  return Domain::make_ball(c, 1.0);
}

}  // namespace

TEST_CASE("domain geometry: ball and box") {
  Vec c(2);
  c << 0.5, -0.5;
  auto ball = Domain::make_ball(c, 2.0);
  Vec p(2);
  p << 0.5, 1.5;
  CHECK(ball.signed_distance(p) == doctest::Approx(0.0));
  p[1] = 0.5;
  CHECK(ball.contains(p));
  Vec q = ball.project(p);
  CHECK((q - c).norm() == doctest::Approx(2.0));
  Vec n = ball.boundary_normal(q);
  CHECK(n.dot(q - c) == doctest::Approx(2.0));  // outward unit normal

  Vec lo(2), hi(2);
  lo << -1.0, 0.0;
  hi << 1.0, 3.0;
  auto box = Domain::make_box(lo, hi);
  Vec inside(2);
  inside << 0.0, 1.0;
  CHECK(box.signed_distance(inside) == doctest::Approx(-1.0));
  Vec bp = box.project(inside);
  CHECK(box.signed_distance(bp) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("limit-process exit times match the closed forms") {
  SimConfig cfg;
  cfg.h = 1e-3;
  cfg.ensemble = 20000;
  cfg.seed = 7;

  // E tau = 1 - x^2 on (-1,1) with A = 1
  Mat A = Mat::Identity(1, 1);
  Vec C = Vec::Zero(1);
  auto s = exit_time_mc_limit(A, C, segment(), Vec::Zero(1), cfg, 50.0);
  CHECK(s.capped_fraction == 0.0);
  MeanVar mv;
  for (double t : s.tau) mv.add(t);
  CHECK(std::abs(mv.mean - 1.0) < 3.0 * mv.stderr_mean() + 0.02);

  // unit ball in the plane: E tau = (1 - |x|^2) / 2
  Mat A2 = Mat::Identity(2, 2);
  Vec C2 = Vec::Zero(2);
  auto ball = Domain::make_ball(Vec::Zero(2), 1.0);
  auto s2 = exit_time_mc_limit(A2, C2, ball, Vec::Zero(2), cfg, 50.0);
  MeanVar mv2;
  for (double t : s2.tau) mv2.add(t);
  CHECK(std::abs(mv2.mean - 0.5) < 3.0 * mv2.stderr_mean() + 0.01);
  // exit points sit on the boundary
  for (int i = 0; i < 10; ++i)
    CHECK(std::abs(s2.exit_point[i].norm() - 1.0) < 1e-9);
}

TEST_CASE("killed exit problem reproduces 1/cosh(sqrt 2)") {
  EllipticProblem prob;
  prob.domain = segment();
  prob.g = [](const Vec&) { return 1.0; };
  prob.validate();

  SimConfig cfg;
  cfg.h = 1e-3;
  cfg.ensemble = 20000;
  cfg.seed = 11;
  EffectiveCoefficients coeffs;
  coeffs.A = Mat::Identity(1, 1);
  coeffs.C = Vec::Zero(1);
  coeffs.stderr_A = Mat::Zero(1, 1);
  coeffs.stderr_C = Vec::Zero(1);
  auto kill = [](const Vec&) { return -1.0; };
  auto r = elliptic_hom(prob, coeffs, kill, Vec::Zero(1), cfg, 50.0);
  double exact = 1.0 / std::cosh(std::sqrt(2.0));
  CHECK(std::abs(r.value - exact) < 3.0 * r.stderr_val + 0.01);
  CHECK(r.stderr_val < 0.01);

  // a pure killing rate alpha = 1 produces the same weight
  prob.alpha = 1.0;
  auto r2 = elliptic_hom(prob, coeffs, nullptr, Vec::Zero(1), cfg, 50.0);
  CHECK(r2.value == doctest::Approx(r.value).epsilon(1e-12));
}

TEST_CASE("harmonic boundary data integrates to exactly one") {
  EllipticProblem prob;
  prob.domain = segment();
  prob.g = [](const Vec&) { return 1.0; };
  prob.validate();
  SimConfig cfg;
  cfg.h = 1e-3;
  cfg.ensemble = 500;
  EffectiveCoefficients coeffs;
  coeffs.A = Mat::Identity(1, 1);
  coeffs.C = Vec::Zero(1);
  auto r = elliptic_hom(prob, coeffs, nullptr, Vec::Zero(1), cfg, 50.0);
  CHECK(r.value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.stderr_val == doctest::Approx(0.0));
}

TEST_CASE("eps-problem with flat coefficients agrees with the limit") {
  // sigma = 1, b = 0: the rescaled process is itself a Brownian motion,
  // so the eps value equals the limit value up to discretization
  ProblemSpec spec = flat_spec(1);
  EllipticProblem prob;
  prob.domain = segment();
  prob.f = [](const Vec&, const Vec&) { return -1.0; };
  prob.g = [](const Vec&) { return 1.0; };

  SimConfig cfg;
  cfg.h = 1e-3;
  cfg.ensemble = 6000;
  cfg.seed = 3;
  auto r = elliptic_eps(prob, spec, 0.5, Vec::Zero(1), cfg, 50.0);
  double exact = 1.0 / std::cosh(std::sqrt(2.0));
  CHECK(std::abs(r.value - exact) < 3.0 * r.stderr_val + 0.02);

  // common seed: weaker killing can only increase every path weight
  EllipticProblem lighter = prob;
  lighter.f = [](const Vec&, const Vec&) { return -0.25; };
  auto r2 = elliptic_eps(lighter, spec, 0.5, Vec::Zero(1), cfg, 50.0);
  CHECK(r2.value > r.value);
}

TEST_CASE("exit-time cap beyond one percent is an error") {
  ProblemSpec spec = flat_spec(1);
  EllipticProblem prob;
  prob.domain = segment();
  prob.g = [](const Vec&) { return 1.0; };
  SimConfig cfg;
  cfg.h = 1e-3;
  cfg.ensemble = 400;
  CHECK_THROWS_WITH(elliptic_eps(prob, spec, 0.5, Vec::Zero(1), cfg, 0.2),
                    doctest::Contains("cap too tight"));
}

TEST_CASE("growth bound on the potential is enforced") {
  EllipticProblem prob;
  prob.domain = segment();
  prob.f = [](const Vec&, const Vec&) { return 0.5; };
  prob.g = [](const Vec&) { return 1.0; };
  CHECK_THROWS_WITH(prob.validate(), doctest::Contains("borne"));

  // alpha lifts the admissible level
  prob.alpha = 1.0;
  CHECK_NOTHROW(prob.validate());
}

TEST_CASE("degenerate homogenized exit data is rejected") {
  EllipticProblem prob;
  prob.domain = segment();
  prob.g = [](const Vec&) { return 1.0; };
  EffectiveCoefficients coeffs;
  coeffs.A = Mat::Zero(1, 1);
  coeffs.C = Vec::Zero(1);
  SimConfig cfg;
  cfg.h = 1e-3;
  cfg.ensemble = 100;
  CHECK_THROWS_WITH(elliptic_hom(prob, coeffs, nullptr, Vec::Zero(1), cfg, 10.0),
                    doctest::Contains("ill-posed"));
}

TEST_CASE("parabolic limit solver on constant data") {
  SimConfig cfg;
  cfg.h = 1e-3;
  cfg.ensemble = 4000;
  cfg.seed = 19;
  EffectiveCoefficients coeffs;
  coeffs.A = Mat::Identity(1, 1);
  coeffs.C = Vec::Zero(1);

  // g = 1, constant effective potential: value is exactly exp(lambda t)
  ParabolicProblem prob;
  prob.g = [](const Vec&) { return 1.0; };
  prob.t = 1.0;
  auto pot = [](const Vec&) { return 0.3; };
  auto r = parabolic_hom(prob, coeffs, pot, Vec::Zero(1), cfg);
  CHECK(r.value == doctest::Approx(std::exp(0.3)).epsilon(1e-10));
  CHECK(r.stderr_val == doctest::Approx(0.0));

  // linear g picks up the effective transport
  coeffs.C = Vec::Constant(1, 0.7);
  ParabolicProblem lin;
  lin.g = [](const Vec& x) { return x[0]; };
  lin.t = 1.0;
  Vec x0 = Vec::Constant(1, 0.2);
  auto r2 = parabolic_hom(lin, coeffs, nullptr, x0, cfg);
  CHECK(std::abs(r2.value - 0.9) < 3.0 * r2.stderr_val + 1e-3);
}

TEST_CASE("raw and corrected fast-potential estimators agree") {
  ProblemSpec spec = flat_spec(1);
  Eigen::VectorXi k(1);
  k[0] = 1;
  auto e = std::make_shared<TrigPolynomial>(
      1, std::vector<TrigPolynomial::Term>{{k, 1.0, 0.0}});
  auto oracle = poisson_oracle_1d(spec, 64, e);

  ParabolicProblem prob;
  prob.e = e;
  prob.g = [](const Vec&) { return 1.0; };
  prob.t = 0.5;

  SimConfig cfg;
  cfg.h = 1e-3;
  cfg.ensemble = 4000;
  cfg.seed = 29;
  auto res = parabolic_eps(prob, spec, 0.5, &oracle.field, Vec::Zero(1), cfg);
  CHECK(res.agree);
  CHECK(res.corrected.stderr_val < res.raw.stderr_val + 1e-12);
  // the homogenized value exp(D t); at eps = 0.5 the deterministic start
  // still contributes an O(eps^2) transient, hence the loose band
  double hom = std::exp(oracle.D_quad * prob.t);
  CHECK(std::abs(res.corrected.value - hom) < 3.0 * res.corrected.stderr_val + 0.03);
}

TEST_CASE("parabolic eps solver rejects uncentered fast potentials") {
  ProblemSpec spec = flat_spec(1);
  SimConfig cfg;
  cfg.h = 0.01;
  cfg.T = 20.0;
  cfg.seed = 2;
  cfg.ensemble = 4;
  auto mu = estimate_invariant(spec, 0.0, cfg, 16, 1.0);

  ParabolicProblem prob;
  prob.e = constant_field(1, 1.0);
  prob.g = [](const Vec&) { return 1.0; };
  prob.t = 0.25;

  auto oracle = poisson_oracle_1d(spec, 16);  // placeholder corrector grid
  CHECK_THROWS_WITH(parabolic_eps(prob, spec, 0.5, &oracle.field, Vec::Zero(1), cfg, &mu),
                    doctest::Contains("ezero"));

  // nonzero e without a corrector is a usage error
  Eigen::VectorXi k(1);
  k[0] = 1;
  prob.e = std::make_shared<TrigPolynomial>(
      1, std::vector<TrigPolynomial::Term>{{k, 1.0, 0.0}});
  CHECK_THROWS_AS(parabolic_eps(prob, spec, 0.5, nullptr, Vec::Zero(1), cfg),
                  std::invalid_argument);
}
