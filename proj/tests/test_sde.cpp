#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cellhom/fields.hpp"
#include "cellhom/sde.hpp"

#include <cmath>

using namespace cellhom;

namespace {

ProblemSpec identity_noise(int d) {
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

}  // namespace

TEST_CASE("pure drift integrates to x + v T") {
  ProblemSpec spec;
  spec.d = 2;
  spec.m = 1;
  spec.b = {constant_field(2, 0.3), constant_field(2, -1.2)};
  spec.sigma = {{constant_field(2, 0.0)}, {constant_field(2, 0.0)}};
  spec.validate();

  SimConfig cfg;
  cfg.h = 1e-3;
  cfg.T = 4.0;
  cfg.seed = 7;
  Vec x(2);
  x << 0.1, 0.9;
  auto path = simulate_lifted(spec, x, cfg);
  Vec lift = path.back().lift();
  CHECK(lift[0] == doctest::Approx(0.1 + 0.3 * 4.0).epsilon(1e-9));
  CHECK(lift[1] == doctest::Approx(0.9 - 1.2 * 4.0).epsilon(1e-9));
  // torus coordinate stays in [0,1)
  CHECK(path.back().y[0] >= 0.0);
  CHECK(path.back().y[0] < 1.0);
}

TEST_CASE("identity noise gives Brownian lift covariance") {
  ProblemSpec spec = identity_noise(2);
  SimConfig cfg;
  cfg.h = 0.01;
  cfg.T = 1.0;
  cfg.seed = 11;
  Stepper stepper(spec, cfg);
  auto steps = static_cast<std::size_t>(std::llround(cfg.T / cfg.h));

  const int N = 10000;
  Mat ends(N, 2);
  Vec x(2);
  x << 0.5, 0.5;
  for (int p = 0; p < N; ++p) {
    auto rng = path_rng(cfg.seed, p);
    LiftedState s = make_start(x);
    for (std::size_t i = 0; i < steps; ++i) stepper.step(s, rng);
    ends.row(p) = (s.lift() - x).transpose();
  }
  Vec mean = ends.colwise().mean().transpose();
  Mat centered = ends.rowwise() - mean.transpose();
  Mat cov = centered.transpose() * centered / (N - 1.0);
  CHECK(std::abs(mean[0]) < 0.05);
  CHECK(std::abs(mean[1]) < 0.05);
  CHECK(std::abs(cov(0, 0) - 1.0) < 0.05);
  CHECK(std::abs(cov(1, 1) - 1.0) < 0.05);
  CHECK(std::abs(cov(0, 1)) < 0.05);
}

TEST_CASE("same seed gives bit-identical paths") {
  ProblemSpec spec = build_example("paper1");
  SimConfig cfg;
  cfg.h = 1e-3;
  cfg.T = 0.5;
  cfg.eps = 0.25;
  cfg.seed = 1234;
  Vec x(2);
  x << 0.6, 0.2;
  auto p1 = simulate_lifted(spec, x, cfg);
  auto p2 = simulate_lifted(spec, x, cfg);
  REQUIRE(p1.states.size() == p2.states.size());
  for (std::size_t i = 0; i < p1.states.size(); ++i) {
    CHECK(p1.states[i].y == p2.states[i].y);
    CHECK(p1.states[i].k == p2.states[i].k);
  }
  cfg.seed = 1235;
  auto p3 = simulate_lifted(spec, x, cfg);
  CHECK(p1.back().y != p3.back().y);
}

TEST_CASE("step bound is enforced") {
  ProblemSpec spec;
  spec.d = 1;
  spec.m = 1;
  spec.b = {constant_field(1, 30.0)};
  spec.sigma = {{constant_field(1, 1.0)}};
  spec.validate();
  SimConfig cfg;
  cfg.h = 0.01;  // h * ||b|| = 0.3 >= 0.1
  cfg.T = 1.0;
  CHECK_THROWS_AS(cfg.validate(spec), std::invalid_argument);
}

TEST_CASE("jacobian is identity for constant coefficients") {
  ProblemSpec spec = identity_noise(2);
  SimConfig cfg;
  cfg.h = 0.01;
  cfg.T = 1.0;
  cfg.seed = 3;
  Vec x(2);
  x << 0.2, 0.8;
  auto flow = jacobian_flow(spec, x, cfg);
  CHECK((flow.jacobians.back() - Mat::Identity(2, 2)).norm() == 0.0);
}

TEST_CASE("jacobian matches finite-difference flow derivative") {
  ProblemSpec spec = build_example("taylor_shear");
  SimConfig cfg;
  cfg.h = 1e-3;
  cfg.T = 1.0;
  cfg.seed = 99;
  Vec x(2);
  x << 0.3, 0.4;
  auto flow = jacobian_flow(spec, x, cfg);
  const double delta = 1e-5;
  for (int i = 0; i < 2; ++i) {
    Vec xp = x;
    xp[i] += delta;
    auto shifted = simulate_lifted(spec, xp, cfg);  // same seed, common noise
    Vec col = (shifted.back().lift() - flow.path.back().lift()) / delta;
    CHECK((col - flow.jacobians.back().col(i)).norm() /
              std::max(1.0, flow.jacobians.back().col(i).norm()) <
          1e-2);
  }
}

TEST_CASE("1-d jacobian equals the exponential of the drift-slope integral") {
  ProblemSpec spec;
  spec.d = 1;
  spec.m = 1;
  Eigen::VectorXi k(1);
  k << 1;
  spec.b = {std::make_shared<TrigPolynomial>(
      1, std::vector<TrigPolynomial::Term>{{k, 0.0, 1.0}})};
  spec.sigma = {{constant_field(1, 0.0)}};
  spec.validate();
  SimConfig cfg;
  cfg.h = 1e-4;
  cfg.T = 1.0;
  cfg.seed = 5;
  Vec x(1);
  x << 0.2;
  auto flow = jacobian_flow(spec, x, cfg);
  // J_T = exp(int_0^T 2 pi cos(2 pi X_s) ds), trapezoid along the path
  double integral = 0.0;
  for (std::size_t i = 0; i + 1 < flow.path.states.size(); ++i) {
    double f0 = 2 * M_PI * std::cos(2 * M_PI * flow.path.states[i].y[0]);
    double f1 = 2 * M_PI * std::cos(2 * M_PI * flow.path.states[i + 1].y[0]);
    integral += 0.5 * (f0 + f1) * cfg.h;
  }
  CHECK(flow.jacobians.back()(0, 0) ==
        doctest::Approx(std::exp(integral)).epsilon(1e-3));
}

TEST_CASE("milstein correction vanishes for constant sigma") {
  ProblemSpec spec = identity_noise(2);
  SimConfig em;
  em.h = 0.01;
  em.T = 0.5;
  em.seed = 21;
  SimConfig mil = em;
  mil.scheme = Scheme::milstein_diag;
  Vec x(2);
  x << 0.4, 0.6;
  auto p1 = simulate_lifted(spec, x, em);
  auto p2 = simulate_lifted(spec, x, mil);
  CHECK(p1.back().y == p2.back().y);
  CHECK(p1.back().k == p2.back().k);
}

TEST_CASE("milstein is closer to the exact scalar solution than euler") {
  // dX = sigma(X) dW with sigma = 0.2 (2 + sin 2 pi x): strong error at a
  // coarse step; Milstein's 1/2 sigma sigma' ((dW)^2 - h) term must help.
  ProblemSpec spec;
  spec.d = 1;
  spec.m = 1;
  Eigen::VectorXi k(1);
  k << 1;
  auto sig = std::make_shared<TrigPolynomial>(
      1, std::vector<TrigPolynomial::Term>{{Eigen::VectorXi::Zero(1), 0.4, 0.0},
                                           {k, 0.0, 0.2}});
  spec.sigma = {{sig}};
  spec.b = {constant_field(1, 0.0)};
  spec.validate();

  Vec x(1);
  x << 0.3;
  double err_em = 0.0, err_mil = 0.0;
  const int N = 400;
  for (int p = 0; p < N; ++p) {
    // reference: fine Euler path with the same Brownian increments
    SimConfig fine;
    fine.h = 1e-4;
    fine.T = 0.25;
    fine.seed = 1000 + p;
    auto ref = simulate_lifted(spec, x, fine);
    double x_ref = ref.back().lift()[0];

    // coarse paths rebuilt from aggregated increments
    const int ratio = 100;
    Stepper em(spec, [&] {
      SimConfig c = fine;
      c.h = fine.h * ratio;
      return c;
    }());
    SimConfig cm = fine;
    cm.h = fine.h * ratio;
    cm.scheme = Scheme::milstein_diag;
    Stepper mil(spec, cm);
    LiftedState se = make_start(x), sm = make_start(x);
    auto rng = path_rng(fine.seed, 0);
    std::size_t total = static_cast<std::size_t>(std::llround(fine.T / fine.h));
    for (std::size_t i = 0; i < total; i += ratio) {
      double dw = 0.0;
      for (int j = 0; j < ratio; ++j) {
        // fresh distribution per draw, matching the stepper's draw pattern
        std::normal_distribution<double> normal(0.0, 1.0);
        dw += normal(rng);
      }
      Vec xi(1);
      xi << dw / std::sqrt(static_cast<double>(ratio));
      em.step_given(se, xi);
      mil.step_given(sm, xi);
    }
    err_em += std::pow(se.lift()[0] - x_ref, 2);
    err_mil += std::pow(sm.lift()[0] - x_ref, 2);
  }
  CHECK(std::sqrt(err_mil / N) < 0.7 * std::sqrt(err_em / N));
}

TEST_CASE("controlled ODE: identity noise moves straight") {
  ProblemSpec spec = identity_noise(2);
  Vec x(2);
  x << 0.1, 0.5;
  Vec u(2);
  u << 1.0, 0.0;
  auto path = control_ode(spec, x, std::vector<Vec>(10, u), 0.1, 0.0, 0.01);
  Vec lift = path.back().lift();
  CHECK(lift[0] == doctest::Approx(1.1).epsilon(1e-12));
  CHECK(lift[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("controlled ODE converges at RK4 rate") {
  ProblemSpec spec = build_example("paper1");
  Vec x(2);
  x << 0.05, 0.6;
  Vec u(2);
  u << 0.8, -0.5;
  auto coarser = control_ode(spec, x, std::vector<Vec>(4, u), 0.25, 0.0, 2.5e-3);
  auto coarse = control_ode(spec, x, std::vector<Vec>(4, u), 0.25, 0.0, 1.25e-3);
  auto fine = control_ode(spec, x, std::vector<Vec>(4, u), 0.25, 0.0, 6.25e-4);
  double e1 = (coarser.back().lift() - fine.back().lift()).norm();
  double e2 = (coarse.back().lift() - fine.back().lift()).norm();
  CHECK(e2 < 1e-6);
  CHECK(e2 < e1);
}

TEST_CASE("reachability: identity noise reaches everything for free") {
  ProblemSpec spec = identity_noise(2);
  BoolGrid U(GridShape{2, 8});
  for (std::size_t i = 0; i < U.cells.size(); ++i) U.set(i, true);
  auto rep = reachability_check(spec, U, 1.0, 1.0, 0.0, 8, 10);
  CHECK(rep.all_reachable);
  CHECK(rep.K_estimate == 0.0);
}

TEST_CASE("reachability rejects an empty target") {
  ProblemSpec spec = identity_noise(2);
  BoolGrid U(GridShape{2, 8});
  CHECK_THROWS_WITH(reachability_check(spec, U, 1.0, 1.0, 0.0, 8),
                    doctest::Contains("H2 cannot hold: U empty"));
}

TEST_CASE("h4 estimate: full bad set kills every path, degenerate drift fails") {
  ProblemSpec spec = identity_noise(2);
  BoolGrid V(GridShape{2, 8});
  for (std::size_t i = 0; i < V.cells.size(); ++i) V.set(i, true);
  SimConfig cfg;
  cfg.h = 0.01;
  cfg.T = 1.0;
  cfg.ensemble = 1000;
  cfg.seed = 4;
  auto rep = h4_estimate(spec, V, 0.5, cfg, 2);
  CHECK(rep.estimate == 0.0);
  CHECK(rep.holds);

  ProblemSpec degen;
  degen.d = 2;
  degen.m = 1;
  degen.b = {constant_field(2, 0.7), constant_field(2, 0.1)};
  degen.sigma = {{constant_field(2, 0.0)}, {constant_field(2, 0.0)}};
  degen.validate();
  BoolGrid empty(GridShape{2, 8});
  auto rep2 = h4_estimate(degen, empty, 0.5, cfg, 2);
  CHECK(rep2.estimate == doctest::Approx(1.0));
  CHECK(!rep2.holds);
}
