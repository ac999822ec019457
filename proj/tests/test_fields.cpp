#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cellhom/fields.hpp"

#include <cmath>
#include <random>

using namespace cellhom;

namespace {

// 4th-order central difference of f along direction i.
double fd_deriv(const std::function<double(const Vec&)>& f, const Vec& x, int i, double h) {
  Vec e = Vec::Zero(x.size());
  e[i] = 1.0;
  return (-f(x + 2 * h * e) + 8.0 * f(x + h * e) - 8.0 * f(x - h * e) + f(x - 2 * h * e)) /
         (12.0 * h);
}

void check_jets(const FieldPtr& f, std::mt19937_64& rng, int n_points = 100) {
  const int d = f->dim();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int p = 0; p < n_points; ++p) {
    Vec x(d);
    for (int i = 0; i < d; ++i) x[i] = unif(rng);
    Vec g = f->gradient(x);
    Mat h = f->hessian(x);
    for (int i = 0; i < d; ++i) {
      double gi = fd_deriv([&](const Vec& y) { return f->value(y); }, x, i, 1e-4);
      double grel = std::abs(gi - g[i]) / std::max(1.0, g.norm());
      if (grel >= 1e-6) {
        gi = fd_deriv([&](const Vec& y) { return f->value(y); }, x, i, 2e-5);
        grel = std::abs(gi - g[i]) / std::max(1.0, g.norm());
      }
      CHECK(grel < 1e-6);
      for (int j = 0; j < d; ++j) {
        double hij = fd_deriv([&](const Vec& y) { return f->gradient(y)[j]; }, x, i, 1e-4);
        double rel = std::abs(hij - h(i, j)) / std::max(1.0, h.norm());
        if (rel >= 1e-6) {
          // steep smoothstep shoulders: the h = 1e-4 stencil's own truncation
          // error can exceed the tolerance; refine before judging
          hij = fd_deriv([&](const Vec& y) { return f->gradient(y)[j]; }, x, i, 2e-5);
          rel = std::abs(hij - h(i, j)) / std::max(1.0, h.norm());
        }
        CHECK(rel < 1e-6);
      }
    }
  }
}

}  // namespace

TEST_CASE("analytic jets match finite differences on all fixture fields") {
  std::mt19937_64 rng(42);
  for (const char* name : {"paper1", "paper2", "paper3", "paper4", "taylor_shear",
                           "oned_harmonic"}) {
    CAPTURE(name);
    ProblemSpec spec = build_example(name);
    int pts = 25;  // per field; several fields per spec
    for (const auto& f : spec.b) check_jets(f, rng, pts);
    for (const auto& row : spec.sigma)
      for (const auto& f : row) check_jets(f, rng, pts);
    if (spec.alpha) check_jets(spec.alpha, rng, pts);
  }
}

TEST_CASE("trig polynomial mean and generator identities") {
  Eigen::VectorXi k(2);
  k << 1, -2;
  auto f = std::make_shared<TrigPolynomial>(
      2, std::vector<TrigPolynomial::Term>{{Eigen::VectorXi::Zero(2), 0.7, 0.0},
                                           {k, 0.3, -0.2}});
  CHECK(f->mean() == doctest::Approx(0.7));

  // Laplacian eigenvalue: for sigma = I, b = 0, L cos(2 pi k.x) = -2 pi^2 |k|^2 cos
  ProblemSpec spec = build_example("taylor_shear");
  Vec x(2);
  x << 0.3, 0.77;
  Jet jet = f->jet(x);
  double lap = 0.5 * jet.hess.trace();
  double expected =
      -2.0 * M_PI * M_PI * 5.0 * (0.3 * std::cos(2 * M_PI * (x[0] - 2 * x[1])) -
                                  0.2 * std::sin(2 * M_PI * (x[0] - 2 * x[1])));
  CHECK(lap == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("bump mask is exactly flat inside and outside the shoulder") {
  Vec c(2);
  c << 0.5, 0.5;
  BumpMask mask(2, {{c, 0.2, 0.5}});
  Vec inside(2), outside(2);
  inside << 0.5, 0.6;   // distance 0.1 < r
  outside << 0.5, 0.95;  // distance 0.45 > r (1 + w) = 0.3
  CHECK(mask.value(inside) == 0.0);
  CHECK(mask.gradient(inside).norm() == 0.0);
  CHECK(mask.value(outside) == 1.0);
  CHECK(mask.gradient(outside).norm() == 0.0);
  Vec shoulder(2);
  shoulder << 0.5, 0.75;  // distance 0.25 in (r, r(1+w))
  double v = mask.value(shoulder);
  CHECK(v > 0.0);
  CHECK(v < 1.0);
}

TEST_CASE("drift_from_density reproduces the 1-d closed form") {
  // p = 2 + sin(2 pi x), a = 1: b = p' / (2p)
  Eigen::VectorXi k(1);
  k << 1;
  FieldPtr p = std::make_shared<TrigPolynomial>(
      1, std::vector<TrigPolynomial::Term>{{Eigen::VectorXi::Zero(1), 2.0, 0.0},
                                           {k, 0.0, 1.0}});
  MatrixField a{{constant_field(1, 1.0)}};
  auto b = drift_from_density(p, a, {});
  for (double xv : {0.0, 0.13, 0.4, 0.77, 0.99}) {
    Vec x(1);
    x << xv;
    double expected = M_PI * std::cos(2 * M_PI * xv) / (2.0 + std::sin(2 * M_PI * xv));
    CHECK(b[0]->value(x) == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("drift_from_density rejects bad inputs") {
  Eigen::VectorXi k(1);
  k << 1;
  FieldPtr psin = std::make_shared<TrigPolynomial>(
      1, std::vector<TrigPolynomial::Term>{{k, 0.0, 1.0}});  // changes sign
  MatrixField a{{constant_field(1, 1.0)}};
  CHECK_THROWS_AS(drift_from_density(psin, a, {}), AssumptionError);

  FieldPtr p = constant_field(2, 1.0);
  MatrixField a2{{constant_field(2, 1.0), constant_field(2, 0.0)},
                 {constant_field(2, 0.0), constant_field(2, 1.0)}};
  MatrixField H{{constant_field(2, 0.0), constant_field(2, 0.3)},
                {constant_field(2, 0.3), constant_field(2, 0.0)}};  // symmetric, not anti
  CHECK_THROWS_AS(drift_from_density(p, a2, H), AssumptionError);
}

TEST_CASE("divergence-form drift is stationary for the uniform density") {
  // residual (1/2) sum_ij d2_ij a_ij - sum_i d_i b_i at 64^2 cell centers
  ProblemSpec spec = build_example("paper1");
  MatrixField a = diffusion_entries(spec.sigma);
  auto b = drift_from_density(constant_field(2, 1.0), a, spec.stream);
  GridShape grid{2, 64};
  double worst = 0.0;
  for (std::size_t idx = 0; idx < grid.cell_count(); ++idx) {
    Vec x = grid.center(idx);
    double r = 0.0;
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) r += 0.5 * a[i][j]->hessian(x)(i, j);
      r -= b[i]->gradient(x)[i];
    }
    worst = std::max(worst, std::abs(r));
    // the fixture's hand-built drift agrees with the divergence-form one
    for (int i = 0; i < 2; ++i)
      CHECK(spec.b[i]->value(x) == doctest::Approx(b[i]->value(x)).epsilon(1e-8));
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("constructed drifts are centered by quadrature") {
  for (const char* name : {"paper1", "paper2"}) {
    CAPTURE(name);
    ProblemSpec spec = build_example(name);
    GridShape grid{2, 256};
    Vec total = Vec::Zero(2);
    for (std::size_t idx = 0; idx < grid.cell_count(); ++idx)
      total += spec.drift(grid.center(idx));
    total /= static_cast<double>(grid.cell_count());
    CHECK(total.norm() < 1e-6);
  }
}

TEST_CASE("generator application matches the symbolic form") {
  ProblemSpec spec = build_example("oned_harmonic");
  // L f = (1/2) a f'' + b f' with f = sin(2 pi x)
  Eigen::VectorXi k(1);
  k << 1;
  auto f = std::make_shared<TrigPolynomial>(
      1, std::vector<TrigPolynomial::Term>{{k, 0.0, 1.0}});
  Vec x(1);
  x << 0.37;
  double a = 2.0 + std::sin(2 * M_PI * 0.37);
  double b = M_PI * std::cos(2 * M_PI * 0.37);
  double expect = 0.5 * a * (-4 * M_PI * M_PI * std::sin(2 * M_PI * 0.37)) +
                  b * 2 * M_PI * std::cos(2 * M_PI * 0.37);
  CHECK(apply_generator(spec, f->jet(x), x) == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("eval_jet selector round trip and error") {
  ProblemSpec spec = build_example("paper1");
  Vec x(2);
  x << 0.6, 0.1;
  CHECK(eval_jet(spec, "b1", x).value == doctest::Approx(spec.b[0]->value(x)));
  CHECK(eval_jet(spec, "sigma11", x).value == doctest::Approx(spec.sigma[0][0]->value(x)));
  CHECK(eval_jet(spec, "a22", x).value ==
        doctest::Approx(spec.sigma[1][0]->value(x) * spec.sigma[1][0]->value(x) +
                        spec.sigma[1][1]->value(x) * spec.sigma[1][1]->value(x)));
  CHECK_THROWS_WITH(eval_jet(spec, "q7", x), doctest::Contains("no such field"));
}

TEST_CASE("hormander masks: identity noise spans everywhere") {
  ProblemSpec spec = build_example("taylor_shear");
  auto masks = hormander_masks(spec, 16, 1);
  CHECK(masks.U.count() == masks.U.cells.size());
  CHECK(masks.V.count() == masks.V.cells.size());
}

TEST_CASE("hormander masks: scaled-identity noise with holes") {
  ProblemSpec spec = build_example("paper1");
  auto masks = hormander_masks(spec, 32, 1);
  GridShape grid{2, 32};
  for (std::size_t idx = 0; idx < grid.cell_count(); ++idx) {
    bool expect = spec.alpha->value(grid.center(idx)) > 1e-8;
    CHECK(masks.U.test(idx) == expect);
  }
}

TEST_CASE("hormander masks: drift bracket recovers the degenerate direction") {
  // sigma_1 = (1, sin 2 pi x1), b = e1. One column never spans R^2, but the
  // drift bracket [b, sigma_1] = (0, 2 pi cos 2 pi x1) does except at the
  // cells where the cosine vanishes.
  ProblemSpec spec;
  spec.d = 2;
  spec.m = 1;
  Eigen::VectorXi k(2);
  k << 1, 0;
  auto sin1 = std::make_shared<TrigPolynomial>(
      2, std::vector<TrigPolynomial::Term>{{k, 0.0, 1.0}});
  spec.sigma = {{constant_field(2, 1.0)}, {sin1}};
  spec.b = {constant_field(2, 1.0), constant_field(2, 0.0)};
  spec.validate();

  auto masks = hormander_masks(spec, 32, 2, 1e-4);
  CHECK(masks.U.count() == 0);  // single column cannot span
  GridShape grid{2, 32};
  std::size_t v_expected = 0;
  for (std::size_t idx = 0; idx < grid.cell_count(); ++idx) {
    bool expect = std::abs(std::cos(2 * M_PI * grid.center(idx)[0])) > 1e-3;
    CHECK(masks.V.test(idx) == expect);
    if (expect) ++v_expected;
  }
  CHECK(masks.V.count() == v_expected);
}

TEST_CASE("hormander masks are monotone in bracket depth") {
  // sigma_1 = (1, cos 2 pi x1), sigma_2 = (1, 0): at grid 10 the cell
  // centers x1 = 0.25, 0.75 hit the zeros of the cosine, so depth 1 misses
  // those cells and the depth-2 bracket (0, -2 pi sin 2 pi x1) fills them in.
  ProblemSpec spec;
  spec.d = 2;
  spec.m = 2;
  Eigen::VectorXi k(2);
  k << 1, 0;
  auto cos1 = std::make_shared<TrigPolynomial>(
      2, std::vector<TrigPolynomial::Term>{{k, 1.0, 0.0}});
  spec.sigma = {{constant_field(2, 1.0), constant_field(2, 1.0)},
                {cos1, constant_field(2, 0.0)}};
  spec.b = {constant_field(2, 0.0), constant_field(2, 0.0)};
  spec.validate();

  auto m1 = hormander_masks(spec, 10, 1, 1e-6);
  auto m2 = hormander_masks(spec, 10, 2, 1e-6);
  auto m3 = hormander_masks(spec, 10, 3, 1e-6);
  CHECK(m1.U.subset_of(m2.U));
  CHECK(m2.U.subset_of(m3.U));
  CHECK(m1.U.count() == m1.U.cells.size() - 20);  // two degenerate columns
  CHECK(m2.U.count() == m2.U.cells.size());  // cos and sin never vanish together

  CHECK_THROWS_AS(hormander_masks(spec, 16, 4), AssumptionError);
}

TEST_CASE("paper1 placement condition is enforced") {
  ExampleParams params;
  Vec c(2);
  c << 0.5, 0.3;  // hole straddles {x1 = 1/2}
  params.holes = {{c, 0.1, 0.3}};
  CHECK_THROWS_WITH(build_example("paper1", params),
                    doctest::Contains("placement condition"));
}
