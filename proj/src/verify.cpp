#include "cellhom/verify.hpp"

#include "cellhom/fields.hpp"
#include "cellhom/fk.hpp"
#include "cellhom/lattice.hpp"

#include <cmath>
#include <ostream>
#include <random>

namespace cellhom {

namespace {

void add_row(VerifyReport& rep, int crit, const std::string& fixture,
             const std::string& quantity, double expected, double measured,
             double se, bool pass) {
  rep.rows.push_back({crit, fixture, quantity, expected, measured, se, pass});
}

// A as the long-horizon covariance of the lifted trajectory. Robust on
// degenerate supports where the corrector route needs very fine grids.
EffectiveCoefficients endpoint_cov_A(const ProblemSpec& spec, double T, double h,
                                     int n_paths, std::uint64_t seed) {
  SimConfig cfg;
  cfg.h = h;
  cfg.T = T;
  cfg.seed = seed;
  cfg.ensemble = n_paths;
  cfg.validate(spec);
  Stepper stepper(spec, cfg);
  auto steps = static_cast<std::size_t>(std::llround(T / h));
  std::vector<Vec> ends(n_paths);
  Vec start = default_start(spec);
  parallel_for(static_cast<std::size_t>(n_paths), [&](std::size_t p) {
    auto rng = path_rng(seed, p);
    LiftedState s = make_start(start);
    for (std::size_t i = 0; i < steps; ++i) stepper.step(s, rng);
    ends[p] = s.lift();
  });
  const int d = spec.d;
  Vec mean = Vec::Zero(d);
  for (const auto& v : ends) mean += v;
  mean /= n_paths;
  std::vector<std::vector<MeanVar>> acc(d, std::vector<MeanVar>(d));
  for (const auto& v : ends) {
    Vec c = v - mean;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) acc[i][j].add(c[i] * c[j] / T);
  }
  EffectiveCoefficients out;
  out.A = Mat(d, d);
  out.stderr_A = Mat(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      out.A(i, j) = acc[i][j].mean;
      out.stderr_A(i, j) = acc[i][j].stderr_mean();
    }
  out.C = Vec::Zero(d);
  out.stderr_C = Vec::Zero(d);
  out.samples = static_cast<std::uint64_t>(n_paths);
  out.horizon = T;
  out.seed = seed;
  return out;
}

struct ScalarStats {
  double mean = 0.0, se_mean = 0.0, var = 0.0, se_var = 0.0;
};

// first-component statistics of the physical endpoint X^eps_t
ScalarStats eps_endpoint_stats(const ProblemSpec& spec, const Vec& x, double eps,
                               double t, double h, int n_paths, std::uint64_t seed) {
  SimConfig cfg;
  cfg.h = h;
  cfg.eps = eps;
  cfg.seed = seed;
  cfg.validate(spec);
  Stepper stepper(spec, cfg);
  auto steps = static_cast<std::size_t>(std::llround(t / (eps * eps) / h));
  std::vector<double> first(n_paths);
  parallel_for(static_cast<std::size_t>(n_paths), [&](std::size_t p) {
    auto rng = path_rng(seed, p);
    LiftedState s = make_start(x / eps);
    for (std::size_t i = 0; i < steps; ++i) stepper.step(s, rng);
    first[p] = eps * (s.y[0] + static_cast<double>(s.k[0]));
  });
  MeanVar mv;
  for (double v : first) mv.add(v);
  ScalarStats out;
  out.mean = mv.mean;
  out.se_mean = mv.stderr_mean();
  out.var = mv.variance();
  out.se_var = out.var * std::sqrt(2.0 / (n_paths - 1.0));
  return out;
}

// error sequence nonincreasing up to twice the combined noise
bool trend_ok(const std::vector<double>& err, const std::vector<double>& se) {
  for (std::size_t k = 0; k + 1 < err.size(); ++k)
    if (err[k + 1] > err[k] + 2.0 * (se[k] + se[k + 1])) return false;
  return true;
}

ProblemSpec flat1d() {
  ProblemSpec spec;
  spec.d = 1;
  spec.m = 1;
  spec.b = {constant_field(1, 0.0)};
  spec.sigma = {{constant_field(1, 1.0)}};
  spec.validate();
  return spec;
}

// --- criteria ------------------------------------------------------------

void criterion1(VerifyReport& rep, bool full, std::uint64_t seed) {
  ProblemSpec spec = build_example("oned_harmonic");
  auto oracle = poisson_oracle_1d(spec, 128);
  double root3 = std::sqrt(3.0);
  add_row(rep, 1, "oned_harmonic", "oracle_A", root3, oracle.A, 0.0,
          std::abs(oracle.A - root3) < 1e-8);

  SimConfig cfg;
  cfg.h = 5e-3;
  cfg.T = full ? 1600.0 : 400.0;
  cfg.seed = seed;
  auto coeffs = effective_AC(spec, oracle.field, cfg);
  double rel = std::abs(coeffs.A(0, 0) - oracle.A) / oracle.A;
  add_row(rep, 1, "oned_harmonic", "A_mc_rel_err", 0.0, rel, coeffs.stderr_A(0, 0) / oracle.A,
          rel < 0.02);
}

void criterion2(VerifyReport& rep, bool full, std::uint64_t seed) {
  ProblemSpec spec = build_example("taylor_shear");
  SimConfig ccfg;
  ccfg.h = 0.02;
  ccfg.seed = seed;
  ccfg.ensemble = full ? 16000 : 8000;  // antithetic pairs per cell
  auto corr = corrector(spec, spec.b, ccfg, 32, 0.8);

  double max_err = 0.0;
  double max_se = 0.0;
  for (std::size_t i = 0; i < corr.shape.cell_count(); ++i) {
    double x2 = corr.shape.center(i)[1];
    double exact = std::sin(2 * M_PI * x2) / (2 * M_PI * M_PI);
    max_err = std::max(max_err, std::abs(corr.values(i, 0) - exact));
    max_err = std::max(max_err, std::abs(corr.values(i, 1)));
    max_se = std::max(max_se, corr.value_stderr.row(i).maxCoeff());
  }
  add_row(rep, 2, "taylor_shear", "corrector_max_err", 0.0, max_err, max_se,
          max_err < 0.01);
  add_row(rep, 2, "taylor_shear", "gradient_cross_check", 1.0, corr.cross_check_fraction,
          0.0, corr.gradient_flag_ok);

  SimConfig acfg;
  acfg.h = 5e-3;
  acfg.T = full ? 1600.0 : 400.0;
  acfg.seed = seed + 1;
  auto coeffs = effective_AC(spec, corr, acfg);
  double a11 = 1.0 + 1.0 / (2 * M_PI * M_PI);
  double se_max = coeffs.stderr_A.maxCoeff();
  add_row(rep, 2, "taylor_shear", "A11", a11, coeffs.A(0, 0), coeffs.stderr_A(0, 0),
          std::abs(coeffs.A(0, 0) - a11) <= 3.0 * coeffs.stderr_A(0, 0) + 1e-12);
  add_row(rep, 2, "taylor_shear", "A22", 1.0, coeffs.A(1, 1), coeffs.stderr_A(1, 1),
          std::abs(coeffs.A(1, 1) - 1.0) <= 3.0 * coeffs.stderr_A(1, 1) + 1e-12);
  add_row(rep, 2, "taylor_shear", "A_stderr_max", 0.01, se_max, 0.0, se_max <= 0.01);
}

void criterion3(VerifyReport& rep, const EffectiveCoefficients& A_ref, bool full,
                std::uint64_t seed) {
  ProblemSpec spec = build_example("paper1");
  const double t = 1.0;
  Vec x = Vec::Zero(2);
  double a11 = A_ref.A(0, 0);
  double se_a11 = A_ref.stderr_A(0, 0);

  std::vector<double> eps_set{0.5, 0.25, 0.125};
  std::vector<double> mean_err, mean_se, cov_err, cov_se;
  int n_paths = full ? 8000 : 3000;
  ScalarStats last;
  for (std::size_t k = 0; k < eps_set.size(); ++k) {
    auto st = eps_endpoint_stats(spec, x, eps_set[k], t, 2e-3, n_paths, seed + k);
    mean_err.push_back(std::abs(st.mean - x[0]));
    mean_se.push_back(st.se_mean);
    cov_err.push_back(std::abs(st.var - a11 * t));
    cov_se.push_back(std::hypot(st.se_var, t * se_a11));
    last = st;
  }
  add_row(rep, 3, "paper1", "mean_trend_nonincreasing", 1.0, trend_ok(mean_err, mean_se),
          0.0, trend_ok(mean_err, mean_se));
  add_row(rep, 3, "paper1", "cov_trend_nonincreasing", 1.0, trend_ok(cov_err, cov_se),
          0.0, trend_ok(cov_err, cov_se));
  add_row(rep, 3, "paper1", "final_mean", x[0], last.mean, last.se_mean,
          mean_err.back() < 4.0 * last.se_mean + 5e-3);
  add_row(rep, 3, "paper1", "final_cov", a11 * t, last.var, cov_se.back(),
          cov_err.back() < 0.10 * a11 * t);
}

void criterion4(VerifyReport& rep, bool full, std::uint64_t seed) {
  struct Case {
    const char* name;
    int rank;
  } cases[] = {{"paper1", 2}, {"paper2", 2}, {"paper3", 0}, {"paper4", 1}};

  for (const auto& c : cases) {
    ProblemSpec spec = build_example(c.name);
    SimConfig cfg;
    cfg.h = 2e-3;
    cfg.T = full ? 400.0 : 150.0;
    cfg.seed = seed;
    cfg.ensemble = 20;
    auto occ = estimate_invariant(spec, 0.0, cfg, 32, 2.0);
    auto mask = extract_support(occ, 1e-3, 1);
    auto lat = period_lattice(mask);
    add_row(rep, 4, c.name, "rank", c.rank, lat.rank, 0.0, lat.rank == c.rank);

    if (std::string(c.name) == "paper4" && lat.rank == 1) {
      Vec dir(2);
      dir << 1.0, 2.0;
      dir.normalize();
      double cosang = std::abs(dir.dot(lat.span_frame.col(0)));
      double ang = std::acos(std::min(1.0, cosang)) * 180.0 / M_PI;
      add_row(rep, 4, "paper4", "frame_angle_deg", 0.0, ang, 0.0, ang < 5.0);
    }

    auto A_est = endpoint_cov_A(spec, full ? 100.0 : 50.0, 2e-3, full ? 800 : 400,
                                seed + 13);
    auto con = consistency_check(A_est, lat, 0.02);
    add_row(rep, 4, c.name, "consistency_holds", 1.0, con.holds, con.threshold, con.holds);
  }
}

void criterion5(VerifyReport& rep, bool full, std::uint64_t seed) {
  ProblemSpec spec = build_example("paper1");
  SimConfig cfg;
  cfg.h = 2e-3;
  cfg.T = full ? 60.0 : 30.0;
  cfg.seed = seed;
  cfg.ensemble = 16;
  auto cent = centering_check(spec, 0.0, cfg, 2.0);
  double worst = 0.0, worst_se = 0.0;
  for (int i = 0; i < spec.d; ++i)
    if (std::abs(cent.residual[i]) > worst) {
      worst = std::abs(cent.residual[i]);
      worst_se = cent.stderr_res[i];
    }
  add_row(rep, 5, "paper1", "centering_residual", 0.0, worst, worst_se, cent.passes);

  auto masks = hormander_masks(spec, 32);
  SimConfig hcfg;
  hcfg.h = 2e-3;
  hcfg.seed = seed + 1;
  hcfg.ensemble = full ? 2000 : 1000;
  auto h4 = h4_estimate(spec, masks.V, 2.0, hcfg);
  add_row(rep, 5, "paper1", "h4_estimate", 0.0, h4.estimate, h4.stderr_est, h4.holds);

  ProblemSpec frozen;
  frozen.d = 2;
  frozen.m = 2;
  frozen.b = {constant_field(2, 0.4), constant_field(2, 0.0)};
  frozen.sigma = {{constant_field(2, 0.0), constant_field(2, 0.0)},
                  {constant_field(2, 0.0), constant_field(2, 0.0)}};
  frozen.validate();
  auto fm = hormander_masks(frozen, 8);
  auto h4f = h4_estimate(frozen, fm.V, 2.0, hcfg);
  add_row(rep, 5, "sigma_zero", "h4_rejects", 0.0, h4f.estimate, h4f.stderr_est,
          !h4f.holds);

  auto reach = reachability_check(spec, masks.U, 2.0, 0.0, 0.0, 32);
  add_row(rep, 5, "paper1", "reachable_u0", 1.0, reach.all_reachable, 0.0,
          reach.all_reachable);

  bool threw = false;
  try {
    reachability_check(frozen, fm.U, 1.0, 1.0, 0.0, 8);
  } catch (const AssumptionError&) {
    threw = true;
  }
  add_row(rep, 5, "sigma_zero", "reachability_rejects", 1.0, threw, 0.0, threw);
}

void criterion6(VerifyReport& rep, const EffectiveCoefficients& A_ref, bool full,
                std::uint64_t seed) {
  // 1-d closed form
  EllipticProblem prob;
  prob.domain = Domain::make_ball(Vec::Zero(1), 1.0);
  prob.g = [](const Vec&) { return 1.0; };
  prob.validate();
  SimConfig cfg;
  cfg.h = 1e-3;
  cfg.ensemble = 100000;
  cfg.seed = seed;
  EffectiveCoefficients unit;
  unit.A = Mat::Identity(1, 1);
  unit.C = Vec::Zero(1);
  auto kill = [](const Vec&) { return -1.0; };
  auto u1 = elliptic_hom(prob, unit, kill, Vec::Zero(1), cfg, 60.0);
  double exact = 1.0 / std::cosh(std::sqrt(2.0));
  add_row(rep, 6, "segment", "u_hom", exact, u1.value, u1.stderr_val,
          std::abs(u1.value - exact) < 3.0 * u1.stderr_val && u1.stderr_val <= 0.005);

  // eps-convergence on the two-hole fixture
  ProblemSpec spec = build_example("paper1");
  EllipticProblem prob2;
  prob2.domain = Domain::make_ball(Vec::Zero(2), 1.0);
  prob2.f = [](const Vec&, const Vec&) { return -1.0; };
  prob2.g = [](const Vec&) { return 1.0; };
  prob2.validate(&spec);
  SimConfig hcfg;
  hcfg.h = 1e-3;
  hcfg.ensemble = full ? 60000 : 20000;
  hcfg.seed = seed + 1;
  auto uh = elliptic_hom(prob2, A_ref, [](const Vec&) { return -1.0; }, Vec::Zero(2),
                         hcfg, 60.0);

  SimConfig ecfg;
  ecfg.h = 2e-3;
  ecfg.ensemble = full ? 4000 : 1500;
  ecfg.seed = seed + 2;
  std::vector<double> errs, ses;
  for (double eps : {0.5, 0.25, 0.125}) {
    auto ue = elliptic_eps(prob2, spec, eps, Vec::Zero(2), ecfg, 60.0);
    errs.push_back(std::abs(ue.value - uh.value));
    ses.push_back(std::hypot(ue.stderr_val, uh.stderr_val));
  }
  add_row(rep, 6, "paper1", "u_eps_trend_nonincreasing", 1.0, trend_ok(errs, ses), 0.0,
          trend_ok(errs, ses));
  add_row(rep, 6, "paper1", "u_eps_final_err", 0.0, errs.back(), ses.back(),
          errs.back() < 3.0 * ses.back() + 0.02);
}

void criterion7(VerifyReport& rep, bool full, std::uint64_t seed) {
  ProblemSpec spec = flat1d();
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
  cfg.h = 2e-3;
  cfg.ensemble = full ? 12000 : 4000;
  cfg.seed = seed;
  auto r05 = parabolic_eps(prob, spec, 0.5, &oracle.field, Vec::Zero(1), cfg);
  add_row(rep, 7, "cosine_potential", "raw_vs_corrected", r05.raw.value,
          r05.corrected.value,
          std::hypot(r05.raw.stderr_val, r05.corrected.stderr_val), r05.agree);

  SimConfig fcfg;
  fcfg.h = 2e-3;
  fcfg.ensemble = full ? 8000 : 3000;
  fcfg.seed = seed + 1;
  auto r0125 = parabolic_eps(prob, spec, 0.125, &oracle.field, Vec::Zero(1), fcfg);
  double hom = std::exp(oracle.D_quad * prob.t);
  double rel = std::abs(r0125.corrected.value - hom) / hom;
  add_row(rep, 7, "cosine_potential", "eps0125_vs_hom_rel", 0.0, rel,
          r0125.corrected.stderr_val / hom, rel < 0.05);
}

void criterion8(VerifyReport& rep, bool full, std::uint64_t seed) {
  // merge monoid, exact
  {
    ProblemSpec spec = flat1d();
    SimConfig cfg;
    cfg.h = 0.01;
    cfg.T = 5.0;
    auto make = [&](std::uint64_t s) {
      SimConfig c = cfg;
      c.seed = s;
      return estimate_invariant(spec, 0.0, c, 8, 0.5);
    };
    auto a = make(seed), b = make(seed + 1), c = make(seed + 2);
    OccupationGrid ab = a;
    ab.merge(b);
    OccupationGrid abc = ab;
    abc.merge(c);
    OccupationGrid bc = b;
    bc.merge(c);
    OccupationGrid acb = a;
    acb.merge(bc);
    OccupationGrid ba = b;
    ba.merge(a);
    bool ok = abc.counts == acb.counts && ab.counts == ba.counts;
    add_row(rep, 8, "flat1d", "merge_monoid_exact", 1.0, ok, 0.0, ok);
  }

  // HNF invariance under translation of the base cell
  {
    auto strip = [](double off) {
      BoolGrid g(GridShape{2, 32});
      for (std::size_t i = 0; i < g.cells.size(); ++i) {
        Vec c = g.shape.center(i);
        g.set(i, std::abs(wrap_half(2 * c[0] - c[1] + off)) < 0.15);
      }
      return period_lattice(g);
    };
    auto l0 = strip(0.0);
    auto l1 = strip(0.41);
    bool ok = l0.rank == l1.rank && l0.hnf_basis == l1.hnf_basis;
    add_row(rep, 8, "strip", "hnf_translation_invariant", 1.0, ok, 0.0, ok);
  }

  // same-seed bit reproducibility of the two heaviest estimators
  {
    ProblemSpec spec = build_example("taylor_shear");
    SimConfig cfg;
    cfg.h = 0.02;
    cfg.T = 2.0;
    cfg.seed = seed + 5;
    cfg.ensemble = 40;
    auto o1 = estimate_invariant(spec, 0.0, cfg, 8, 0.2);
    auto o2 = estimate_invariant(spec, 0.0, cfg, 8, 0.2);
    auto c1 = corrector(spec, spec.b, cfg, 4, 0.5);
    auto c2 = corrector(spec, spec.b, cfg, 4, 0.5);
    bool ok = o1.counts == o2.counts && c1.values == c2.values &&
              c1.gradients.size() == c2.gradients.size();
    for (std::size_t i = 0; ok && i < c1.gradients.size(); ++i)
      ok = c1.gradients[i] == c2.gradients[i];
    add_row(rep, 8, "taylor_shear", "bit_reproducible", 1.0, ok, 0.0, ok);
  }

  // Euler-Maruyama weak order on a sine drift, common-noise fine reference.
  // On the pure Gaussian fixture the scheme is exact, so the slope is read
  // off the drifted variant instead and the Gaussian case is checked for
  // exactness.
  {
    const double T = 1.0;
    const double hf = 6.25e-4;
    const int fine_steps = static_cast<int>(std::llround(T / hf));
    const std::vector<int> ratios{32, 16, 8};  // h = 0.02, 0.01, 0.005
    const int n_paths = full ? 80000 : 40000;
    const double x0 = 0.3;
    auto phi = [](double x) { return std::cos(2 * M_PI * x); };

    std::vector<MeanVar> diff(ratios.size());
    MeanVar gauss_diff;
    std::mt19937_64 rng(seed + 77);
    for (int p = 0; p < n_paths; ++p) {
      std::normal_distribution<double> normal(0.0, 1.0);
      double xf = x0, xg_f = x0;
      std::vector<double> xc(ratios.size(), x0), xg_c(ratios.size(), x0);
      std::vector<double> win(ratios.size(), 0.0);
      for (int i = 0; i < fine_steps; ++i) {
        double dw = std::sqrt(hf) * normal(rng);
        xf += std::sin(2 * M_PI * xf) * hf + dw;
        xg_f += dw;
        for (std::size_t r = 0; r < ratios.size(); ++r) {
          win[r] += dw;
          if ((i + 1) % ratios[r] == 0) {
            double h = hf * ratios[r];
            xc[r] += std::sin(2 * M_PI * xc[r]) * h + win[r];
            xg_c[r] += win[r];
            win[r] = 0.0;
          }
        }
      }
      for (std::size_t r = 0; r < ratios.size(); ++r) diff[r].add(phi(xc[r]) - phi(xf));
      gauss_diff.add(xg_c[0] - xg_f);
    }

    double st = 0, sl = 0, stt = 0, stl = 0;
    bool resolved = true;
    for (std::size_t r = 0; r < ratios.size(); ++r) {
      double m = std::abs(diff[r].mean);
      resolved = resolved && m > 3.0 * diff[r].stderr_mean();
      double lt = std::log(hf * ratios[r]);
      double ll = std::log(m);
      st += lt;
      sl += ll;
      stt += lt * lt;
      stl += lt * ll;
    }
    double n = static_cast<double>(ratios.size());
    double slope = (n * stl - st * sl) / (n * stt - st * st);
    add_row(rep, 8, "sine_drift", "em_weak_order", 1.0, slope,
            resolved ? 0.0 : 1.0, resolved && slope > 0.7 && slope < 1.3);
    add_row(rep, 8, "gaussian", "em_exact", 0.0, std::abs(gauss_diff.mean), 0.0,
            std::abs(gauss_diff.mean) < 1e-12);
  }
}

}  // namespace

bool VerifyReport::criterion_pass(int k) const {
  bool any = false;
  for (const auto& r : rows)
    if (r.criterion == k) {
      any = true;
      if (!r.pass) return false;
    }
  return any;
}

bool VerifyReport::all_pass() const {
  for (const auto& r : rows)
    if (!r.pass) return false;
  return !rows.empty();
}

VerifyReport run_acceptance(bool full, std::uint64_t seed) {
  VerifyReport rep;
  criterion1(rep, full, seed + 100);
  criterion2(rep, full, seed + 200);

  // shared reference A for the two-hole fixture
  ProblemSpec paper1 = build_example("paper1");
  auto A_ref = endpoint_cov_A(paper1, full ? 200.0 : 100.0, 2e-3, full ? 2000 : 1000,
                              seed + 42);

  criterion3(rep, A_ref, full, seed + 300);
  criterion4(rep, full, seed + 400);
  criterion5(rep, full, seed + 500);
  criterion6(rep, A_ref, full, seed + 600);
  criterion7(rep, full, seed + 700);
  criterion8(rep, full, seed + 800);
  return rep;
}

void write_verify_csv(std::ostream& out, const VerifyReport& rep) {
  out << "fixture,quantity,expected,measured,stderr,verdict\n";
  for (const auto& r : rep.rows)
    out << r.fixture << "," << r.quantity << "," << r.expected << "," << r.measured
        << "," << r.stderr_v << "," << (r.pass ? "pass" : "fail") << "\n";
}

json verify_summary_json(const VerifyReport& rep) {
  json rows = json::array();
  for (const auto& r : rep.rows)
    rows.push_back({{"criterion", r.criterion},
                    {"fixture", r.fixture},
                    {"quantity", r.quantity},
                    {"expected", r.expected},
                    {"measured", r.measured},
                    {"stderr", r.stderr_v},
                    {"pass", r.pass}});
  json crit = json::object();
  for (int k = 1; k <= 8; ++k) crit[std::to_string(k)] = rep.criterion_pass(k);
  return json{{"rows", rows}, {"criteria", crit}, {"all_pass", rep.all_pass()}};
}

}  // namespace cellhom
