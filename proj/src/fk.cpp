#include "cellhom/fk.hpp"

#include <cmath>

namespace cellhom {

// Domain -------------------------------------------------------------------

Domain Domain::make_ball(const Vec& c, double r) {
  Domain d;
  d.kind = Kind::ball;
  d.center = c;
  d.radius = r;
  return d;
}

Domain Domain::make_box(const Vec& lo, const Vec& hi) {
  Domain d;
  d.kind = Kind::box;
  d.lo = lo;
  d.hi = hi;
  return d;
}

double Domain::signed_distance(const Vec& x) const {
  if (kind == Kind::ball) return (x - center).norm() - radius;
  double sd = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < lo.size(); ++i) {
    sd = std::max(sd, lo[i] - x[i]);
    sd = std::max(sd, x[i] - hi[i]);
  }
  return sd;
}

Vec Domain::project(const Vec& x) const {
  if (kind == Kind::ball) {
    Vec r = x - center;
    double n = r.norm();
    if (n < 1e-14) {
      Vec e = Vec::Zero(center.size());
      e[0] = radius;
      return center + e;
    }
    return center + (radius / n) * r;
  }
  // box: clamp, then push the closest coordinate to its face if still interior
  Vec p = x.cwiseMax(lo).cwiseMin(hi);
  if (signed_distance(x) >= 0.0) return p;
  int best = 0;
  double margin = std::numeric_limits<double>::infinity();
  bool to_hi = false;
  for (int i = 0; i < lo.size(); ++i) {
    if (p[i] - lo[i] < margin) {
      margin = p[i] - lo[i];
      best = i;
      to_hi = false;
    }
    if (hi[i] - p[i] < margin) {
      margin = hi[i] - p[i];
      best = i;
      to_hi = true;
    }
  }
  p[best] = to_hi ? hi[best] : lo[best];
  return p;
}

Vec Domain::boundary_normal(const Vec& x) const {
  if (kind == Kind::ball) {
    Vec r = x - center;
    double n = r.norm();
    return n < 1e-14 ? Vec::Unit(center.size(), 0) : Vec(r / n);
  }
  Vec n = Vec::Zero(lo.size());
  int best = 0;
  double margin = std::numeric_limits<double>::infinity();
  double sign = 1.0;
  for (int i = 0; i < lo.size(); ++i) {
    if (x[i] - lo[i] < margin) {
      margin = x[i] - lo[i];
      best = i;
      sign = -1.0;
    }
    if (hi[i] - x[i] < margin) {
      margin = hi[i] - x[i];
      best = i;
      sign = 1.0;
    }
  }
  n[best] = sign;
  return n;
}

void EllipticProblem::validate(const ProblemSpec* spec) const {
  if (delta <= 0.0) throw std::invalid_argument("delta must be positive");
  if (alpha < 0.0) throw std::invalid_argument("alpha must be >= 0");
  if (!f) return;
  const double bound = std::max(0.0, alpha - delta) + 1e-12;
  const int d = domain.dim();
  const int dy = spec ? spec->d : d;
  // bounding box of the domain for the slow sample
  Vec lo = domain.kind == Domain::Kind::ball
               ? Vec(domain.center.array() - domain.radius)
               : domain.lo;
  Vec hi = domain.kind == Domain::Kind::ball
               ? Vec(domain.center.array() + domain.radius)
               : domain.hi;
  GridShape xs{d, 5}, ys{dy, 4};
  for (std::size_t i = 0; i < xs.cell_count(); ++i) {
    Vec u = xs.center(i);
    Vec x = lo + u.cwiseProduct(hi - lo);
    if (!domain.contains(x)) continue;
    for (std::size_t j = 0; j < ys.cell_count(); ++j)
      if (f(x, ys.center(j)) > bound)
        throw AssumptionError("potential violates growth bound (borne)");
  }
}

// Path drivers -------------------------------------------------------------

namespace {

// Fraction theta of the step at which the segment prev -> next crosses the
// boundary (prev inside, next outside).
double crossing_fraction(const Domain& dom, const Vec& prev, const Vec& next) {
  double a = 0.0, b = 1.0;
  for (int it = 0; it < 40; ++it) {
    double mid = 0.5 * (a + b);
    if (dom.signed_distance(prev + mid * (next - prev)) < 0.0)
      a = mid;
    else
      b = mid;
  }
  return 0.5 * (a + b);
}

struct PathExit {
  double tau = 0.0;
  Vec x_exit;
  bool capped = false;
  double integral = 0.0;  // int_0^tau integrand ds, trapezoidal
};

// eps-process exit walk: torus simulation in rescaled time, physical
// position eps * lift, physical step eps^2 h.
PathExit exit_walk_eps(const ProblemSpec& spec, double eps, const Domain& dom,
                       const Vec& x0, const Stepper& stepper, double h, double T_max,
                       const SlowFastFunction& integrand, std::mt19937_64& rng) {
  const double dt = eps * eps * h;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  PathExit out;
  LiftedState s = make_start(x0 / eps);
  Vec xp = eps * s.lift();
  double fp = integrand ? integrand(xp, s.y) : 0.0;
  double d_prev = -dom.signed_distance(xp);
  auto max_steps = static_cast<std::size_t>(std::llround(T_max / dt));
  for (std::size_t i = 0; i < max_steps; ++i) {
    stepper.step(s, rng);
    Vec xn = eps * s.lift();
    double fn = integrand ? integrand(xn, s.y) : 0.0;
    double sdn = dom.signed_distance(xn);
    if (sdn >= 0.0) {
      double th = crossing_fraction(dom, xp, xn);
      out.tau = i * dt + th * dt;
      out.x_exit = dom.project(xp + th * (xn - xp));
      out.integral += th * dt * 0.5 * (fp + fn);
      return out;
    }
    double dn = -sdn;
    // bridge correction for excursions crossing the boundary inside the
    // step; the local normal diffusion is n^T a(y) n in physical time
    if (2.0 * d_prev * dn < 120.0 * dt) {
      Vec nrm = dom.boundary_normal(xn);
      double s2 = nrm.dot(spec.a_at(s.y) * nrm);
      double ex = 2.0 * d_prev * dn / (s2 * dt);
      if (ex < 60.0 && s2 > 0.0 && unif(rng) < std::exp(-ex)) {
        out.tau = (i + 0.5) * dt;
        out.x_exit = dom.project(d_prev < dn ? xp : xn);
        out.integral += 0.25 * dt * (fp + fn);
        return out;
      }
    }
    out.integral += dt * 0.5 * (fp + fn);
    xp = xn;
    fp = fn;
    d_prev = dn;
  }
  out.capped = true;
  out.tau = T_max;
  out.x_exit = dom.project(xp);
  return out;
}

PathExit exit_walk_limit(const Mat& sqrtA, const Vec& C, const Domain& dom, const Vec& x0,
                         double h, double T_max, const SlowFunction& integrand,
                         std::mt19937_64& rng) {
  const int d = static_cast<int>(x0.size());
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double sh = std::sqrt(h);
  const double trA = (sqrtA * sqrtA).trace();
  PathExit out;
  Vec xp = x0;
  double fp = integrand ? integrand(xp) : 0.0;
  double dp = -dom.signed_distance(xp);
  auto max_steps = static_cast<std::size_t>(std::llround(T_max / h));
  Vec xi(d);
  for (std::size_t i = 0; i < max_steps; ++i) {
    for (int j = 0; j < d; ++j) xi[j] = normal(rng);
    Vec xn = xp + C * h + sqrtA * (sh * xi);
    double fn = integrand ? integrand(xn) : 0.0;
    double sdn = dom.signed_distance(xn);
    if (sdn >= 0.0) {
      double th = crossing_fraction(dom, xp, xn);
      out.tau = i * h + th * h;
      out.x_exit = dom.project(xp + th * (xn - xp));
      out.integral += th * h * 0.5 * (fp + fn);
      return out;
    }
    double dn = -sdn;
    // Brownian-bridge probability of an unobserved excursion across the
    // boundary within the step; removes the O(sqrt(h)) exit-time bias.
    if (2.0 * dp * dn < 60.0 * trA * h) {
      Vec nrm = dom.boundary_normal(xp);
      double s2 = (sqrtA * nrm).squaredNorm();
      double ex = 2.0 * dp * dn / (s2 * h);
      if (ex < 60.0 && unif(rng) < std::exp(-ex)) {
        out.tau = (i + 0.5) * h;
        out.x_exit = dom.project(dp < dn ? xp : xn);
        out.integral += 0.25 * h * (fp + fn);
        return out;
      }
    }
    out.integral += h * 0.5 * (fp + fn);
    xp = xn;
    fp = fn;
    dp = dn;
  }
  out.capped = true;
  out.tau = T_max;
  out.x_exit = dom.project(xp);
  return out;
}

Mat symmetric_sqrt(const Mat& A) {
  Eigen::SelfAdjointEigenSolver<Mat> es(A);
  Vec ev = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

MCResult reduce_samples(std::vector<double>& samples, int capped) {
  MCResult r;
  r.n_paths = static_cast<int>(samples.size());
  r.capped_fraction = static_cast<double>(capped) / r.n_paths;
  double mean = 0.0;
  for (double v : samples) mean += v;
  r.value = mean / r.n_paths;
  r.stderr_val = batch_means_stderr(samples);
  if (r.capped_fraction > 0.01) throw NumericError("exit-time cap too tight");
  return r;
}

}  // namespace

// Exit times ---------------------------------------------------------------

ExitSamples exit_time_mc(const ProblemSpec& spec, double eps, const Domain& dom,
                         const Vec& x, const SimConfig& cfg, double T_max) {
  if (!dom.contains(x)) throw std::invalid_argument("start not inside the domain");
  SimConfig run = cfg;
  run.eps = eps;
  run.validate(spec);
  Stepper stepper(spec, run);
  ExitSamples out;
  out.n_paths = run.ensemble;
  out.tau.resize(run.ensemble);
  out.exit_point.resize(run.ensemble);
  std::vector<char> capped(run.ensemble, 0);
  parallel_for(static_cast<std::size_t>(run.ensemble), [&](std::size_t p) {
    auto rng = path_rng(run.seed, p);
    auto e = exit_walk_eps(spec, eps, dom, x, stepper, run.h, T_max, nullptr, rng);
    out.tau[p] = e.tau;
    out.exit_point[p] = e.x_exit;
    capped[p] = e.capped ? 1 : 0;
  });
  int nc = 0;
  for (char c : capped) nc += c;
  out.capped_fraction = static_cast<double>(nc) / run.ensemble;
  if (out.capped_fraction > 0.01) throw NumericError("exit-time cap too tight");
  return out;
}

ExitSamples exit_time_mc_limit(const Mat& A, const Vec& C, const Domain& dom, const Vec& x,
                               const SimConfig& cfg, double T_max) {
  if (!dom.contains(x)) throw std::invalid_argument("start not inside the domain");
  Mat sqrtA = symmetric_sqrt(A);
  ExitSamples out;
  out.n_paths = cfg.ensemble;
  out.tau.resize(cfg.ensemble);
  out.exit_point.resize(cfg.ensemble);
  std::vector<char> capped(cfg.ensemble, 0);
  parallel_for(static_cast<std::size_t>(cfg.ensemble), [&](std::size_t p) {
    auto rng = path_rng(cfg.seed, p);
    auto e = exit_walk_limit(sqrtA, C, dom, x, cfg.h, T_max, nullptr, rng);
    out.tau[p] = e.tau;
    out.exit_point[p] = e.x_exit;
    capped[p] = e.capped ? 1 : 0;
  });
  int nc = 0;
  for (char c : capped) nc += c;
  out.capped_fraction = static_cast<double>(nc) / cfg.ensemble;
  if (out.capped_fraction > 0.01) throw NumericError("exit-time cap too tight");
  return out;
}

// Elliptic solvers ---------------------------------------------------------

MCResult elliptic_eps(const EllipticProblem& prob, const ProblemSpec& spec, double eps,
                      const Vec& x, const SimConfig& cfg, double T_max) {
  prob.validate(&spec);
  if (!prob.domain.contains(x)) throw std::invalid_argument("start not inside the domain");
  SimConfig run = cfg;
  run.eps = eps;
  run.validate(spec);
  Stepper stepper(spec, run);
  SlowFastFunction integrand;
  if (prob.f || prob.alpha != 0.0)
    integrand = [&prob](const Vec& xs, const Vec& ys) {
      return (prob.f ? prob.f(xs, ys) : 0.0) - prob.alpha;
    };
  std::vector<double> samples(run.ensemble);
  std::vector<char> capped(run.ensemble, 0);
  parallel_for(static_cast<std::size_t>(run.ensemble), [&](std::size_t p) {
    auto rng = path_rng(run.seed, p);
    auto e = exit_walk_eps(spec, eps, prob.domain, x, stepper, run.h, T_max, integrand, rng);
    samples[p] = prob.g(e.x_exit) * std::exp(e.integral);
    capped[p] = e.capped ? 1 : 0;
  });
  int nc = 0;
  for (char c : capped) nc += c;
  return reduce_samples(samples, nc);
}

MCResult elliptic_hom(const EllipticProblem& prob, const EffectiveCoefficients& coeffs,
                      const SlowFunction& D_eff, const Vec& x, const SimConfig& cfg,
                      double T_max) {
  prob.validate(nullptr);
  if (!prob.domain.contains(x)) throw std::invalid_argument("start not inside the domain");
  Eigen::SelfAdjointEigenSolver<Mat> es(coeffs.A);
  if (es.eigenvalues().maxCoeff() < 1e-10 && coeffs.C.norm() < 1e-10)
    throw NumericError("homogenized exit ill-posed");
  Mat sqrtA = symmetric_sqrt(coeffs.A);
  // slow potential of the limit problem, shifted by the killing rate
  SlowFunction integrand;
  if (D_eff || prob.alpha != 0.0)
    integrand = [&prob, &D_eff](const Vec& xs) {
      return (D_eff ? D_eff(xs) : 0.0) - prob.alpha;
    };

  std::vector<double> samples(cfg.ensemble);
  std::vector<char> capped(cfg.ensemble, 0);
  std::vector<double> min_ann(cfg.ensemble, 1.0);
  parallel_for(static_cast<std::size_t>(cfg.ensemble), [&](std::size_t p) {
    auto rng = path_rng(cfg.seed, p);
    auto e = exit_walk_limit(sqrtA, coeffs.C, prob.domain, x, cfg.h, T_max, integrand, rng);
    samples[p] = prob.g(e.x_exit) * std::exp(e.integral);
    capped[p] = e.capped ? 1 : 0;
    Vec n = prob.domain.boundary_normal(e.x_exit);
    min_ann[p] = n.dot(coeffs.A * n);
  });
  // relaxed well-posedness: <A n, n> > 0 at the sampled exit points
  for (double v : min_ann)
    if (v <= 1e-10) throw NumericError("homogenized exit ill-posed");
  int nc = 0;
  for (char c : capped) nc += c;
  return reduce_samples(samples, nc);
}

// Parabolic solvers --------------------------------------------------------

ParabolicResult parabolic_eps(const ParabolicProblem& prob, const ProblemSpec& spec,
                              double eps, const CorrectorField* corrector_e, const Vec& x,
                              const SimConfig& cfg, const OccupationGrid* mu,
                              double centering_tol) {
  if (prob.e && mu) {
    double r = mu->integrate([&](const Vec& y) { return prob.e->value(y); });
    if (std::abs(r) > centering_tol) throw AssumptionError("e not centered (ezero)");
  }
  if (prob.e && !corrector_e)
    throw std::invalid_argument("corrector for e required when e is nonzero");
  if (corrector_e && !corrector_e->gradient_flag_ok)
    throw std::invalid_argument("corrector gradient cross-check flagged");

  SimConfig run = cfg;
  run.eps = eps;
  run.validate(spec);
  Stepper stepper(spec, run);
  auto steps = static_cast<std::size_t>(std::llround(prob.t / (eps * eps) / run.h));
  const double dt_phys = eps * eps * run.h;
  const double sh = std::sqrt(run.h);

  std::vector<double> raw_s(run.ensemble), cor_s(run.ensemble);
  parallel_for(static_cast<std::size_t>(run.ensemble), [&](std::size_t p) {
    auto rng = path_rng(run.seed, p);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec xi(spec.m);
    LiftedState s = make_start(x / eps);
    double raw = 0.0, cor = 0.0;
    double e0 = corrector_e ? corrector_e->value_at(0, s.y) : 0.0;
    // trapezoid bookkeeping for the time integrals
    Vec xphys = eps * s.lift();
    double ev = prob.e ? prob.e->value(s.y) : 0.0;
    double fv = prob.f ? prob.f(xphys, s.y) : 0.0;
    Vec ge = corrector_e ? Vec(corrector_e->gradient_at(s.y).row(0).transpose())
                         : Vec(Vec::Zero(spec.d));
    double gc = corrector_e ? ge.dot(spec.drift_c(s.y)) : 0.0;
    for (std::size_t i = 0; i < steps; ++i) {
      for (int j = 0; j < spec.m; ++j) xi[j] = normal(rng);
      // stochastic integral uses the pre-step state (Ito)
      if (corrector_e) cor += eps * ge.dot(spec.sigma_at(s.y) * xi) * sh;
      stepper.step_given(s, xi);
      xphys = eps * s.lift();
      double ev2 = prob.e ? prob.e->value(s.y) : 0.0;
      double fv2 = prob.f ? prob.f(xphys, s.y) : 0.0;
      raw += 0.5 * (ev + ev2) * eps * run.h + 0.5 * (fv + fv2) * dt_phys;
      double gc2 = 0.0;
      if (corrector_e) {
        ge = corrector_e->gradient_at(s.y).row(0).transpose();
        gc2 = ge.dot(spec.drift_c(s.y));
      }
      cor += 0.5 * (fv + fv2) * dt_phys + 0.5 * (gc + gc2) * dt_phys;
      ev = ev2;
      fv = fv2;
      gc = gc2;
    }
    if (corrector_e) cor += eps * (e0 - corrector_e->value_at(0, s.y));
    double gx = prob.g(xphys);
    raw_s[p] = gx * std::exp(raw);
    cor_s[p] = gx * std::exp(cor);
  });

  ParabolicResult out;
  out.raw = reduce_samples(raw_s, 0);
  out.corrected = reduce_samples(cor_s, 0);
  double se = std::hypot(out.raw.stderr_val, out.corrected.stderr_val);
  out.agree = std::abs(out.raw.value - out.corrected.value) <= 3.0 * se + 1e-12;
  return out;
}

MCResult parabolic_hom(const ParabolicProblem& prob, const EffectiveCoefficients& coeffs,
                       const SlowFunction& D_eff, const Vec& x, const SimConfig& cfg) {
  Mat sqrtA = symmetric_sqrt(coeffs.A);
  const int d = static_cast<int>(x.size());
  auto steps = static_cast<std::size_t>(std::llround(prob.t / cfg.h));
  const double sh = std::sqrt(cfg.h);
  std::vector<double> samples(cfg.ensemble);
  parallel_for(static_cast<std::size_t>(cfg.ensemble), [&](std::size_t p) {
    auto rng = path_rng(cfg.seed, p);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec xp = x, xi(d);
    double logw = 0.0;
    double fp = D_eff ? D_eff(xp) : 0.0;
    for (std::size_t i = 0; i < steps; ++i) {
      for (int j = 0; j < d; ++j) xi[j] = normal(rng);
      xp += coeffs.C * cfg.h + sqrtA * (sh * xi);
      double fn = D_eff ? D_eff(xp) : 0.0;
      logw += 0.5 * (fp + fn) * cfg.h;
      fp = fn;
    }
    samples[p] = prob.g(xp) * std::exp(logw);
  });
  return reduce_samples(samples, 0);
}

}  // namespace cellhom
