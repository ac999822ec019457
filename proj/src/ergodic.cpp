#include "cellhom/ergodic.hpp"

#include <cmath>
#include <mutex>

namespace cellhom {

// OccupationGrid -----------------------------------------------------------

void OccupationGrid::merge(const OccupationGrid& other) {
  if (!(shape == other.shape)) throw std::invalid_argument("histogram shape mismatch");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  total += other.total;
}

double OccupationGrid::integrate(const std::function<double(const Vec&)>& f) const {
  double s = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i)
    if (counts[i]) s += f(shape.center(i)) * density(i);
  return s;
}

// CorrectorField -----------------------------------------------------------

namespace {

// Multilinear periodic interpolation weights: 2^d corner cells and weights
// for a point x given cell centers at (i+1/2)/n.
void interp_corners(const GridShape& shape, const Vec& x, std::vector<std::size_t>& cells,
                    std::vector<double>& weights) {
  const int d = shape.d, n = shape.n;
  std::vector<int> base(d);
  std::vector<double> frac(d);
  for (int i = 0; i < d; ++i) {
    double u = wrap01(x[i]) * n - 0.5;
    double fl = std::floor(u);
    base[i] = static_cast<int>(fl);
    frac[i] = u - fl;
  }
  std::size_t corners = std::size_t{1} << d;
  cells.resize(corners);
  weights.resize(corners);
  std::vector<int> idx(d);
  for (std::size_t c = 0; c < corners; ++c) {
    double w = 1.0;
    for (int i = 0; i < d; ++i) {
      int off = (c >> i) & 1;
      int ii = base[i] + off;
      ii = ((ii % n) + n) % n;
      idx[i] = ii;
      w *= off ? frac[i] : 1.0 - frac[i];
    }
    cells[c] = shape.flatten(idx);
    weights[c] = w;
  }
}

}  // namespace

double CorrectorField::value_at(int comp, const Vec& x) const {
  std::vector<std::size_t> cells;
  std::vector<double> w;
  interp_corners(shape, x, cells, w);
  double v = 0.0;
  for (std::size_t c = 0; c < cells.size(); ++c) v += w[c] * values(cells[c], comp);
  return v;
}

Mat CorrectorField::gradient_at(const Vec& x) const {
  std::vector<std::size_t> cells;
  std::vector<double> w;
  interp_corners(shape, x, cells, w);
  Mat g = Mat::Zero(n_comp, shape.d);
  for (std::size_t c = 0; c < cells.size(); ++c) g += w[c] * gradients[cells[c]];
  return g;
}

Mat CorrectorField::fd_gradient(std::size_t cell) const {
  const int d = shape.d, n = shape.n;
  auto idx = shape.unflatten(cell);
  Mat g(n_comp, d);
  for (int j = 0; j < d; ++j) {
    auto ip = idx, im = idx;
    ip[j] = (idx[j] + 1) % n;
    im[j] = (idx[j] - 1 + n) % n;
    std::size_t cp = shape.flatten(ip), cm = shape.flatten(im);
    for (int comp = 0; comp < n_comp; ++comp)
      g(comp, j) = (values(cp, comp) - values(cm, comp)) * n / 2.0;
  }
  return g;
}

// Sampling -----------------------------------------------------------------

Vec default_start(const ProblemSpec& spec) {
  if (!spec.alpha) return Vec::Constant(spec.d, 0.5);
  GridShape g{spec.d, 32};
  double best = -1.0;
  Vec arg = Vec::Constant(spec.d, 0.5);
  for (std::size_t i = 0; i < g.cell_count(); ++i) {
    Vec x = g.center(i);
    double v = spec.alpha->value(x);
    if (v > best) {
      best = v;
      arg = x;
    }
  }
  return arg;
}

OccupationGrid estimate_invariant(const ProblemSpec& spec, double eps, const SimConfig& cfg,
                                  int n, double burn_in, std::optional<Vec> start) {
  if (burn_in >= cfg.T) throw std::invalid_argument("burn_in must be < T");
  SimConfig run = cfg;
  run.eps = eps;
  run.validate(spec);
  Vec x0 = start.value_or(default_start(spec));
  GridShape shape{spec.d, n};
  OccupationGrid grid(shape);
  grid.burn_in = burn_in;
  Stepper stepper(spec, run);
  auto steps = static_cast<std::size_t>(std::llround(run.T / run.h));
  auto burn_steps = static_cast<std::size_t>(std::llround(burn_in / run.h));

  std::mutex mu;
  parallel_for(static_cast<std::size_t>(run.ensemble), [&](std::size_t p) {
    auto rng = path_rng(run.seed, p);
    LiftedState s = make_start(x0);
    std::vector<std::uint32_t> local(shape.cell_count(), 0);
    std::uint64_t nloc = 0;
    for (std::size_t i = 0; i < steps; ++i) {
      stepper.step(s, rng);
      if (i >= burn_steps) {
        ++local[shape.cell_of(s.y)];
        ++nloc;
      }
    }
    std::lock_guard<std::mutex> lock(mu);
    for (std::size_t cidx = 0; cidx < local.size(); ++cidx) grid.counts[cidx] += local[cidx];
    grid.total += nloc;
  });
  return grid;
}

Vec centering_residual(const OccupationGrid& grid, const ProblemSpec& spec) {
  if (grid.total == 0) throw std::invalid_argument("empty occupation grid");
  Vec r = Vec::Zero(spec.d);
  for (std::size_t i = 0; i < grid.counts.size(); ++i)
    if (grid.counts[i]) r += spec.drift(grid.shape.center(i)) * grid.density(i);
  return r;
}

CenteringReport centering_check(const ProblemSpec& spec, double eps, const SimConfig& cfg,
                                double burn_in, std::optional<Vec> start) {
  SimConfig run = cfg;
  run.eps = eps;
  run.validate(spec);
  Vec x0 = start.value_or(default_start(spec));
  Stepper stepper(spec, run);
  auto steps = static_cast<std::size_t>(std::llround(run.T / run.h));
  auto burn_steps = static_cast<std::size_t>(std::llround(burn_in / run.h));

  Mat path_means(run.ensemble, spec.d);
  parallel_for(static_cast<std::size_t>(run.ensemble), [&](std::size_t p) {
    auto rng = path_rng(run.seed, p);
    LiftedState s = make_start(x0);
    Vec acc = Vec::Zero(spec.d);
    std::size_t nacc = 0;
    for (std::size_t i = 0; i < steps; ++i) {
      stepper.step(s, rng);
      if (i >= burn_steps) {
        acc += spec.drift(s.y);
        ++nacc;
      }
    }
    path_means.row(p) = acc.transpose() / static_cast<double>(nacc);
  });

  CenteringReport rep;
  rep.residual = path_means.colwise().mean().transpose();
  rep.stderr_res = Vec(spec.d);
  for (int i = 0; i < spec.d; ++i) {
    MeanVar mv;
    for (int p = 0; p < run.ensemble; ++p) mv.add(path_means(p, i));
    rep.stderr_res[i] = mv.stderr_mean();
  }
  rep.passes = true;
  for (int i = 0; i < spec.d; ++i)
    if (std::abs(rep.residual[i]) > 4.0 * rep.stderr_res[i] + 1e-12) rep.passes = false;
  return rep;
}

// Mixing -------------------------------------------------------------------

MixingReport mixing_estimate(const ProblemSpec& spec, const FieldPtr& f, const SimConfig& cfg,
                             std::optional<Vec> start) {
  SimConfig run = cfg;
  run.validate(spec);
  (void)start;

  const int n_times = 8;
  GridShape starts{spec.d, 4};
  auto steps_total = static_cast<std::size_t>(std::llround(run.T / run.h));
  std::vector<std::size_t> sample_steps(n_times);
  for (int j = 0; j < n_times; ++j)
    sample_steps[j] = steps_total * (j + 1) / n_times;

  const std::size_t n_starts = starts.cell_count();
  Mat means(n_starts, n_times);
  Mat errs(n_starts, n_times);
  Stepper stepper(spec, run);
  parallel_for(n_starts, [&](std::size_t si) {
    std::vector<MeanVar> acc(n_times);
    for (int p = 0; p < run.ensemble; ++p) {
      auto rng = path_rng(run.seed ^ (0x9d8f3b1ULL * (si + 1)), p);
      LiftedState s = make_start(starts.center(si));
      int j = 0;
      for (std::size_t i = 1; i <= steps_total && j < n_times; ++i) {
        stepper.step(s, rng);
        if (i == sample_steps[j]) {
          acc[j].add(f->value(s.y));
          ++j;
        }
      }
    }
    for (int j = 0; j < n_times; ++j) {
      means(si, j) = acc[j].mean;
      errs(si, j) = acc[j].stderr_mean();
    }
  });

  // Spread across starts as the decay envelope: half the range of the
  // ensemble means cancels mu(f) exactly, so no separate (noisy) estimate
  // of the stationary average enters the fit.
  std::vector<double> ts, logs;
  for (int j = 0; j < n_times; ++j) {
    double lo = means(0, j), hi = means(0, j), emax = 0.0;
    for (std::size_t si = 0; si < n_starts; ++si) {
      lo = std::min(lo, means(si, j));
      hi = std::max(hi, means(si, j));
      emax = std::max(emax, errs(si, j));
    }
    double dmax = 0.5 * (hi - lo);
    if (dmax > 5.0 * emax && dmax > 0.0) {
      ts.push_back(sample_steps[j] * run.h);
      logs.push_back(std::log(dmax));
    }
  }
  if (ts.size() < 3) throw AssumptionError("no mixing detected");

  // least squares slope of log envelope vs t
  double n = static_cast<double>(ts.size());
  double st = 0, sl = 0, stt = 0, stl = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    st += ts[i];
    sl += logs[i];
    stt += ts[i] * ts[i];
    stl += ts[i] * logs[i];
  }
  double denom = n * stt - st * st;
  double slope = (n * stl - st * sl) / denom;
  double intercept = (sl - slope * st) / n;
  double rss = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    double r = logs[i] - (intercept + slope * ts[i]);
    rss += r * r;
  }
  double slope_se =
      ts.size() > 2 ? std::sqrt(rss / (n - 2.0) / (stt - st * st / n)) : 0.0;
  // the decay has to be resolved above the fit uncertainty
  if (slope > -1e-9 || -slope < 3.0 * slope_se)
    throw AssumptionError("no mixing detected");

  MixingReport rep;
  rep.rate = -slope;
  rep.ci_half = 2.0 * slope_se;
  rep.suggested_T_corr = 5.0 / rep.rate;
  return rep;
}

// Corrector ----------------------------------------------------------------

CorrectorField corrector(const ProblemSpec& spec, const VectorField& target,
                         const SimConfig& cfg, int n, double T_corr,
                         const OccupationGrid* mu, double centering_tol) {
  SimConfig run = cfg;
  run.T = T_corr;
  run.validate(spec);
  const int d = spec.d;
  const int nc = static_cast<int>(target.size());

  if (mu) {
    for (int comp = 0; comp < nc; ++comp) {
      double r = mu->integrate([&](const Vec& y) { return target[comp]->value(y); });
      if (std::abs(r) > centering_tol)
        throw AssumptionError("target not centered: Poisson equation unsolvable");
    }
  }

  GridShape shape{d, n};
  const std::size_t cells = shape.cell_count();
  auto steps = static_cast<std::size_t>(std::llround(T_corr / run.h));
  Stepper stepper(spec, run);

  CorrectorField out;
  out.shape = shape;
  out.n_comp = nc;
  out.values = Mat::Zero(cells, nc);
  out.value_stderr = Mat::Zero(cells, nc);
  out.gradients.assign(cells, Mat::Zero(nc, d));
  out.gradient_stderr.assign(cells, Mat::Zero(nc, d));

  auto target_at = [&](const Vec& y) {
    Vec v(nc);
    for (int comp = 0; comp < nc; ++comp) v[comp] = target[comp]->value(y);
    return v;
  };
  auto dtarget_at = [&](const Vec& y) {
    Mat g(nc, d);
    for (int comp = 0; comp < nc; ++comp) g.row(comp) = target[comp]->gradient(y);
    return g;
  };

  parallel_for(cells, [&](std::size_t ci) {
    Vec x0 = shape.center(ci);
    std::vector<MeanVar> vacc(nc);
    std::vector<MeanVar> gacc(static_cast<std::size_t>(nc) * d);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec xi(spec.m);
    for (int p = 0; p < run.ensemble; ++p) {
      auto rng = path_rng(run.seed ^ (0x2545f4914f6cdd1dULL * (ci + 1)), p);
      // antithetic pair sharing the same normal draws
      LiftedState sa = make_start(x0), sb = make_start(x0);
      Mat Ja = Mat::Identity(d, d), Jb = Ja;
      Vec va = Vec::Zero(nc), vb = va;
      Mat ga = Mat::Zero(nc, d), gb = ga;
      // trapezoidal in s: endpoint weights 1/2
      va += 0.5 * target_at(sa.y);
      vb = va;
      ga += 0.5 * dtarget_at(sa.y);
      gb = ga;
      for (std::size_t i = 0; i < steps; ++i) {
        for (int j = 0; j < spec.m; ++j) xi[j] = normal(rng);
        stepper.step_given(sa, xi, &Ja);
        stepper.step_given(sb, Vec(-xi), &Jb);
        double w = (i + 1 == steps) ? 0.5 : 1.0;
        va += w * target_at(sa.y);
        vb += w * target_at(sb.y);
        ga += w * (dtarget_at(sa.y) * Ja);
        gb += w * (dtarget_at(sb.y) * Jb);
      }
      va *= run.h;
      vb *= run.h;
      ga *= run.h;
      gb *= run.h;
      for (int comp = 0; comp < nc; ++comp) {
        vacc[comp].add(0.5 * (va[comp] + vb[comp]));
        for (int j = 0; j < d; ++j)
          gacc[comp * d + j].add(0.5 * (ga(comp, j) + gb(comp, j)));
      }
    }
    for (int comp = 0; comp < nc; ++comp) {
      out.values(ci, comp) = vacc[comp].mean;
      out.value_stderr(ci, comp) = vacc[comp].stderr_mean();
      for (int j = 0; j < d; ++j) {
        out.gradients[ci](comp, j) = gacc[comp * d + j].mean;
        out.gradient_stderr[ci](comp, j) = gacc[comp * d + j].stderr_mean();
      }
    }
  });

  // fix the additive constant: zero grid mean per component
  for (int comp = 0; comp < nc; ++comp) {
    double m = out.values.col(comp).mean();
    out.values.col(comp).array() -= m;
  }

  // cross-check pathwise gradients against grid finite differences
  std::size_t agree = 0, tested = 0;
  for (std::size_t ci = 0; ci < cells; ++ci) {
    Mat fd = out.fd_gradient(ci);
    auto idx = shape.unflatten(ci);
    for (int comp = 0; comp < nc; ++comp)
      for (int j = 0; j < d; ++j) {
        auto ip = idx, im = idx;
        ip[j] = (idx[j] + 1) % n;
        im[j] = (idx[j] - 1 + n) % n;
        double fd_se = shape.n / 2.0 *
                       std::hypot(out.value_stderr(shape.flatten(ip), comp),
                                  out.value_stderr(shape.flatten(im), comp));
        double se = std::sqrt(fd_se * fd_se +
                              std::pow(out.gradient_stderr[ci](comp, j), 2));
        ++tested;
        if (std::abs(fd(comp, j) - out.gradients[ci](comp, j)) <= 3.0 * se + 1e-9)
          ++agree;
      }
  }
  out.cross_check_fraction = tested ? static_cast<double>(agree) / tested : 1.0;
  out.gradient_flag_ok = out.cross_check_fraction >= 0.95;
  return out;
}

// 1-d quadrature oracle ----------------------------------------------------

Oracle1D poisson_oracle_1d(const ProblemSpec& spec, int n, FieldPtr scalar_target,
                           int quad_points) {
  if (spec.d != 1) throw std::invalid_argument("oracle requires d = 1");
  int k = std::max(16, (quad_points + n - 1) / n);
  if (k % 2) ++k;
  const int M = n * k;
  const double dx = 1.0 / M;

  std::vector<double> av(M), bv(M);
  Vec x(1);
  for (int q = 0; q < M; ++q) {
    x[0] = q * dx;
    av[q] = spec.a_at(x)(0, 0);
    bv[q] = spec.drift(x)[0];
    if (av[q] <= 0.0) throw AssumptionError("1-d oracle requires ellipticity");
  }

  // a p = a p(0) exp(B), B(x) = int_0^x 2 b / a; periodicity forces B(1)=0,
  // which is the 1-d form of the centering condition.
  std::vector<double> B(M + 1, 0.0);
  for (int q = 0; q < M; ++q) {
    double f0 = 2.0 * bv[q] / av[q];
    double f1 = 2.0 * bv[(q + 1) % M] / av[(q + 1) % M];
    B[q + 1] = B[q] + 0.5 * (f0 + f1) * dx;
  }
  if (std::abs(B[M]) > 1e-6) throw AssumptionError("drift not centered");

  std::vector<double> p(M);
  double norm = 0.0;
  for (int q = 0; q < M; ++q) {
    p[q] = std::exp(B[q]) / av[q];
    norm += p[q] * dx;
  }
  for (int q = 0; q < M; ++q) p[q] /= norm;

  Oracle1D out;
  out.density = p;

  GridShape shape{1, n};
  out.field.shape = shape;
  out.field.n_comp = 1;
  out.field.values = Mat::Zero(n, 1);
  out.field.value_stderr = Mat::Zero(n, 1);
  out.field.gradients.assign(n, Mat::Zero(1, 1));
  out.field.gradient_stderr.assign(n, Mat::Zero(1, 1));

  std::vector<double> deriv(M);
  if (!scalar_target) {
    // vector corrector: a p (1 + bhat') constant; A = harmonic-type mean
    double inv_int = 0.0;
    for (int q = 0; q < M; ++q) inv_int += dx / (av[q] * p[q]);
    double c0 = 1.0 / inv_int;
    for (int q = 0; q < M; ++q) deriv[q] = c0 / (av[q] * p[q]) - 1.0;
    out.A = c0;
  } else {
    // scalar corrector: (1/2) a p ehat' = K - int_0^x e p
    std::vector<double> ev(M), E(M + 1, 0.0);
    for (int q = 0; q < M; ++q) {
      x[0] = q * dx;
      ev[q] = scalar_target->value(x);
    }
    for (int q = 0; q < M; ++q) {
      double f0 = ev[q] * p[q];
      double f1 = ev[(q + 1) % M] * p[(q + 1) % M];
      E[q + 1] = E[q] + 0.5 * (f0 + f1) * dx;
    }
    if (std::abs(E[M]) > 1e-6) throw AssumptionError("e not centered (ezero)");
    double num = 0.0, den = 0.0;
    for (int q = 0; q < M; ++q) {
      num += E[q] / (av[q] * p[q]) * dx;
      den += 1.0 / (av[q] * p[q]) * dx;
    }
    double K = num / den;
    for (int q = 0; q < M; ++q) deriv[q] = 2.0 * (K - E[q]) / (av[q] * p[q]);
    double Dq = 0.0;
    for (int q = 0; q < M; ++q) Dq += 0.5 * deriv[q] * deriv[q] * av[q] * p[q] * dx;
    out.D_quad = Dq;
  }

  // integrate the derivative, remove the mean, then sample at cell centers
  std::vector<double> val(M + 1, 0.0);
  for (int q = 0; q < M; ++q)
    val[q + 1] = val[q] + 0.5 * (deriv[q] + deriv[(q + 1) % M]) * dx;
  double vmean = 0.0;
  for (int q = 0; q < M; ++q) vmean += val[q] * dx;
  for (int i = 0; i < n; ++i) {
    int q = i * k + k / 2;  // exact quadrature node at the cell center
    out.field.values(i, 0) = val[q] - vmean;
    out.field.gradients[i](0, 0) = deriv[q];
  }
  return out;
}

// Effective coefficients ---------------------------------------------------

namespace {

struct BatchAccumulator {
  int n_batches;
  std::vector<Mat> sums;
  std::vector<std::uint64_t> counts;
  int current = 0;

  BatchAccumulator(int nb, int rows, int cols)
      : n_batches(nb), sums(nb, Mat::Zero(rows, cols)), counts(nb, 0) {}
  void add(const Mat& v, std::size_t step, std::size_t total_steps) {
    int batch = static_cast<int>(step * n_batches / total_steps);
    if (batch >= n_batches) batch = n_batches - 1;
    sums[batch] += v;
    ++counts[batch];
  }
  Mat mean() const {
    Mat m = Mat::Zero(sums[0].rows(), sums[0].cols());
    std::uint64_t n = 0;
    for (int b = 0; b < n_batches; ++b) {
      m += sums[b];
      n += counts[b];
    }
    return m / static_cast<double>(n);
  }
  Mat stderr_mat() const {
    Mat mu = mean();
    Mat var = Mat::Zero(mu.rows(), mu.cols());
    int used = 0;
    for (int b = 0; b < n_batches; ++b) {
      if (!counts[b]) continue;
      Mat bm = sums[b] / static_cast<double>(counts[b]);
      var += (bm - mu).cwiseProduct(bm - mu);
      ++used;
    }
    if (used < 2) return Mat::Zero(mu.rows(), mu.cols());
    var /= static_cast<double>(used - 1);
    return (var / static_cast<double>(used)).cwiseSqrt();
  }
};

}  // namespace

EffectiveCoefficients effective_AC(const ProblemSpec& spec, const CorrectorField& corr,
                                   const SimConfig& cfg, const CorrectorField* corr_e,
                                   bool override_gradient_flag, std::optional<Vec> start) {
  if (!corr.gradient_flag_ok && !override_gradient_flag)
    throw std::invalid_argument("corrector gradient cross-check flagged; override to proceed");
  SimConfig run = cfg;
  run.validate(spec);
  const int d = spec.d;
  Stepper stepper(spec, run);
  auto total = static_cast<std::size_t>(std::llround(run.T / run.h));
  auto burn = total / 10;
  auto rng = path_rng(run.seed, 0);
  LiftedState s = make_start(start.value_or(default_start(spec)));

  BatchAccumulator accA(20, d, d), accC(20, d, 1);
  const Mat I = Mat::Identity(d, d);
  for (std::size_t i = 0; i < total; ++i) {
    stepper.step(s, rng);
    if (i < burn) continue;
    Mat Mfac = I + corr.gradient_at(s.y);
    Mat a = spec.a_at(s.y);
    Mat phi = Mfac * a * Mfac.transpose();
    Vec cvec = spec.drift_c(s.y);
    if (corr_e) {
      Vec ge = corr_e->gradient_at(s.y).row(0).transpose();
      cvec += a * ge;
    }
    accA.add(phi, i - burn, total - burn);
    accC.add(Mfac * cvec, i - burn, total - burn);
  }

  EffectiveCoefficients out;
  Mat A = accA.mean();
  out.A = 0.5 * (A + A.transpose());
  out.stderr_A = accA.stderr_mat();
  out.C = accC.mean();
  out.stderr_C = accC.stderr_mat();
  out.samples = total - burn;
  out.horizon = run.T;
  out.seed = run.seed;

  Eigen::SelfAdjointEigenSolver<Mat> es(out.A);
  double tol = 3.0 * out.stderr_A.maxCoeff() + 1e-12;
  if (es.eigenvalues().minCoeff() < -tol) throw NumericError("inconsistent corrector");
  return out;
}

ValueWithError effective_D(const ProblemSpec& spec, const CorrectorField* corr_e,
                           const SlowFastFunction& f, const Vec& x, const SimConfig& cfg,
                           std::optional<Vec> start) {
  SimConfig run = cfg;
  run.validate(spec);
  Stepper stepper(spec, run);
  auto total = static_cast<std::size_t>(std::llround(run.T / run.h));
  auto burn = total / 10;
  auto rng = path_rng(run.seed, 0);
  LiftedState s = make_start(start.value_or(default_start(spec)));

  BatchAccumulator acc(20, 1, 1);
  for (std::size_t i = 0; i < total; ++i) {
    stepper.step(s, rng);
    if (i < burn) continue;
    double v = f ? f(x, s.y) : 0.0;
    if (corr_e) {
      Vec ge = corr_e->gradient_at(s.y).row(0).transpose();
      v += 0.5 * ge.dot(spec.a_at(s.y) * ge) + ge.dot(spec.drift_c(s.y));
    }
    Mat mv(1, 1);
    mv(0, 0) = v;
    acc.add(mv, i - burn, total - burn);
  }
  return {acc.mean()(0, 0), acc.stderr_mat()(0, 0)};
}

// Physical-process functionals ---------------------------------------------

Vec physical_endpoint(const ProblemSpec& spec, const Vec& x, double eps, double t,
                      const SimConfig& cfg, std::uint64_t path_index) {
  if (eps <= 0.0) throw std::invalid_argument("physical process needs eps > 0");
  SimConfig run = cfg;
  run.eps = eps;
  run.validate(spec);
  Stepper stepper(spec, run);
  auto steps = static_cast<std::size_t>(std::llround(t / (eps * eps) / run.h));
  auto rng = path_rng(run.seed, path_index);
  LiftedState s = make_start(x / eps);
  for (std::size_t i = 0; i < steps; ++i) stepper.step(s, rng);
  return eps * s.lift();
}

std::vector<double> averaged_functional(const ProblemSpec& spec, const SlowFastFunction& f,
                                        const Vec& x, double eps, double t,
                                        const SimConfig& cfg) {
  if (eps <= 0.0) throw std::invalid_argument("averaged_functional needs eps > 0");
  SimConfig run = cfg;
  run.eps = eps;
  run.validate(spec);
  // boundedness spot check
  GridShape g{spec.d, 4};
  for (std::size_t i = 0; i < g.cell_count(); ++i)
    if (!std::isfinite(f(x, g.center(i))) || std::abs(f(x, g.center(i))) > 1e8)
      throw std::invalid_argument("f unbounded on sample grid");

  Stepper stepper(spec, run);
  auto steps = static_cast<std::size_t>(std::llround(t / (eps * eps) / run.h));
  std::vector<double> samples(run.ensemble);
  parallel_for(static_cast<std::size_t>(run.ensemble), [&](std::size_t p) {
    auto rng = path_rng(run.seed, p);
    LiftedState s = make_start(x / eps);
    double acc = 0.5 * f(eps * s.lift(), s.y);
    for (std::size_t i = 0; i < steps; ++i) {
      stepper.step(s, rng);
      double w = (i + 1 == steps) ? 0.5 : 1.0;
      acc += w * f(eps * s.lift(), s.y);
    }
    samples[p] = acc * run.h * eps * eps;
  });
  return samples;
}

}  // namespace cellhom
