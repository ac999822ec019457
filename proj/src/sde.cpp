#include "cellhom/sde.hpp"

#include <cmath>
#include <limits>
#include <queue>

namespace cellhom {

LiftedState make_start(const Vec& x) {
  LiftedState s;
  const int d = static_cast<int>(x.size());
  s.y = Vec(d);
  s.k = IVec(d);
  for (int i = 0; i < d; ++i) {
    long long shift;
    s.y[i] = wrap01(x[i], shift);
    s.k[i] = shift;
  }
  return s;
}

void SimConfig::validate(const ProblemSpec& spec) const {
  if (h <= 0.0 || T <= 0.0 || h > T) throw std::invalid_argument("need 0 < h <= T");
  if (eps < 0.0) throw std::invalid_argument("eps must be >= 0");
  if (ensemble < 1) throw std::invalid_argument("ensemble size must be >= 1");
  double bound = h * (spec.sup_norm_b() + eps * spec.sup_norm_c());
  if (bound >= 0.1)
    throw std::invalid_argument("step bound violated: h (||b|| + eps ||c||) >= 0.1");
}

Stepper::Stepper(const ProblemSpec& spec, const SimConfig& cfg)
    : spec_(spec), cfg_(cfg), sqrt_h_(std::sqrt(cfg.h)) {}

void Stepper::step_given(LiftedState& s, const Vec& xi, Mat* J) const {
  const int d = spec_.d, m = spec_.m;
  const double h = cfg_.h;

  Vec drift = spec_.drift(s.y);
  if (cfg_.eps > 0.0) drift += cfg_.eps * spec_.drift_c(s.y);
  Mat sig = spec_.sigma_at(s.y);

  Vec dy = drift * h + sig * (sqrt_h_ * xi);

  if (cfg_.scheme == Scheme::milstein_diag) {
    // diagonal correction (1/2) sum_j (Dsigma_j sigma_j) ((dW_j)^2 - h);
    // valid for commutative noise only.
    for (int j = 0; j < m; ++j) {
      Vec col = spec_.sigma_col(s.y, j);
      Mat Jc = spec_.sigma_col_jacobian(s.y, j);
      double dw = sqrt_h_ * xi[j];
      dy += 0.5 * (Jc * col) * (dw * dw - h);
    }
  }

  // Masked specs: b and sigma vanish on {alpha = 0}, a set the continuous
  // process never reaches, and decay quadratically toward it. A discrete
  // step can overshoot deep into that region and freeze the chain there,
  // which is pure discretization artifact. Reject any move whose
  // displacement could not be produced by the dynamics at the landing
  // point (the reverse step has vanishing probability).
  if (spec_.alpha && dy.squaredNorm() > 0.0) {
    Vec yn(d);
    for (int i = 0; i < d; ++i) yn[i] = wrap01(s.y[i] + dy[i]);
    double scale = 6.0 * (spec_.sigma_at(yn).norm() * sqrt_h_ +
                          spec_.drift(yn).norm() * h);
    if (dy.norm() > scale) {
      s.t += h;
      return;
    }
  }

  if (J) {
    Mat Db = spec_.drift_jacobian(s.y);
    Mat dJ = Db * (*J) * h;
    for (int j = 0; j < m; ++j)
      dJ += spec_.sigma_col_jacobian(s.y, j) * (*J) * (sqrt_h_ * xi[j]);
    *J += dJ;
    if (!J->allFinite() || J->norm() > 1e12) throw NumericError("Jacobian blow-up");
  }

  for (int i = 0; i < d; ++i) {
    double yi = s.y[i] + dy[i];
    if (!std::isfinite(yi))
      throw NumericError("blow-up at t=" + std::to_string(s.t));
    long long shift;
    s.y[i] = wrap01(yi, shift);
    s.k[i] += shift;
  }
  s.t += h;
}

void Stepper::step(LiftedState& s, std::mt19937_64& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec xi(spec_.m);
  for (int j = 0; j < spec_.m; ++j) xi[j] = normal(rng);
  step_given(s, xi, nullptr);
}

void Stepper::step_with_jacobian(LiftedState& s, Mat& J, std::mt19937_64& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec xi(spec_.m);
  for (int j = 0; j < spec_.m; ++j) xi[j] = normal(rng);
  step_given(s, xi, &J);
}

LiftedPath simulate_lifted(const ProblemSpec& spec, const Vec& x, const SimConfig& cfg) {
  cfg.validate(spec);
  Stepper stepper(spec, cfg);
  auto rng = path_rng(cfg.seed, 0);
  LiftedPath out;
  out.h = cfg.h;
  auto steps = static_cast<std::size_t>(std::llround(cfg.T / cfg.h));
  out.states.reserve(steps + 1);
  out.states.push_back(make_start(x));
  LiftedState s = out.states.front();
  for (std::size_t i = 0; i < steps; ++i) {
    stepper.step(s, rng);
    out.states.push_back(s);
  }
  return out;
}

FlowPath jacobian_flow(const ProblemSpec& spec, const Vec& x, const SimConfig& cfg) {
  cfg.validate(spec);
  Stepper stepper(spec, cfg);
  auto rng = path_rng(cfg.seed, 0);
  FlowPath out;
  out.path.h = cfg.h;
  auto steps = static_cast<std::size_t>(std::llround(cfg.T / cfg.h));
  out.path.states.push_back(make_start(x));
  out.jacobians.push_back(Mat::Identity(spec.d, spec.d));
  LiftedState s = out.path.states.front();
  Mat J = out.jacobians.front();
  for (std::size_t i = 0; i < steps; ++i) {
    stepper.step_with_jacobian(s, J, rng);
    out.path.states.push_back(s);
    out.jacobians.push_back(J);
  }
  return out;
}

LiftedPath control_ode(const ProblemSpec& spec, const Vec& x, const std::vector<Vec>& u,
                       double control_step, double eps, double h) {
  if (control_step <= 0.0 || h <= 0.0) throw std::invalid_argument("need positive steps");
  double ratio = control_step / h;
  auto per = static_cast<std::size_t>(std::llround(ratio));
  if (std::abs(ratio - static_cast<double>(per)) > 1e-9 || per == 0)
    throw std::invalid_argument("h must divide the control step");

  auto rhs = [&](const Vec& y, const Vec& ctrl) {
    Vec v = spec.drift(y) - spec.stratonovich_correction(y);
    if (eps > 0.0) v += eps * spec.drift_c(y);
    return Vec(v + spec.sigma_at(y) * ctrl);
  };

  LiftedPath out;
  out.h = h;
  out.states.push_back(make_start(x));
  LiftedState s = out.states.front();
  for (const Vec& ctrl : u) {
    for (std::size_t i = 0; i < per; ++i) {
      Vec k1 = rhs(s.y, ctrl);
      Vec k2 = rhs(s.y + 0.5 * h * k1, ctrl);
      Vec k3 = rhs(s.y + 0.5 * h * k2, ctrl);
      Vec k4 = rhs(s.y + h * k3, ctrl);
      Vec dy = (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      for (int c = 0; c < spec.d; ++c) {
        double yi = s.y[c] + dy[c];
        if (!std::isfinite(yi)) throw NumericError("blow-up at t=" + std::to_string(s.t));
        long long shift;
        s.y[c] = wrap01(yi, shift);
        s.k[c] += shift;
      }
      s.t += h;
      out.states.push_back(s);
    }
  }
  return out;
}

// Reachability DP ----------------------------------------------------------

ReachabilityReport reachability_check(const ProblemSpec& spec, const BoolGrid& U_mask,
                                      double t0, double u_max, double eps, int n,
                                      int time_slices) {
  if (U_mask.count() == 0) throw AssumptionError("H2 cannot hold: U empty");
  if (u_max < 0.0) throw std::invalid_argument("u_max must be nonnegative");

  GridShape shape{spec.d, n};
  const std::size_t cells = shape.cell_count();
  const double dt = t0 / time_slices;
  const int substeps = 8;
  const double h = dt / substeps;

  // control alphabet: 0 and +-u_max e_j (drift-only flow when u_max = 0)
  std::vector<Vec> controls;
  controls.push_back(Vec::Zero(spec.m));
  if (u_max > 0.0)
    for (int j = 0; j < spec.m; ++j) {
      Vec e = Vec::Zero(spec.m);
      e[j] = u_max;
      controls.push_back(e);
      controls.push_back(-e);
    }

  // transition table: next cell for (cell, control)
  std::vector<std::vector<std::size_t>> next(controls.size(),
                                             std::vector<std::size_t>(cells));
  parallel_for(cells, [&](std::size_t ci) {
    Vec x0 = shape.center(ci);
    for (std::size_t ui = 0; ui < controls.size(); ++ui) {
      auto p = control_ode(spec, x0, {controls[ui]}, dt, eps, h);
      next[ui][ci] = shape.cell_of(p.back().y);
    }
  });

  // project U mask onto this grid resolution
  auto in_U = [&](std::size_t ci) {
    return U_mask.test(U_mask.shape.cell_of(shape.center(ci)));
  };

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> V(cells);
  for (std::size_t ci = 0; ci < cells; ++ci) V[ci] = in_U(ci) ? 0.0 : inf;
  for (int s = 0; s < time_slices; ++s) {
    std::vector<double> W(cells);
    for (std::size_t ci = 0; ci < cells; ++ci) {
      if (in_U(ci)) {
        W[ci] = 0.0;
        continue;
      }
      double best = inf;
      for (std::size_t ui = 0; ui < controls.size(); ++ui) {
        double cost = controls[ui].squaredNorm() * dt + V[next[ui][ci]];
        best = std::min(best, cost);
      }
      W[ci] = best;
    }
    V = std::move(W);
  }

  ReachabilityReport rep;
  rep.all_reachable = true;
  for (std::size_t ci = 0; ci < cells; ++ci) {
    if (std::isinf(V[ci])) {
      rep.all_reachable = false;
      rep.unreachable_cells.push_back(ci);
    } else {
      rep.K_estimate = std::max(rep.K_estimate, std::sqrt(V[ci]));
    }
  }
  return rep;
}

// H4 -----------------------------------------------------------------------

H4Report h4_estimate(const ProblemSpec& spec, const BoolGrid& V_mask, double t,
                     const SimConfig& cfg, int start_grid) {
  if (cfg.ensemble < 1000) throw std::invalid_argument("h4_estimate needs N >= 1000");
  cfg.validate(spec);

  GridShape starts{spec.d, start_grid};
  const std::size_t n_starts = starts.cell_count();
  auto steps = static_cast<std::size_t>(std::llround(t / cfg.h));
  Stepper stepper(spec, cfg);

  std::vector<double> means(n_starts), errs(n_starts);
  parallel_for(n_starts, [&](std::size_t si) {
    Vec x0 = starts.center(si);
    MeanVar acc;
    for (int p = 0; p < cfg.ensemble; ++p) {
      auto rng = path_rng(cfg.seed ^ (0x517cc1b727220a95ULL * (si + 1)), p);
      LiftedState s = make_start(x0);
      Mat J = Mat::Identity(spec.d, spec.d);
      bool hit = V_mask.test(V_mask.shape.cell_of(s.y));
      std::size_t i = 0;
      for (; i < steps && !hit; ++i) {
        stepper.step_with_jacobian(s, J, rng);
        hit = V_mask.test(V_mask.shape.cell_of(s.y));
      }
      if (hit) {
        acc.add(0.0);  // tau_V < t
      } else {
        acc.add(J.jacobiSvd().singularValues()[0]);  // spectral norm
      }
    }
    means[si] = acc.mean;
    errs[si] = acc.stderr_mean();
  });

  H4Report rep;
  for (std::size_t si = 0; si < n_starts; ++si) {
    if (means[si] >= rep.estimate) {
      rep.estimate = means[si];
      rep.stderr_est = errs[si];
      rep.argmax_cell = si;
    }
  }
  rep.holds = rep.estimate + 2.0 * rep.stderr_est < 1.0;
  return rep;
}

}  // namespace cellhom
