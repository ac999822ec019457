#ifndef CELLHOM_ERGODIC_HPP
#define CELLHOM_ERGODIC_HPP

#include "cellhom/fields.hpp"
#include "cellhom/grid.hpp"
#include "cellhom/sde.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace cellhom {

// Mergeable occupation histogram over T^d.
struct OccupationGrid {
  GridShape shape;
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0;
  double burn_in = 0.0;

  explicit OccupationGrid(GridShape s = {}) : shape(s), counts(s.cell_count(), 0) {}

  void add_sample(const Vec& y) {
    ++counts[shape.cell_of(y)];
    ++total;
  }
  double density(std::size_t cell) const {
    return total == 0 ? 0.0 : static_cast<double>(counts[cell]) / static_cast<double>(total);
  }
  void merge(const OccupationGrid& other);

  // mu(f) by cell-center quadrature against the histogram weights.
  double integrate(const std::function<double(const Vec&)>& f) const;
};

// Grid-sampled corrector (b-hat or e-hat) with pathwise gradients and
// periodic multilinear interpolation. n_comp is d for the vector corrector
// and 1 for the scalar one.
struct CorrectorField {
  GridShape shape;
  int n_comp = 0;
  Mat values;                  // cells x n_comp, grid mean removed per component
  std::vector<Mat> gradients;  // per cell: n_comp x d
  Mat value_stderr;            // cells x n_comp
  std::vector<Mat> gradient_stderr;
  bool gradient_flag_ok = true;  // pathwise vs finite-difference cross-check
  double cross_check_fraction = 1.0;

  double value_at(int comp, const Vec& x) const;
  Mat gradient_at(const Vec& x) const;  // n_comp x d, interpolated

  // periodic central differences of the value grid
  Mat fd_gradient(std::size_t cell) const;
};

struct EffectiveCoefficients {
  Mat A;
  Vec C;
  Mat stderr_A;
  Vec stderr_C;
  // provenance
  std::uint64_t samples = 0;
  double horizon = 0.0;
  std::uint64_t seed = 0;
};

// Starting point inside the support: argmax of alpha when the spec carries
// a mask, the torus center otherwise.
Vec default_start(const ProblemSpec& spec);

OccupationGrid estimate_invariant(const ProblemSpec& spec, double eps, const SimConfig& cfg,
                                  int n, double burn_in,
                                  std::optional<Vec> start = std::nullopt);

// sum over cells of b(center) * weight; the point estimate of int b dmu.
Vec centering_residual(const OccupationGrid& grid, const ProblemSpec& spec);

struct CenteringReport {
  Vec residual;
  Vec stderr_res;
  bool passes = false;  // every |component| < 4 stderr
};
// Per-path time averages of b give the residual together with an honest
// ensemble standard error.
CenteringReport centering_check(const ProblemSpec& spec, double eps, const SimConfig& cfg,
                                double burn_in, std::optional<Vec> start = std::nullopt);

struct MixingReport {
  double rate = 0.0;       // fitted decay exponent rho
  double ci_half = 0.0;    // half-width of the slope confidence band
  double suggested_T_corr = 0.0;  // 5 / rate
};

MixingReport mixing_estimate(const ProblemSpec& spec, const FieldPtr& f, const SimConfig& cfg,
                             std::optional<Vec> start = std::nullopt);

// Monte Carlo solution of L u + target = 0 on an n^d grid of cell centers:
// u(x) = int_0^T E target(X_s^x) ds with the pathwise gradient estimator
// int Dtarget(X_s) J_s ds, cross-checked against grid finite differences.
// mu, when given, is used to verify the centering precondition.
CorrectorField corrector(const ProblemSpec& spec, const VectorField& target,
                         const SimConfig& cfg, int n, double T_corr,
                         const OccupationGrid* mu = nullptr, double centering_tol = 0.05);

struct Oracle1D {
  CorrectorField field;   // corrector on the requested grid
  double A = 0.0;         // exact effective coefficient (vector corrector)
  double D_quad = 0.0;    // (1/2) int (e-hat')^2 a dmu   (scalar corrector)
  std::vector<double> density;  // invariant density on the quadrature grid
};

// Deterministic quadrature solution of the 1-d cell problem; requires
// a > 0 everywhere and a centered target.
Oracle1D poisson_oracle_1d(const ProblemSpec& spec, int n = 256,
                           FieldPtr scalar_target = nullptr, int quad_points = 65536);

// A = int (I+grad b-hat) a (I+grad b-hat)* dmu and C = int (I+grad b-hat) c dmu
// (with c replaced by c + a grad e-hat when an e-hat corrector is supplied),
// as ergodic averages along one long trajectory.
EffectiveCoefficients effective_AC(const ProblemSpec& spec, const CorrectorField& corr,
                                   const SimConfig& cfg,
                                   const CorrectorField* corr_e = nullptr,
                                   bool override_gradient_flag = false,
                                   std::optional<Vec> start = std::nullopt);

struct ValueWithError {
  double value = 0.0;
  double stderr_val = 0.0;
};

using SlowFastFunction = std::function<double(const Vec& x, const Vec& y)>;

ValueWithError effective_D(const ProblemSpec& spec, const CorrectorField* corr_e,
                           const SlowFastFunction& f, const Vec& x, const SimConfig& cfg,
                           std::optional<Vec> start = std::nullopt);

// Ensemble of int_0^t f(X^eps_s, X^eps_s / eps) ds for the physical process.
std::vector<double> averaged_functional(const ProblemSpec& spec, const SlowFastFunction& f,
                                        const Vec& x, double eps, double t,
                                        const SimConfig& cfg);

// Endpoint of the physical process X^eps at physical time t (torus
// simulation at step cfg.h in rescaled time).
Vec physical_endpoint(const ProblemSpec& spec, const Vec& x, double eps, double t,
                      const SimConfig& cfg, std::uint64_t path_index);

}  // namespace cellhom

#endif
