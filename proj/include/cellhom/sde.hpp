#ifndef CELLHOM_SDE_HPP
#define CELLHOM_SDE_HPP

#include "cellhom/fields.hpp"
#include "cellhom/grid.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace cellhom {

using IVec = Eigen::Matrix<long long, Eigen::Dynamic, 1>;

// Torus position plus integer winding offset; the lift y + k lives in R^d
// and stays continuous along a path.
struct LiftedState {
  Vec y;    // in [0,1)^d
  IVec k;   // winding
  double t = 0.0;

  Vec lift() const { return y + k.cast<double>(); }
};

LiftedState make_start(const Vec& x);

enum class Scheme { euler_maruyama, milstein_diag };

struct SimConfig {
  double h = 1e-3;
  double T = 1.0;
  double eps = 0.0;  // drift is b + eps * c
  std::uint64_t seed = 0;
  Scheme scheme = Scheme::euler_maruyama;
  int ensemble = 1;

  // Enforces h <= T and the step bound h (||b|| + eps ||c||) < 0.1.
  void validate(const ProblemSpec& spec) const;
};

struct LiftedPath {
  double h = 0.0;
  std::vector<LiftedState> states;  // states.front() is the start

  const LiftedState& back() const { return states.back(); }
};

// One-step integrator; shares the Gaussian draws between the state and the
// Jacobian so that both see the same noise stream.
class Stepper {
 public:
  Stepper(const ProblemSpec& spec, const SimConfig& cfg);

  void step(LiftedState& s, std::mt19937_64& rng) const;
  void step_with_jacobian(LiftedState& s, Mat& J, std::mt19937_64& rng) const;
  // Advance with externally supplied standard normals (for antithetic or
  // common-random-number estimators).
  void step_given(LiftedState& s, const Vec& xi, Mat* J = nullptr) const;

 private:
  const ProblemSpec& spec_;
  const SimConfig& cfg_;
  double sqrt_h_;
};

// Euler-Maruyama (or diagonal Milstein) path on the torus with winding.
LiftedPath simulate_lifted(const ProblemSpec& spec, const Vec& x, const SimConfig& cfg);

// State path together with the Jacobian of the stochastic flow.
struct FlowPath {
  LiftedPath path;
  std::vector<Mat> jacobians;
};
FlowPath jacobian_flow(const ProblemSpec& spec, const Vec& x, const SimConfig& cfg);

// Deterministic RK4 integration of the Stratonovich-corrected controlled
// ODE with piecewise-constant controls. u[i] applies on
// [i*control_step, (i+1)*control_step); h must divide control_step.
LiftedPath control_ode(const ProblemSpec& spec, const Vec& x, const std::vector<Vec>& u,
                       double control_step, double eps, double h);

struct ReachabilityReport {
  bool all_reachable = false;
  double K_estimate = 0.0;  // max over cells of minimal discrete L2 control norm
  std::vector<std::size_t> unreachable_cells;
};

// Dynamic programming over (cell, time slice) with piecewise-constant
// controls of magnitude <= u_max; certifies a finite-energy witness for
// reaching U within t0. Evidence for H2, not a proof.
ReachabilityReport reachability_check(const ProblemSpec& spec, const BoolGrid& U_mask,
                                      double t0, double u_max, double eps, int n,
                                      int time_slices = 40);

struct H4Report {
  double estimate = 0.0;   // sup over grid starts of E(|J_t|; tau_V >= t)
  double stderr_est = 0.0; // standard error at the maximizing start
  bool holds = false;      // estimate + 2 stderr < 1
  std::size_t argmax_cell = 0;
};

H4Report h4_estimate(const ProblemSpec& spec, const BoolGrid& V_mask, double t,
                     const SimConfig& cfg, int start_grid = 8);

}  // namespace cellhom

#endif
