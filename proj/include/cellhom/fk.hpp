#ifndef CELLHOM_FK_HPP
#define CELLHOM_FK_HPP

#include "cellhom/ergodic.hpp"
#include "cellhom/sde.hpp"

#include <functional>
#include <optional>

namespace cellhom {

// Bounded domain in R^d: ball or axis box. signed_distance < 0 inside.
struct Domain {
  enum class Kind { ball, box };
  Kind kind = Kind::ball;
  Vec center;      // ball
  double radius = 1.0;
  Vec lo, hi;      // box

  static Domain make_ball(const Vec& c, double r);
  static Domain make_box(const Vec& lo, const Vec& hi);

  int dim() const { return kind == Kind::ball ? static_cast<int>(center.size())
                                              : static_cast<int>(lo.size()); }
  bool contains(const Vec& x) const { return signed_distance(x) < 0.0; }
  double signed_distance(const Vec& x) const;
  Vec project(const Vec& x) const;       // nearest boundary point
  Vec boundary_normal(const Vec& x) const;  // outward unit normal near x
};

using SlowFunction = std::function<double(const Vec&)>;

struct EllipticProblem {
  Domain domain;
  SlowFastFunction f;  // potential f(x, y), periodic in y; null means 0
  SlowFunction g;      // boundary data
  double alpha = 0.0;
  double delta = 1e-3;

  // sup f <= (alpha - delta)^+ on a sample of domain x torus points
  void validate(const ProblemSpec* spec = nullptr) const;
};

struct ParabolicProblem {
  FieldPtr e;          // fast field, must be mu-centered; null means 0
  SlowFastFunction f;  // bounded f(x, y); null means 0
  SlowFunction g;      // initial data
  double t = 1.0;
};

struct MCResult {
  double value = 0.0;
  double stderr_val = 0.0;
  int n_paths = 0;
  double capped_fraction = 0.0;
};

struct ExitSamples {
  std::vector<double> tau;
  std::vector<Vec> exit_point;
  double capped_fraction = 0.0;
  int n_paths = 0;
};

// Exit time and exit point of the physical process X^eps (torus simulation
// rescaled by eps) from the domain, with linear interpolation of the
// boundary crossing inside the step.
ExitSamples exit_time_mc(const ProblemSpec& spec, double eps, const Domain& domain,
                         const Vec& x, const SimConfig& cfg, double T_max);

// Same for the limit process x + C t + A^{1/2} W_t. cfg.h is the physical step.
ExitSamples exit_time_mc_limit(const Mat& A, const Vec& C, const Domain& domain,
                               const Vec& x, const SimConfig& cfg, double T_max);

MCResult elliptic_eps(const EllipticProblem& prob, const ProblemSpec& spec, double eps,
                      const Vec& x, const SimConfig& cfg, double T_max);

MCResult elliptic_hom(const EllipticProblem& prob, const EffectiveCoefficients& coeffs,
                      const SlowFunction& D_eff, const Vec& x, const SimConfig& cfg,
                      double T_max);

struct ParabolicResult {
  MCResult corrected;
  MCResult raw;
  bool agree = false;  // |corrected - raw| <= 3 combined stderr
};

// Exponential-functional estimators for the eps parabolic problem: the raw
// weight exp(int (e/eps + f) ds) and the corrected, corrector-compensated
// form that trades the stiff time integral for boundary terms plus a
// stochastic integral. corrector_e may be null only when prob.e is null.
ParabolicResult parabolic_eps(const ParabolicProblem& prob, const ProblemSpec& spec,
                              double eps, const CorrectorField* corrector_e, const Vec& x,
                              const SimConfig& cfg, const OccupationGrid* mu = nullptr,
                              double centering_tol = 0.05);

MCResult parabolic_hom(const ParabolicProblem& prob, const EffectiveCoefficients& coeffs,
                       const SlowFunction& D_eff, const Vec& x, const SimConfig& cfg);

}  // namespace cellhom

#endif
