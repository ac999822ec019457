#ifndef CELLHOM_FIELDS_HPP
#define CELLHOM_FIELDS_HPP

#include "cellhom/common.hpp"
#include "cellhom/grid.hpp"

#include <memory>
#include <string>
#include <vector>

namespace cellhom {

// Value together with first two derivatives at a point.
struct Jet {
  double value = 0.0;
  Vec grad;
  Mat hess;
};

// Smooth periodic scalar field on T^d. Evaluation is pure; all fields are
// immutable after construction and safe to share across threads.
class ScalarField {
 public:
  explicit ScalarField(int d) : d_(d) {}
  virtual ~ScalarField() = default;

  int dim() const { return d_; }
  virtual double value(const Vec& x) const = 0;
  virtual Vec gradient(const Vec& x) const = 0;
  // Default: central differences of the analytic gradient. Overridden where
  // a closed form is available.
  virtual Mat hessian(const Vec& x) const;

  Jet jet(const Vec& x) const { return Jet{value(x), gradient(x), hessian(x)}; }

 private:
  int d_;
};

using FieldPtr = std::shared_ptr<const ScalarField>;
using VectorField = std::vector<FieldPtr>;          // size d
using MatrixField = std::vector<VectorField>;       // rows of FieldPtr

// f(x) = sum_k [ c_k cos(2 pi k.x) + s_k sin(2 pi k.x) ], k in Z^d.
class TrigPolynomial : public ScalarField {
 public:
  struct Term {
    Eigen::VectorXi k;
    double cos_coeff = 0.0;
    double sin_coeff = 0.0;
  };

  TrigPolynomial(int d, std::vector<Term> terms);

  double value(const Vec& x) const override;
  Vec gradient(const Vec& x) const override;
  Mat hessian(const Vec& x) const override;

  const std::vector<Term>& terms() const { return terms_; }
  // Exact integral over the torus (the k=0 cosine coefficient).
  double mean() const;

 private:
  std::vector<Term> terms_;
};

// C-infinity profile q(t)/(q(t)+q(1-t)) with q(t)=exp(-1/t); flat 0 for
// t<=0 and flat 1 for t>=1. Returns value and first two derivatives in t.
void smoothstep_jet(double t, double& v, double& dv, double& d2v);

// alpha(x) = prod_i psi(dist_torus(x, c_i) / r_i) with psi(s) the profile
// above evaluated at t = (s-1)/w_i. Exactly 0 within distance r_i of a
// center, exactly 1 beyond r_i (1 + w_i) of every center.
class BumpMask : public ScalarField {
 public:
  struct Hole {
    Vec center;
    double radius = 0.0;
    double width = 0.0;
  };

  BumpMask(int d, std::vector<Hole> holes);

  double value(const Vec& x) const override;
  Vec gradient(const Vec& x) const override;
  Mat hessian(const Vec& x) const override;

  const std::vector<Hole>& holes() const { return holes_; }

 private:
  Jet factor_jet(const Vec& x, const Hole& h) const;
  std::vector<Hole> holes_;
};

// Smoothed indicator of {g > lo}: psi((g(x)-lo)/(hi-lo)); exactly 0 where
// g <= lo and exactly 1 where g >= hi.
class SmoothStepOf : public ScalarField {
 public:
  SmoothStepOf(FieldPtr g, double lo, double hi);
  double value(const Vec& x) const override;
  Vec gradient(const Vec& x) const override;
  Mat hessian(const Vec& x) const override;

 private:
  FieldPtr g_;
  double lo_, hi_;
};

// Combinators --------------------------------------------------------------

FieldPtr constant_field(int d, double v);
FieldPtr sum_field(std::vector<FieldPtr> parts);
FieldPtr product_field(std::vector<FieldPtr> parts);
FieldPtr scaled_field(FieldPtr f, double s);
FieldPtr sqrt_field(FieldPtr f);         // requires f > 0 where evaluated
FieldPtr reciprocal_field(FieldPtr f);   // requires f != 0 where evaluated
FieldPtr one_minus_field(FieldPtr f);
// d_i f as a field; its own hessian falls back to finite differences.
FieldPtr partial_field(FieldPtr f, int i);

// a_ij = sum_k sigma_ik sigma_jk as explicit fields.
MatrixField diffusion_entries(const MatrixField& sigma);

// Problem data -------------------------------------------------------------

struct ProblemSpec {
  int d = 0;
  int m = 0;
  VectorField b;       // size d
  VectorField c;       // size d (empty means 0)
  MatrixField sigma;   // d x m
  FieldPtr density;    // optional target invariant density p
  MatrixField stream;  // optional antisymmetric H (d x d)
  FieldPtr alpha;      // optional mask used in the construction
  std::string name;

  // Fast evaluators used by the integrators.
  Vec drift(const Vec& y) const;
  Mat drift_jacobian(const Vec& y) const;
  Vec drift_c(const Vec& y) const;              // zero if c empty
  Mat sigma_at(const Vec& y) const;             // d x m
  Mat a_at(const Vec& y) const;                 // sigma sigma^T
  Vec sigma_col(const Vec& y, int j) const;
  Mat sigma_col_jacobian(const Vec& y, int j) const;
  // Stratonovich correction (1/2) (d_k sigma_ij) sigma_kj.
  Vec stratonovich_correction(const Vec& y) const;

  Jet a_jet(int i, int j, const Vec& y) const;

  // Sampled sup-norm bounds used for step-size checks.
  double sup_norm_b(int samples_per_dim = 16) const;
  double sup_norm_c(int samples_per_dim = 16) const;

  void validate() const;  // dimension and PSD spot checks
};

// Operations ---------------------------------------------------------------

// Selectors: "b1".."bd", "c1".."cd", "sigma11".., "a11".., "p", "alpha".
Jet eval_jet(const ProblemSpec& spec, const std::string& selector, const Vec& x);

// b_i = (1/2p) sum_j d_j (p a_ij + H_ij). Throws if p is not bounded below
// by p_min on a verification grid or if H is not antisymmetric.
VectorField drift_from_density(FieldPtr p, const MatrixField& a, const MatrixField& H,
                               double p_min = 1e-8);

// (L f)(x) = (1/2) a_ij d2_ij f + b_i d_i f from the jet of f at x.
double apply_generator(const ProblemSpec& spec, const Jet& f, const Vec& x);

struct ExampleParams {
  std::vector<BumpMask::Hole> holes;  // paper1
  double shear = 1.0;                 // paper1/paper2 drift amplitude
  double strip_width = 0.25;          // paper4 threshold band
};

// Fixtures: paper1..paper4 reproduce the qualitative constructions of the
// examples section (expected rank of A: 2, 2, 0, 1); taylor_shear and
// oned_harmonic are analytic test beds.
ProblemSpec build_example(const std::string& name, const ExampleParams& params = {});

// Boolean grids of cells whose center satisfies the strong (U) resp.
// parabolic (V) Hormander condition, testing Lie brackets up to depth L.
// Depth > 3 would need third derivatives of the coefficients.
struct HormanderMasks {
  BoolGrid U;
  BoolGrid V;
};
HormanderMasks hormander_masks(const ProblemSpec& spec, int n, int depth = 3,
                               double sv_tol = 1e-8);

}  // namespace cellhom

#endif
