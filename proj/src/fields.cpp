#include "cellhom/fields.hpp"

#include <algorithm>
#include <cmath>

namespace cellhom {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

Jet jet_product(const Jet& a, const Jet& b) {
  Jet r;
  r.value = a.value * b.value;
  r.grad = a.grad * b.value + b.grad * a.value;
  r.hess = a.hess * b.value + b.hess * a.value + a.grad * b.grad.transpose() +
           b.grad * a.grad.transpose();
  return r;
}

Jet zero_jet(int d) {
  Jet j;
  j.value = 0.0;
  j.grad = Vec::Zero(d);
  j.hess = Mat::Zero(d, d);
  return j;
}
}  // namespace

Mat ScalarField::hessian(const Vec& x) const {
  // 4th-order central differences of the analytic gradient; the bump-mask
  // profile has large high derivatives, so a 2nd-order stencil is too crude.
  const double h = 1e-4;
  Mat H(dim(), dim());
  Vec xs = x;
  for (int i = 0; i < dim(); ++i) {
    xs[i] = x[i] + 2 * h;
    Vec g = -gradient(xs);
    xs[i] = x[i] + h;
    g += 8.0 * gradient(xs);
    xs[i] = x[i] - h;
    g -= 8.0 * gradient(xs);
    xs[i] = x[i] - 2 * h;
    g += gradient(xs);
    H.col(i) = g / (12.0 * h);
    xs[i] = x[i];
  }
  return 0.5 * (H + H.transpose());
}

// TrigPolynomial -----------------------------------------------------------

TrigPolynomial::TrigPolynomial(int d, std::vector<Term> terms)
    : ScalarField(d), terms_(std::move(terms)) {
  for (const auto& t : terms_)
    if (t.k.size() != d) throw std::invalid_argument("trig term wavevector dim mismatch");
}

double TrigPolynomial::value(const Vec& x) const {
  double v = 0.0;
  for (const auto& t : terms_) {
    double phase = kTwoPi * t.k.cast<double>().dot(x);
    v += t.cos_coeff * std::cos(phase) + t.sin_coeff * std::sin(phase);
  }
  return v;
}

Vec TrigPolynomial::gradient(const Vec& x) const {
  Vec g = Vec::Zero(dim());
  for (const auto& t : terms_) {
    double phase = kTwoPi * t.k.cast<double>().dot(x);
    double dphase = -t.cos_coeff * std::sin(phase) + t.sin_coeff * std::cos(phase);
    g += (kTwoPi * dphase) * t.k.cast<double>();
  }
  return g;
}

Mat TrigPolynomial::hessian(const Vec& x) const {
  Mat H = Mat::Zero(dim(), dim());
  for (const auto& t : terms_) {
    double phase = kTwoPi * t.k.cast<double>().dot(x);
    double d2 = -t.cos_coeff * std::cos(phase) - t.sin_coeff * std::sin(phase);
    Vec kd = t.k.cast<double>();
    H += (kTwoPi * kTwoPi * d2) * (kd * kd.transpose());
  }
  return H;
}

double TrigPolynomial::mean() const {
  double m = 0.0;
  for (const auto& t : terms_)
    if (t.k.isZero()) m += t.cos_coeff;
  return m;
}

// Smoothstep profile -------------------------------------------------------

void smoothstep_jet(double t, double& v, double& dv, double& d2v) {
  if (t <= 0.0) {
    v = dv = d2v = 0.0;
    return;
  }
  if (t >= 1.0) {
    v = 1.0;
    dv = d2v = 0.0;
    return;
  }
  double u = 1.0 - t;
  double A = std::exp(-1.0 / t), B = std::exp(-1.0 / u);
  double Ap = A / (t * t), Bp = -B / (u * u);
  double App = A * (1.0 / (t * t * t * t) - 2.0 / (t * t * t));
  double Bpp = B * (1.0 / (u * u * u * u) - 2.0 / (u * u * u));
  double S = A + B, Sp = Ap + Bp, Spp = App + Bpp;
  v = A / S;
  double N = Ap * B - A * Bp;
  dv = N / (S * S);
  double Np = App * B - A * Bpp;
  d2v = (Np * S - 2.0 * N * Sp) / (S * S * S);
  (void)Spp;
}

// BumpMask -----------------------------------------------------------------

BumpMask::BumpMask(int d, std::vector<Hole> holes) : ScalarField(d), holes_(std::move(holes)) {
  for (const auto& h : holes_) {
    if (h.center.size() != d) throw std::invalid_argument("hole center dim mismatch");
    if (h.radius <= 0.0 || h.width <= 0.0)
      throw std::invalid_argument("hole radius and width must be positive");
  }
}

Jet BumpMask::factor_jet(const Vec& x, const Hole& h) const {
  const int d = dim();
  Vec delta(d);
  for (int i = 0; i < d; ++i) delta[i] = wrap_half(x[i] - h.center[i]);
  double s = delta.norm();
  if (s <= h.radius) return zero_jet(d);
  if (s >= h.radius * (1.0 + h.width)) {
    Jet j = zero_jet(d);
    j.value = 1.0;
    return j;
  }
  double t = (s / h.radius - 1.0) / h.width;
  double v, dv, d2v;
  smoothstep_jet(t, v, dv, d2v);
  double scale = 1.0 / (h.radius * h.width);  // d t / d s
  Vec u = delta / s;
  Mat hess_s = (Mat::Identity(d, d) - u * u.transpose()) / s;
  Jet j;
  j.value = v;
  j.grad = (dv * scale) * u;
  j.hess = (d2v * scale * scale) * (u * u.transpose()) + (dv * scale) * hess_s;
  return j;
}

double BumpMask::value(const Vec& x) const {
  double v = 1.0;
  for (const auto& h : holes_) {
    v *= factor_jet(x, h).value;
    if (v == 0.0) return 0.0;
  }
  return v;
}

Vec BumpMask::gradient(const Vec& x) const {
  Jet acc = zero_jet(dim());
  acc.value = 1.0;
  for (const auto& h : holes_) acc = jet_product(acc, factor_jet(x, h));
  return acc.grad;
}

Mat BumpMask::hessian(const Vec& x) const {
  Jet acc = zero_jet(dim());
  acc.value = 1.0;
  for (const auto& h : holes_) acc = jet_product(acc, factor_jet(x, h));
  return acc.hess;
}

// SmoothStepOf -------------------------------------------------------------

SmoothStepOf::SmoothStepOf(FieldPtr g, double lo, double hi)
    : ScalarField(g->dim()), g_(std::move(g)), lo_(lo), hi_(hi) {
  if (!(hi_ > lo_)) throw std::invalid_argument("smoothstep needs hi > lo");
}

double SmoothStepOf::value(const Vec& x) const {
  double t = (g_->value(x) - lo_) / (hi_ - lo_);
  double v, dv, d2v;
  smoothstep_jet(t, v, dv, d2v);
  return v;
}

Vec SmoothStepOf::gradient(const Vec& x) const {
  double inv = 1.0 / (hi_ - lo_);
  double t = (g_->value(x) - lo_) * inv;
  double v, dv, d2v;
  smoothstep_jet(t, v, dv, d2v);
  if (dv == 0.0) return Vec::Zero(dim());
  return (dv * inv) * g_->gradient(x);
}

Mat SmoothStepOf::hessian(const Vec& x) const {
  double inv = 1.0 / (hi_ - lo_);
  double t = (g_->value(x) - lo_) * inv;
  double v, dv, d2v;
  smoothstep_jet(t, v, dv, d2v);
  if (dv == 0.0 && d2v == 0.0) return Mat::Zero(dim(), dim());
  Vec g = g_->gradient(x);
  return (d2v * inv * inv) * (g * g.transpose()) + (dv * inv) * g_->hessian(x);
}

// Combinators --------------------------------------------------------------

namespace {

class ConstantField : public ScalarField {
 public:
  ConstantField(int d, double v) : ScalarField(d), v_(v) {}
  double value(const Vec&) const override { return v_; }
  Vec gradient(const Vec&) const override { return Vec::Zero(dim()); }
  Mat hessian(const Vec&) const override { return Mat::Zero(dim(), dim()); }

 private:
  double v_;
};

class SumField : public ScalarField {
 public:
  explicit SumField(std::vector<FieldPtr> parts)
      : ScalarField(parts.at(0)->dim()), parts_(std::move(parts)) {}
  double value(const Vec& x) const override {
    double v = 0.0;
    for (const auto& p : parts_) v += p->value(x);
    return v;
  }
  Vec gradient(const Vec& x) const override {
    Vec g = Vec::Zero(dim());
    for (const auto& p : parts_) g += p->gradient(x);
    return g;
  }
  Mat hessian(const Vec& x) const override {
    Mat h = Mat::Zero(dim(), dim());
    for (const auto& p : parts_) h += p->hessian(x);
    return h;
  }

 private:
  std::vector<FieldPtr> parts_;
};

class ProductField : public ScalarField {
 public:
  explicit ProductField(std::vector<FieldPtr> parts)
      : ScalarField(parts.at(0)->dim()), parts_(std::move(parts)) {}
  double value(const Vec& x) const override {
    double v = 1.0;
    for (const auto& p : parts_) v *= p->value(x);
    return v;
  }
  Vec gradient(const Vec& x) const override { return full_jet(x).grad; }
  Mat hessian(const Vec& x) const override { return full_jet(x).hess; }

 private:
  Jet full_jet(const Vec& x) const {
    Jet acc = zero_jet(dim());
    acc.value = 1.0;
    for (const auto& p : parts_) acc = jet_product(acc, p->jet(x));
    return acc;
  }
  std::vector<FieldPtr> parts_;
};

class ScaledField : public ScalarField {
 public:
  ScaledField(FieldPtr f, double s) : ScalarField(f->dim()), f_(std::move(f)), s_(s) {}
  double value(const Vec& x) const override { return s_ * f_->value(x); }
  Vec gradient(const Vec& x) const override { return s_ * f_->gradient(x); }
  Mat hessian(const Vec& x) const override { return s_ * f_->hessian(x); }

 private:
  FieldPtr f_;
  double s_;
};

class SqrtField : public ScalarField {
 public:
  explicit SqrtField(FieldPtr f) : ScalarField(f->dim()), f_(std::move(f)) {}
  double value(const Vec& x) const override { return std::sqrt(f_->value(x)); }
  Vec gradient(const Vec& x) const override {
    return f_->gradient(x) / (2.0 * std::sqrt(f_->value(x)));
  }
  Mat hessian(const Vec& x) const override {
    double v = f_->value(x), r = std::sqrt(v);
    Vec g = f_->gradient(x);
    return f_->hessian(x) / (2.0 * r) - (g * g.transpose()) / (4.0 * v * r);
  }

 private:
  FieldPtr f_;
};

class ReciprocalField : public ScalarField {
 public:
  explicit ReciprocalField(FieldPtr f) : ScalarField(f->dim()), f_(std::move(f)) {}
  double value(const Vec& x) const override { return 1.0 / f_->value(x); }
  Vec gradient(const Vec& x) const override {
    double v = f_->value(x);
    return -f_->gradient(x) / (v * v);
  }
  Mat hessian(const Vec& x) const override {
    double v = f_->value(x);
    Vec g = f_->gradient(x);
    return -f_->hessian(x) / (v * v) + 2.0 * (g * g.transpose()) / (v * v * v);
  }

 private:
  FieldPtr f_;
};

class OneMinusField : public ScalarField {
 public:
  explicit OneMinusField(FieldPtr f) : ScalarField(f->dim()), f_(std::move(f)) {}
  double value(const Vec& x) const override { return 1.0 - f_->value(x); }
  Vec gradient(const Vec& x) const override { return -f_->gradient(x); }
  Mat hessian(const Vec& x) const override { return -f_->hessian(x); }

 private:
  FieldPtr f_;
};

class PartialField : public ScalarField {
 public:
  PartialField(FieldPtr f, int i) : ScalarField(f->dim()), f_(std::move(f)), i_(i) {
    if (i_ < 0 || i_ >= dim()) throw std::invalid_argument("partial index out of range");
  }
  double value(const Vec& x) const override { return f_->gradient(x)[i_]; }
  Vec gradient(const Vec& x) const override { return f_->hessian(x).row(i_); }
  // hessian: finite differences of the analytic gradient (base class).

 private:
  FieldPtr f_;
  int i_;
};

}  // namespace

FieldPtr constant_field(int d, double v) { return std::make_shared<ConstantField>(d, v); }
FieldPtr sum_field(std::vector<FieldPtr> parts) {
  return std::make_shared<SumField>(std::move(parts));
}
FieldPtr product_field(std::vector<FieldPtr> parts) {
  return std::make_shared<ProductField>(std::move(parts));
}
FieldPtr scaled_field(FieldPtr f, double s) {
  return std::make_shared<ScaledField>(std::move(f), s);
}
FieldPtr sqrt_field(FieldPtr f) { return std::make_shared<SqrtField>(std::move(f)); }
FieldPtr reciprocal_field(FieldPtr f) {
  return std::make_shared<ReciprocalField>(std::move(f));
}
FieldPtr one_minus_field(FieldPtr f) {
  return std::make_shared<OneMinusField>(std::move(f));
}
FieldPtr partial_field(FieldPtr f, int i) {
  return std::make_shared<PartialField>(std::move(f), i);
}

MatrixField diffusion_entries(const MatrixField& sigma) {
  int d = static_cast<int>(sigma.size());
  int m = static_cast<int>(sigma.at(0).size());
  MatrixField a(d, VectorField(d));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      std::vector<FieldPtr> prods;
      for (int k = 0; k < m; ++k)
        prods.push_back(product_field({sigma[i][k], sigma[j][k]}));
      a[i][j] = sum_field(std::move(prods));
    }
  return a;
}

// ProblemSpec --------------------------------------------------------------

Vec ProblemSpec::drift(const Vec& y) const {
  Vec v(d);
  for (int i = 0; i < d; ++i) v[i] = b[i]->value(y);
  return v;
}

Mat ProblemSpec::drift_jacobian(const Vec& y) const {
  Mat J(d, d);
  for (int i = 0; i < d; ++i) J.row(i) = b[i]->gradient(y);
  return J;
}

Vec ProblemSpec::drift_c(const Vec& y) const {
  Vec v = Vec::Zero(d);
  if (c.empty()) return v;
  for (int i = 0; i < d; ++i) v[i] = c[i]->value(y);
  return v;
}

Mat ProblemSpec::sigma_at(const Vec& y) const {
  Mat s(d, m);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < m; ++j) s(i, j) = sigma[i][j]->value(y);
  return s;
}

Mat ProblemSpec::a_at(const Vec& y) const {
  Mat s = sigma_at(y);
  return s * s.transpose();
}

Vec ProblemSpec::sigma_col(const Vec& y, int j) const {
  Vec v(d);
  for (int i = 0; i < d; ++i) v[i] = sigma[i][j]->value(y);
  return v;
}

Mat ProblemSpec::sigma_col_jacobian(const Vec& y, int j) const {
  Mat J(d, d);
  for (int i = 0; i < d; ++i) J.row(i) = sigma[i][j]->gradient(y);
  return J;
}

Vec ProblemSpec::stratonovich_correction(const Vec& y) const {
  Vec corr = Vec::Zero(d);
  for (int j = 0; j < m; ++j) {
    Vec col = sigma_col(y, j);
    Mat J = sigma_col_jacobian(y, j);
    corr += 0.5 * (J * col);
  }
  return corr;
}

Jet ProblemSpec::a_jet(int i, int j, const Vec& y) const {
  Jet acc = zero_jet(d);
  for (int k = 0; k < m; ++k)
    acc = [&] {
      Jet p = jet_product(sigma[i][k]->jet(y), sigma[j][k]->jet(y));
      Jet r;
      r.value = acc.value + p.value;
      r.grad = acc.grad + p.grad;
      r.hess = acc.hess + p.hess;
      return r;
    }();
  return acc;
}

double ProblemSpec::sup_norm_b(int samples_per_dim) const {
  double mx = 0.0;
  GridShape g{d, samples_per_dim};
  for (std::size_t idx = 0; idx < g.cell_count(); ++idx)
    mx = std::max(mx, drift(g.center(idx)).norm());
  return mx;
}

double ProblemSpec::sup_norm_c(int samples_per_dim) const {
  if (c.empty()) return 0.0;
  double mx = 0.0;
  GridShape g{d, samples_per_dim};
  for (std::size_t idx = 0; idx < g.cell_count(); ++idx)
    mx = std::max(mx, drift_c(g.center(idx)).norm());
  return mx;
}

void ProblemSpec::validate() const {
  if (d <= 0 || m <= 0) throw std::invalid_argument("spec dimensions must be positive");
  if (static_cast<int>(b.size()) != d) throw std::invalid_argument("drift b has wrong size");
  if (!c.empty() && static_cast<int>(c.size()) != d)
    throw std::invalid_argument("drift c has wrong size");
  if (static_cast<int>(sigma.size()) != d) throw std::invalid_argument("sigma has wrong rows");
  for (const auto& row : sigma)
    if (static_cast<int>(row.size()) != m) throw std::invalid_argument("sigma has wrong cols");
  // spot check: a PSD on a coarse grid
  GridShape g{d, 8};
  for (std::size_t idx = 0; idx < g.cell_count(); ++idx) {
    Mat a = a_at(g.center(idx));
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (a + a.transpose()));
    if (es.eigenvalues().minCoeff() < -1e-12)
      throw NumericError("diffusion matrix a not PSD at sampled point");
  }
}

// eval_jet -----------------------------------------------------------------

Jet eval_jet(const ProblemSpec& spec, const std::string& selector, const Vec& x) {
  if (!x.allFinite()) throw std::invalid_argument("eval point not finite");
  auto index_suffix = [&](std::size_t prefix_len) {
    return std::stoi(selector.substr(prefix_len));
  };
  if (selector == "p") {
    if (!spec.density) throw std::invalid_argument("no such field: p not set");
    return spec.density->jet(x);
  }
  if (selector == "alpha") {
    if (!spec.alpha) throw std::invalid_argument("no such field: alpha not set");
    return spec.alpha->jet(x);
  }
  if (selector.size() >= 2 && selector[0] == 'b') {
    int i = index_suffix(1) - 1;
    if (i < 0 || i >= spec.d) throw std::invalid_argument("no such field: " + selector);
    return spec.b[i]->jet(x);
  }
  if (selector.size() >= 2 && selector[0] == 'c') {
    int i = index_suffix(1) - 1;
    if (spec.c.empty() || i < 0 || i >= spec.d)
      throw std::invalid_argument("no such field: " + selector);
    return spec.c[i]->jet(x);
  }
  if (selector.rfind("sigma", 0) == 0 && selector.size() == 7) {
    int i = selector[5] - '1', j = selector[6] - '1';
    if (i < 0 || i >= spec.d || j < 0 || j >= spec.m)
      throw std::invalid_argument("no such field: " + selector);
    return spec.sigma[i][j]->jet(x);
  }
  if (selector.size() == 3 && selector[0] == 'a') {
    int i = selector[1] - '1', j = selector[2] - '1';
    if (i < 0 || i >= spec.d || j < 0 || j >= spec.d)
      throw std::invalid_argument("no such field: " + selector);
    return spec.a_jet(i, j, x);
  }
  throw std::invalid_argument("no such field: " + selector);
}

// drift_from_density -------------------------------------------------------

namespace {

class DivDriftComponent : public ScalarField {
 public:
  DivDriftComponent(FieldPtr p, VectorField row_a, VectorField row_H)
      : ScalarField(p->dim()),
        p_(std::move(p)),
        row_a_(std::move(row_a)),
        row_H_(std::move(row_H)) {}

  double value(const Vec& x) const override {
    double pv = p_->value(x);
    Vec pg = p_->gradient(x);
    double s = 0.0;
    for (int j = 0; j < dim(); ++j) {
      s += pg[j] * row_a_[j]->value(x) + pv * row_a_[j]->gradient(x)[j];
      if (!row_H_.empty()) s += row_H_[j]->gradient(x)[j];
    }
    return s / (2.0 * pv);
  }

  Vec gradient(const Vec& x) const override {
    double pv = p_->value(x);
    Vec pg = p_->gradient(x);
    Mat ph = p_->hessian(x);
    double s = 0.0;
    Vec ds = Vec::Zero(dim());
    for (int j = 0; j < dim(); ++j) {
      Jet aj = row_a_[j]->jet(x);
      s += pg[j] * aj.value + pv * aj.grad[j];
      ds += ph.col(j) * aj.value + pg[j] * aj.grad + pg * aj.grad[j] + pv * aj.hess.col(j);
      if (!row_H_.empty()) {
        s += row_H_[j]->gradient(x)[j];
        ds += row_H_[j]->hessian(x).col(j);
      }
    }
    return ds / (2.0 * pv) - (s / (2.0 * pv * pv)) * pg;
  }

 private:
  FieldPtr p_;
  VectorField row_a_;
  VectorField row_H_;
};

}  // namespace

VectorField drift_from_density(FieldPtr p, const MatrixField& a, const MatrixField& H,
                               double p_min) {
  const int d = p->dim();
  GridShape g{d, d <= 2 ? 32 : 12};
  for (std::size_t idx = 0; idx < g.cell_count(); ++idx) {
    Vec x = g.center(idx);
    if (p->value(x) < p_min) throw AssumptionError("density not bounded below");
    if (!H.empty()) {
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          if (std::abs(H[i][j]->value(x) + H[j][i]->value(x)) > 1e-12)
            throw AssumptionError("H not antisymmetric");
    }
  }
  VectorField b(d);
  for (int i = 0; i < d; ++i)
    b[i] = std::make_shared<DivDriftComponent>(p, a[i], H.empty() ? VectorField{} : H[i]);
  return b;
}

double apply_generator(const ProblemSpec& spec, const Jet& f, const Vec& x) {
  Mat a = spec.a_at(x);
  return 0.5 * (a.array() * f.hess.array()).sum() + spec.drift(x).dot(f.grad);
}

// Fixtures -----------------------------------------------------------------

namespace {

FieldPtr trig1(int d, int axis, int freq, double cos_coeff, double sin_coeff) {
  Eigen::VectorXi k = Eigen::VectorXi::Zero(d);
  k[axis] = freq;
  return std::make_shared<TrigPolynomial>(
      d, std::vector<TrigPolynomial::Term>{{k, cos_coeff, sin_coeff}});
}

MatrixField scalar_times_identity(FieldPtr f, int d) {
  MatrixField s(d, VectorField(d));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) s[i][j] = (i == j) ? f : constant_field(d, 0.0);
  return s;
}

// b = (1/2) grad(alpha^2), componentwise alpha * d_i alpha.
VectorField half_grad_alpha_sq(const FieldPtr& alpha, int d) {
  VectorField b(d);
  for (int i = 0; i < d; ++i) b[i] = product_field({alpha, partial_field(alpha, i)});
  return b;
}

void check_paper1_placement(const std::vector<BumpMask::Hole>& holes) {
  for (const auto& h : holes) {
    double outer = h.radius * (1.0 + h.width);
    // distance of the hole's x1-extent to the lines {x1 = 0} and {x1 = 1/2}
    double c1 = wrap01(h.center[0]);
    for (double line : {0.0, 0.5, 1.0}) {
      if (std::abs(c1 - line) < outer)
        throw AssumptionError("violates placement condition: hole intersects {x1=0} or {x1=1/2}");
    }
  }
}

}  // namespace

ProblemSpec build_example(const std::string& name, const ExampleParams& params) {
  ProblemSpec spec;
  spec.name = name;

  if (name == "paper1") {
    const int d = 2;
    auto holes = params.holes;
    if (holes.empty()) {
      Vec c1(2), c2(2);
      c1 << 0.25, 0.25;
      c2 << 0.75, 0.75;
      holes = {{c1, 0.15, 0.4}, {c2, 0.15, 0.4}};
    }
    check_paper1_placement(holes);
    auto alpha = std::make_shared<BumpMask>(d, holes);
    spec.d = d;
    spec.m = d;
    spec.alpha = alpha;
    spec.sigma = scalar_times_identity(alpha, d);
    spec.b = half_grad_alpha_sq(alpha, d);
    spec.b[1] = sum_field({spec.b[1], trig1(d, 0, 1, 0.0, 0.5 * params.shear)});
    spec.density = constant_field(d, 1.0);
    spec.stream = MatrixField(d, VectorField(d, constant_field(d, 0.0)));
    spec.stream[0][1] = trig1(d, 0, 1, params.shear / kTwoPi, 0.0);
    spec.stream[1][0] = scaled_field(spec.stream[0][1], -1.0);
  } else if (name == "paper2") {
    const int d = 2;
    // alpha vanishes near the grid lines {x_i = 0}; the strong Hormander
    // region is an interior square that does not touch the cell boundary.
    Eigen::VectorXi k0 = Eigen::VectorXi::Zero(d);
    auto sin_sq = [&](int axis) {
      Eigen::VectorXi k = Eigen::VectorXi::Zero(d);
      k[axis] = 1;
      return std::make_shared<TrigPolynomial>(
          d, std::vector<TrigPolynomial::Term>{{k0, 0.5, 0.0}, {k, -0.5, 0.0}});
    };
    FieldPtr alpha = product_field({std::make_shared<SmoothStepOf>(sin_sq(0), 0.02, 0.2),
                                    std::make_shared<SmoothStepOf>(sin_sq(1), 0.02, 0.2)});
    spec.d = d;
    spec.m = d;
    spec.alpha = alpha;
    spec.sigma = scalar_times_identity(alpha, d);
    spec.b = half_grad_alpha_sq(alpha, d);
    // divergence-free transport (1/2)(cos 2pi x2, cos 2pi x1): carries the
    // zero-noise frame through the noisy interior.
    spec.b[0] = sum_field({spec.b[0], trig1(d, 1, 1, 0.5 * params.shear, 0.0)});
    spec.b[1] = sum_field({spec.b[1], trig1(d, 0, 1, 0.5 * params.shear, 0.0)});
    spec.density = constant_field(d, 1.0);
    spec.stream = MatrixField(d, VectorField(d, constant_field(d, 0.0)));
    spec.stream[0][1] = sum_field({trig1(d, 1, 1, 0.0, params.shear / kTwoPi),
                                   trig1(d, 0, 1, 0.0, -params.shear / kTwoPi)});
    spec.stream[1][0] = scaled_field(spec.stream[0][1], -1.0);
  } else if (name == "paper3") {
    const int d = 2;
    // support is a single disk around (1/2, 1/2)
    std::vector<TrigPolynomial::Term> terms;
    for (int axis = 0; axis < d; ++axis) {
      Eigen::VectorXi k = Eigen::VectorXi::Zero(d);
      k[axis] = 1;
      terms.push_back({k, -1.0, 0.0});  // cos(2 pi (x - 1/2)) = -cos(2 pi x)
    }
    auto g = std::make_shared<TrigPolynomial>(d, terms);
    FieldPtr alpha = std::make_shared<SmoothStepOf>(g, 0.8, 1.4);
    spec.d = d;
    spec.m = d;
    spec.alpha = alpha;
    spec.sigma = scalar_times_identity(alpha, d);
    spec.b = half_grad_alpha_sq(alpha, d);
    spec.density = constant_field(d, 1.0);
  } else if (name == "paper4") {
    const int d = 2;
    // support is a band around the line x2 = 2 x1, winding (1,2)
    Eigen::VectorXi k(2);
    k << 2, -1;
    auto g = std::make_shared<TrigPolynomial>(
        d, std::vector<TrigPolynomial::Term>{{k, 1.0, 0.0}});
    double lo = std::cos(kTwoPi * params.strip_width / 2.0);
    FieldPtr alpha = std::make_shared<SmoothStepOf>(g, lo, std::min(1.0 - 1e-9, lo + 0.5));
    spec.d = d;
    spec.m = d;
    spec.alpha = alpha;
    spec.sigma = scalar_times_identity(alpha, d);
    spec.b = half_grad_alpha_sq(alpha, d);
    spec.density = constant_field(d, 1.0);
  } else if (name == "taylor_shear") {
    const int d = 2;
    spec.d = d;
    spec.m = d;
    spec.sigma = scalar_times_identity(constant_field(d, 1.0), d);
    spec.b = {trig1(d, 1, 1, 0.0, params.shear), constant_field(d, 0.0)};
    spec.density = constant_field(d, 1.0);
  } else if (name == "oned_harmonic") {
    const int d = 1;
    Eigen::VectorXi k(1);
    k << 1;
    Eigen::VectorXi k0 = Eigen::VectorXi::Zero(1);
    auto a = std::make_shared<TrigPolynomial>(
        d, std::vector<TrigPolynomial::Term>{{k0, 2.0, 0.0}, {k, 0.0, 1.0}});
    spec.d = d;
    spec.m = 1;
    spec.sigma = {{sqrt_field(a)}};
    spec.b = {scaled_field(partial_field(a, 0), 0.5)};
    spec.density = constant_field(d, 1.0);
  } else {
    throw std::invalid_argument("unknown example: " + name);
  }

  spec.validate();
  return spec;
}

// Hormander masks ----------------------------------------------------------

namespace {

struct BracketData {
  Vec v;
  Mat J;
  std::vector<Mat> H;  // hessians per component; empty when unavailable
  bool has_J = false;
};

BracketData field_data(const VectorField& f, const Vec& x) {
  const int d = static_cast<int>(f.size());
  BracketData out;
  out.v = Vec(d);
  out.J = Mat(d, d);
  out.H.resize(d);
  for (int i = 0; i < d; ++i) {
    out.v[i] = f[i]->value(x);
    out.J.row(i) = f[i]->gradient(x);
    out.H[i] = f[i]->hessian(x);
  }
  out.has_J = true;
  return out;
}

// [X, Y] = DY X - DX Y; Jacobian available only when both hessians are.
BracketData lie_bracket(const BracketData& X, const BracketData& Y) {
  const int d = static_cast<int>(X.v.size());
  BracketData out;
  out.v = Y.J * X.v - X.J * Y.v;
  if (!X.H.empty() && !Y.H.empty()) {
    out.J = Mat(d, d);
    for (int i = 0; i < d; ++i) {
      // d_k [X,Y]_i = sum_j (d2_kj Y_i X_j - d2_kj X_i Y_j) + (DY DX - DX DY)_ik
      out.J.row(i) = (Y.H[i] * X.v - X.H[i] * Y.v).transpose();
    }
    out.J += Y.J * X.J - X.J * Y.J;
    out.has_J = true;
  }
  return out;
}

bool spans(const std::vector<Vec>& fields, int d, double sv_tol) {
  if (static_cast<int>(fields.size()) < d) return false;
  Mat M(d, static_cast<int>(fields.size()));
  for (std::size_t j = 0; j < fields.size(); ++j) M.col(static_cast<int>(j)) = fields[j];
  Eigen::JacobiSVD<Mat> svd(M);
  if (svd.rank() < d) return false;
  return svd.singularValues()[d - 1] > sv_tol;
}

}  // namespace

HormanderMasks hormander_masks(const ProblemSpec& spec, int n, int depth, double sv_tol) {
  if (n < 8) throw std::invalid_argument("hormander_masks needs n >= 8");
  if (depth < 1) throw std::invalid_argument("hormander_masks needs depth >= 1");
  if (depth > 3)
    throw AssumptionError("bracket depth > 3 undetermined: needs third derivatives");

  GridShape shape{spec.d, n};
  HormanderMasks masks{BoolGrid(shape), BoolGrid(shape)};

  VectorField sigma_cols_b;  // reuse spec drift as vector field
  parallel_for(shape.cell_count(), [&](std::size_t idx) {
    Vec x = shape.center(idx);
    std::vector<BracketData> gen;  // sigma columns
    for (int j = 0; j < spec.m; ++j) {
      VectorField col(spec.d);
      for (int i = 0; i < spec.d; ++i) col[i] = spec.sigma[i][j];
      gen.push_back(field_data(col, x));
    }
    BracketData bd = field_data(spec.b, x);

    auto collect = [&](bool with_drift) {
      std::vector<Vec> vals;
      std::vector<BracketData> level = gen;
      for (const auto& g : gen) vals.push_back(g.v);
      for (int l = 2; l <= depth; ++l) {
        std::vector<BracketData> next;
        for (const auto& f : level) {
          if (!f.has_J) continue;
          for (const auto& g : gen) {
            next.push_back(lie_bracket(f, g));
            vals.push_back(next.back().v);
          }
          if (with_drift) {
            next.push_back(lie_bracket(bd, f));
            vals.push_back(next.back().v);
          }
        }
        level = std::move(next);
      }
      return vals;
    };

    masks.U.set(idx, spans(collect(false), spec.d, sv_tol));
    masks.V.set(idx, masks.U.test(idx) || spans(collect(true), spec.d, sv_tol));
  });
  return masks;
}

}  // namespace cellhom
