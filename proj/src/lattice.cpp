#include "cellhom/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>

namespace cellhom {

namespace {

// Periodic face neighbors; fills the crossing offset in {-1,0,+1} for the
// dimension stepped over.
struct Neighbor {
  std::size_t cell;
  int dim;
  int offset;  // +1 when wrapping n-1 -> 0, -1 the other way, else 0
};

std::vector<Neighbor> face_neighbors(const GridShape& shape, std::size_t cell) {
  auto idx = shape.unflatten(cell);
  std::vector<Neighbor> out;
  out.reserve(2 * shape.d);
  for (int i = 0; i < shape.d; ++i) {
    for (int dir : {+1, -1}) {
      auto jdx = idx;
      int v = idx[i] + dir;
      int off = 0;
      if (v == shape.n) {
        v = 0;
        off = +1;
      } else if (v < 0) {
        v = shape.n - 1;
        off = -1;
      }
      jdx[i] = v;
      out.push_back({shape.flatten(jdx), i, off});
    }
  }
  return out;
}

void label_components(SupportMask& m) {
  const auto& g = m.grid;
  const std::size_t cells = g.cells.size();
  m.labels.assign(cells, -1);
  m.n_components = 0;
  std::size_t best_size = 0;
  for (std::size_t s = 0; s < cells; ++s) {
    if (!g.test(s) || m.labels[s] >= 0) continue;
    int id = m.n_components++;
    std::size_t size = 0;
    std::queue<std::size_t> q;
    q.push(s);
    m.labels[s] = id;
    while (!q.empty()) {
      std::size_t c = q.front();
      q.pop();
      ++size;
      for (const auto& nb : face_neighbors(g.shape, c)) {
        if (g.test(nb.cell) && m.labels[nb.cell] < 0) {
          m.labels[nb.cell] = id;
          q.push(nb.cell);
        }
      }
    }
    if (size > best_size) {
      best_size = size;
      m.largest_component = id;
    }
  }
  m.multiple_components = m.n_components > 1;
}

}  // namespace

SupportMask extract_support(const OccupationGrid& grid, double theta, int clean_iters) {
  SupportMask m;
  m.grid = BoolGrid(grid.shape);
  m.theta = theta;
  m.clean_iters = clean_iters;
  m.low_samples = grid.total < 100000;

  const std::size_t cells = grid.counts.size();
  const double cutoff = theta / static_cast<double>(cells);
  for (std::size_t i = 0; i < cells; ++i)
    m.grid.set(i, grid.density(i) >= cutoff);

  for (int it = 0; it < clean_iters; ++it) {
    BoolGrid next = m.grid;
    for (std::size_t i = 0; i < cells; ++i) {
      if (!m.grid.test(i)) continue;
      int nb = 0;
      for (const auto& n : face_neighbors(grid.shape, i))
        if (m.grid.test(n.cell)) ++nb;
      if (nb <= 1) next.set(i, false);
    }
    m.grid = next;
  }

  if (m.grid.count() == 0) throw NumericError("no support detected; lower theta");
  label_components(m);
  return m;
}

// Hermite normal form ------------------------------------------------------

IMat hermite_normal_form(const IMat& rows) {
  IMat M = rows;
  const long long nrows = M.rows(), ncols = M.cols();
  long long r = 0;  // current pivot row
  for (long long col = 0; col < ncols && r < nrows; ++col) {
    // gcd elimination: shrink entries below row r in this column to one pivot
    for (;;) {
      long long piv = -1, best = 0;
      for (long long i = r; i < nrows; ++i) {
        long long v = std::llabs(M(i, col));
        if (v != 0 && (piv < 0 || v < best)) {
          piv = i;
          best = v;
        }
      }
      if (piv < 0) break;
      M.row(piv).swap(M.row(r));
      bool done = true;
      for (long long i = r + 1; i < nrows; ++i) {
        if (M(i, col) == 0) continue;
        long long q = M(i, col) / M(r, col);
        M.row(i) -= q * M.row(r);
        if (M(i, col) != 0) done = false;
      }
      if (done) break;
    }
    if (r < nrows && M(r, col) != 0) {
      if (M(r, col) < 0) M.row(r) = -M.row(r);
      // reduce entries above the pivot into [0, pivot)
      for (long long i = 0; i < r; ++i) {
        long long q = M(i, col) / M(r, col);
        if (M(i, col) % M(r, col) < 0) --q;
        M.row(i) -= q * M.row(r);
      }
      ++r;
    }
  }
  return M.topRows(r);
}

// Loop group ---------------------------------------------------------------

PeriodLattice period_lattice(const BoolGrid& mask) {
  SupportMask m;
  m.grid = mask;
  label_components(m);
  return period_lattice(m);
}

PeriodLattice period_lattice(const SupportMask& mask) {
  const GridShape shape = mask.grid.shape;
  const int d = shape.d;
  const std::size_t cells = mask.grid.cells.size();

  PeriodLattice lat;
  std::vector<char> visited(cells, 0);
  std::vector<IVec> phi(cells);  // lift of each visited cell, in grid steps? no: whole torus periods

  // BFS over the selected component; phi tracks the accumulated winding
  // (whole periods) along the tree path from the root.
  std::size_t root = cells;
  for (std::size_t i = 0; i < cells; ++i)
    if (mask.grid.test(i) && mask.labels[i] == mask.largest_component) {
      root = i;
      break;
    }
  if (root == cells) return lat;  // empty mask: trivial group

  std::map<IVec, bool, bool (*)(const IVec&, const IVec&)> seen(
      [](const IVec& a, const IVec& b) {
        return std::lexicographical_compare(a.data(), a.data() + a.size(),
                                            b.data(), b.data() + b.size());
      });

  std::queue<std::size_t> q;
  visited[root] = 1;
  phi[root] = IVec::Zero(d);
  q.push(root);
  while (!q.empty()) {
    std::size_t c = q.front();
    q.pop();
    for (const auto& nb : face_neighbors(shape, c)) {
      if (!mask.grid.test(nb.cell) || mask.labels[nb.cell] != mask.largest_component)
        continue;
      IVec w = IVec::Zero(d);
      w[nb.dim] = nb.offset;
      if (!visited[nb.cell]) {
        visited[nb.cell] = 1;
        phi[nb.cell] = phi[c] + w;
        q.push(nb.cell);
      } else {
        IVec g = phi[c] + w - phi[nb.cell];
        if (g.cwiseAbs().sum() != 0 && !seen.count(g) && !seen.count(IVec(-g))) {
          seen[g] = true;
          lat.generators.push_back(g);
        }
      }
    }
  }

  IMat rows(static_cast<long long>(lat.generators.size()), d);
  for (std::size_t i = 0; i < lat.generators.size(); ++i)
    rows.row(static_cast<long long>(i)) = lat.generators[i].transpose();
  lat.hnf_basis = hermite_normal_form(rows);
  lat.rank = static_cast<int>(lat.hnf_basis.rows());
  lat.span_frame = image_span(lat);
  return lat;
}

Mat image_span(const PeriodLattice& lattice) {
  const int d = static_cast<int>(lattice.hnf_basis.cols());
  const int r = static_cast<int>(lattice.hnf_basis.rows());
  Mat frame(std::max(d, 0), r);
  int k = 0;
  for (int i = 0; i < r; ++i) {
    Vec v = lattice.hnf_basis.row(i).transpose().cast<double>();
    for (int j = 0; j < k; ++j) v -= frame.col(j).dot(v) * frame.col(j);
    double norm = v.norm();
    if (norm > 1e-12) {
      frame.col(k) = v / norm;
      ++k;
    }
  }
  return frame.leftCols(k);
}

bool lattice_contains(const PeriodLattice& lattice, const IVec& g) {
  IVec v = g;
  const IMat& B = lattice.hnf_basis;
  for (long long i = 0; i < B.rows(); ++i) {
    // pivot column of row i
    long long col = 0;
    while (col < B.cols() && B(i, col) == 0) ++col;
    if (col == B.cols()) continue;
    if (v[col] % B(i, col) != 0) return false;
    v -= (v[col] / B(i, col)) * IVec(B.row(i).transpose());
  }
  return v.cwiseAbs().sum() == 0;
}

IVec loop_displacement(const LiftedPath& path, double tol) {
  const LiftedState& a = path.states.front();
  const LiftedState& b = path.states.back();
  for (int i = 0; i < a.y.size(); ++i)
    if (std::abs(wrap_half(b.y[i] - a.y[i])) > tol)
      throw std::invalid_argument("not a loop");
  // snap the endpoint to the start: k_end - k_start plus any residual whole
  // period hiding in y_end - y_start (e.g. y 0.999 vs 0.001 across a wrap)
  IVec g = b.k - a.k;
  for (int i = 0; i < a.y.size(); ++i)
    g[i] += std::llround((b.y[i] - a.y[i]) - wrap_half(b.y[i] - a.y[i]));
  return g;
}

ConsistencyReport consistency_check(const EffectiveCoefficients& A_est,
                                    const PeriodLattice& lattice, double eig_tol) {
  const int d = static_cast<int>(A_est.A.rows());
  ConsistencyReport rep;
  rep.threshold = eig_tol + 2.0 * A_est.stderr_A.maxCoeff();

  Mat P = lattice.span_frame;
  const int r = static_cast<int>(P.cols());

  // orthonormal complement via full QR of the frame
  Mat Q(d, d - r);
  {
    Mat full = Mat::Identity(d, d);
    int k = 0;
    for (int i = 0; i < d && k < d - r; ++i) {
      Vec v = full.col(i);
      for (int j = 0; j < r; ++j) v -= P.col(j).dot(v) * P.col(j);
      for (int j = 0; j < k; ++j) v -= Q.col(j).dot(v) * Q.col(j);
      double norm = v.norm();
      if (norm > 1e-8) Q.col(k++) = v / norm;
    }
  }

  bool ok = true;
  if (r > 0) {
    Eigen::SelfAdjointEigenSolver<Mat> es(Mat(P.transpose() * A_est.A * P));
    rep.span_eigs = es.eigenvalues();
    if (rep.span_eigs.minCoeff() <= rep.threshold) ok = false;
  } else {
    rep.span_eigs = Vec();
  }
  if (d - r > 0) {
    Eigen::SelfAdjointEigenSolver<Mat> es(Mat(Q.transpose() * A_est.A * Q));
    rep.complement_eigs = es.eigenvalues();
    if (rep.complement_eigs.maxCoeff() >= rep.threshold) ok = false;
  } else {
    rep.complement_eigs = Vec();
  }
  rep.holds = ok;

  // principal angles between the numerical range (eigenvectors above the
  // threshold) and span(G)
  Eigen::SelfAdjointEigenSolver<Mat> es(A_est.A);
  std::vector<int> above;
  for (int i = 0; i < d; ++i)
    if (es.eigenvalues()[i] > rep.threshold) above.push_back(i);
  if (above.empty() || r == 0) {
    rep.angle_deg = (above.empty() && r == 0) ? 0.0 : 90.0;
  } else {
    Mat U(d, static_cast<int>(above.size()));
    for (std::size_t i = 0; i < above.size(); ++i) U.col(i) = es.eigenvectors().col(above[i]);
    Eigen::JacobiSVD<Mat> svd(Mat(U.transpose() * P));
    int k = static_cast<int>(std::min(U.cols(), P.cols()));
    double smin = svd.singularValues()[k - 1];
    smin = std::clamp(smin, -1.0, 1.0);
    rep.angle_deg = std::acos(smin) * 180.0 / M_PI;
    if (U.cols() != P.cols()) rep.angle_deg = std::max(rep.angle_deg, 90.0);
  }
  return rep;
}

}  // namespace cellhom
