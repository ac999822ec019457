#ifndef CELLHOM_LATTICE_HPP
#define CELLHOM_LATTICE_HPP

#include "cellhom/ergodic.hpp"
#include "cellhom/grid.hpp"
#include "cellhom/sde.hpp"

#include <vector>

namespace cellhom {

// Thresholded support of a sampled invariant measure, with speckle cleaning
// and connected-component labels under periodic face adjacency.
struct SupportMask {
  BoolGrid grid;
  double theta = 1e-3;     // threshold relative to the uniform density
  int clean_iters = 1;
  std::vector<int> labels;  // component id per cell, -1 outside the mask
  int n_components = 0;
  int largest_component = -1;
  bool low_samples = false;        // grid.total < 1e5
  bool multiple_components = false;
};

SupportMask extract_support(const OccupationGrid& grid, double theta = 1e-3,
                            int clean_iters = 1);

using IMat = Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic>;

// Subgroup of Z^d of winding displacements realizable inside the support:
// generators from non-tree edges of a BFS spanning tree, reduced to a
// canonical Hermite-normal-form basis.
struct PeriodLattice {
  std::vector<IVec> generators;
  IMat hnf_basis;   // rank x d, row-style HNF
  int rank = 0;
  Mat span_frame;   // d x rank, orthonormal columns spanning the basis rows
};

// Row-style Hermite normal form of an integer matrix (rows generate the
// subgroup); returns only the nonzero rows, pivots positive, entries above
// each pivot reduced into [0, pivot).
IMat hermite_normal_form(const IMat& rows);

PeriodLattice period_lattice(const SupportMask& mask);
PeriodLattice period_lattice(const BoolGrid& mask);  // whole mask, largest component

// Orthonormal frame for span_Q(G) by Gram-Schmidt on the HNF rows in order.
Mat image_span(const PeriodLattice& lattice);

// Exact membership test against the HNF basis.
bool lattice_contains(const PeriodLattice& lattice, const IVec& g);

// Winding displacement of a closed torus path. tol is in torus distance.
IVec loop_displacement(const LiftedPath& path, double tol);

struct ConsistencyReport {
  bool holds = false;
  Vec span_eigs;        // eigenvalues of A restricted to span(G)
  Vec complement_eigs;  // eigenvalues on the orthogonal complement
  double threshold = 0.0;  // eig_tol + 2 max stderr
  double angle_deg = 0.0;  // largest principal angle, numerical range vs span(G)
};

// Checks that A is elliptic exactly along span(G): restricted eigenvalues
// above the threshold, complement eigenvalues below it.
ConsistencyReport consistency_check(const EffectiveCoefficients& A_est,
                                    const PeriodLattice& lattice, double eig_tol);

}  // namespace cellhom

#endif
