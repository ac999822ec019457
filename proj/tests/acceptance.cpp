// Acceptance gate: runs the eight release criteria and prints one verdict
// line per criterion. Exit status is nonzero if any criterion fails.
#include "cellhom/verify.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

int main(int argc, char** argv) {
  bool full = false;
  for (int i = 1; i < argc; ++i)
    if (std::strcmp(argv[i], "--full") == 0) full = true;

  static const char* titles[8] = {
      "1-d oracle equivalence (effective A vs quadrature)",
      "analytic corrector (taylor_shear A and b-hat)",
      "weak convergence of X^eps mean/covariance",
      "rank table and consistency of Im A",
      "assumption checkers (centering, H4, reachability)",
      "elliptic exit problem (closed form and eps trend)",
      "parabolic estimators (agreement and hom limit)",
      "structural invariants (monoid, HNF, seeds, weak order)"};

  auto rep = cellhom::run_acceptance(full);

  int failures = 0;
  for (int k = 1; k <= 8; ++k) {
    bool ok = rep.criterion_pass(k);
    if (!ok) ++failures;
    std::printf("criterion %d: %-55s [%s]\n", k, titles[k - 1], ok ? "PASS" : "FAIL");
  }
  for (const auto& r : rep.rows)
    if (!r.pass)
      std::printf("  fail detail: c%d %s/%s expected %.6g measured %.6g stderr %.3g\n",
                  r.criterion, r.fixture.c_str(), r.quantity.c_str(), r.expected,
                  r.measured, r.stderr_v);
  return failures == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
