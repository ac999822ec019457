#ifndef CELLHOM_VERIFY_HPP
#define CELLHOM_VERIFY_HPP

#include "cellhom/io.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace cellhom {

// One measured quantity of the acceptance suite.
struct VerifyRow {
  int criterion = 0;
  std::string fixture;
  std::string quantity;
  double expected = 0.0;
  double measured = 0.0;
  double stderr_v = 0.0;
  bool pass = false;
};

struct VerifyReport {
  std::vector<VerifyRow> rows;

  bool criterion_pass(int k) const;
  bool all_pass() const;
};

// Runs the eight acceptance criteria. `full` raises ensembles and horizons
// (slower, tighter); the quick mode is what CI runs.
VerifyReport run_acceptance(bool full = false, std::uint64_t seed = 2026);

// `fixture,quantity,expected,measured,stderr,verdict` rows.
void write_verify_csv(std::ostream& out, const VerifyReport& rep);
json verify_summary_json(const VerifyReport& rep);

}  // namespace cellhom

#endif
