#ifndef CELLHOM_IO_HPP
#define CELLHOM_IO_HPP

#include "cellhom/ergodic.hpp"
#include "cellhom/fields.hpp"
#include "cellhom/fk.hpp"
#include "cellhom/lattice.hpp"
#include "cellhom/sde.hpp"

#include <json.hpp>

#include <string>

namespace cellhom {

using json = nlohmann::json;

json load_json_file(const std::string& path);
void write_json_file(const std::string& path, const json& doc);

// Field expressions ---------------------------------------------------------
// A field is either a bare array of trig terms [{"k":[..],"cos":..,"sin":..}]
// or an object {"type": ...}:
//   const(value), trig(terms), alpha, sum(of[]), product(of[]),
//   scaled(s, of), sqrt(of), reciprocal(of), one_minus(of),
//   partial(i, of), smoothstep(lo, hi, of)
// "alpha" refers to the bump mask declared under "bumps".
FieldPtr field_from_json(const json& doc, int d, const FieldPtr& alpha);

// Full problem document {d, m, fields:{b,c,sigma}, bumps, metadata:{p,H}}
// or {"example": name, "params": {...}}. Unknown keys are rejected.
ProblemSpec spec_from_json(const json& doc);

// Validated copy with defaults filled in; idempotent.
json normalize_spec_json(const json& doc);

// Grid files ----------------------------------------------------------------
// One JSON metadata line {n, d, kind, seed, counts_total} followed by CSV
// rows `cell_index,value`.
void write_occupation(const std::string& path, const OccupationGrid& grid,
                      std::uint64_t seed);
OccupationGrid read_occupation(const std::string& path);

void write_mask(const std::string& path, const BoolGrid& mask);
BoolGrid read_mask(const std::string& path);

// Path files: CSV header `t,y1..yd,k1..kd`.
void write_path_csv(const std::string& path, const LiftedPath& p);
LiftedPath read_path_csv(const std::string& path);

// Result documents ----------------------------------------------------------
json coefficients_to_json(const EffectiveCoefficients& c);
json lattice_to_json(const PeriodLattice& lat);
json consistency_to_json(const ConsistencyReport& rep);
json mc_to_json(const MCResult& r, std::uint64_t seed, double eps);

}  // namespace cellhom

#endif
