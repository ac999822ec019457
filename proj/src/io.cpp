#include "cellhom/io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace cellhom {

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json doc;
  in >> doc;
  return doc;
}

void write_json_file(const std::string& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << doc.dump(2) << "\n";
}

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) ok = true;
    if (!ok) throw std::invalid_argument("unknown key '" + it.key() + "' in " + where);
  }
}

TrigPolynomial::Term term_from_json(const json& t, int d) {
  check_keys(t, {"k", "cos", "sin"}, "trig term");
  TrigPolynomial::Term term;
  auto kv = t.at("k").get<std::vector<int>>();
  if (static_cast<int>(kv.size()) != d)
    throw std::invalid_argument("trig term k has wrong dimension");
  term.k = Eigen::Map<Eigen::VectorXi>(kv.data(), d);
  term.cos_coeff = t.value("cos", 0.0);
  term.sin_coeff = t.value("sin", 0.0);
  return term;
}

}  // namespace

FieldPtr field_from_json(const json& doc, int d, const FieldPtr& alpha) {
  if (doc.is_array()) {
    std::vector<TrigPolynomial::Term> terms;
    for (const auto& t : doc) terms.push_back(term_from_json(t, d));
    return std::make_shared<TrigPolynomial>(d, std::move(terms));
  }
  if (doc.is_number()) return constant_field(d, doc.get<double>());
  if (!doc.is_object()) throw std::invalid_argument("field expression must be array or object");
  std::string type = doc.at("type").get<std::string>();
  if (type == "const") {
    check_keys(doc, {"type", "value"}, "const field");
    return constant_field(d, doc.at("value").get<double>());
  }
  if (type == "trig") {
    check_keys(doc, {"type", "terms"}, "trig field");
    std::vector<TrigPolynomial::Term> terms;
    for (const auto& t : doc.at("terms")) terms.push_back(term_from_json(t, d));
    return std::make_shared<TrigPolynomial>(d, std::move(terms));
  }
  if (type == "alpha") {
    check_keys(doc, {"type"}, "alpha field");
    if (!alpha) throw std::invalid_argument("field references alpha but no bumps declared");
    return alpha;
  }
  if (type == "sum" || type == "product") {
    check_keys(doc, {"type", "of"}, type + " field");
    std::vector<FieldPtr> parts;
    for (const auto& p : doc.at("of")) parts.push_back(field_from_json(p, d, alpha));
    return type == "sum" ? sum_field(std::move(parts)) : product_field(std::move(parts));
  }
  if (type == "scaled") {
    check_keys(doc, {"type", "s", "of"}, "scaled field");
    return scaled_field(field_from_json(doc.at("of"), d, alpha), doc.at("s").get<double>());
  }
  if (type == "sqrt") {
    check_keys(doc, {"type", "of"}, "sqrt field");
    return sqrt_field(field_from_json(doc.at("of"), d, alpha));
  }
  if (type == "reciprocal") {
    check_keys(doc, {"type", "of"}, "reciprocal field");
    return reciprocal_field(field_from_json(doc.at("of"), d, alpha));
  }
  if (type == "one_minus") {
    check_keys(doc, {"type", "of"}, "one_minus field");
    return one_minus_field(field_from_json(doc.at("of"), d, alpha));
  }
  if (type == "partial") {
    check_keys(doc, {"type", "i", "of"}, "partial field");
    return partial_field(field_from_json(doc.at("of"), d, alpha), doc.at("i").get<int>());
  }
  if (type == "smoothstep") {
    check_keys(doc, {"type", "lo", "hi", "of"}, "smoothstep field");
    return std::make_shared<SmoothStepOf>(field_from_json(doc.at("of"), d, alpha),
                                          doc.at("lo").get<double>(),
                                          doc.at("hi").get<double>());
  }
  throw std::invalid_argument("unknown field type '" + type + "'");
}

ProblemSpec spec_from_json(const json& doc) {
  if (doc.contains("example")) {
    check_keys(doc, {"example", "params"}, "problem");
    ExampleParams params;
    if (doc.contains("params")) {
      const json& p = doc.at("params");
      check_keys(p, {"holes", "shear", "strip_width"}, "params");
      if (p.contains("holes"))
        for (const auto& h : p.at("holes")) {
          check_keys(h, {"center", "radius", "width"}, "hole");
          BumpMask::Hole hole;
          auto c = h.at("center").get<std::vector<double>>();
          hole.center = Eigen::Map<Vec>(c.data(), static_cast<int>(c.size()));
          hole.radius = h.at("radius").get<double>();
          hole.width = h.at("width").get<double>();
          params.holes.push_back(hole);
        }
      params.shear = p.value("shear", params.shear);
      params.strip_width = p.value("strip_width", params.strip_width);
    }
    return build_example(doc.at("example").get<std::string>(), params);
  }

  check_keys(doc, {"d", "m", "fields", "bumps", "metadata", "name"}, "problem");
  ProblemSpec spec;
  spec.d = doc.at("d").get<int>();
  spec.m = doc.at("m").get<int>();
  spec.name = doc.value("name", std::string("inline"));

  FieldPtr alpha;
  if (doc.contains("bumps") && !doc.at("bumps").empty()) {
    std::vector<BumpMask::Hole> holes;
    for (const auto& h : doc.at("bumps")) {
      check_keys(h, {"center", "radius", "width"}, "bump");
      BumpMask::Hole hole;
      auto c = h.at("center").get<std::vector<double>>();
      if (static_cast<int>(c.size()) != spec.d)
        throw std::invalid_argument("bump center has wrong dimension");
      hole.center = Eigen::Map<Vec>(c.data(), spec.d);
      hole.radius = h.at("radius").get<double>();
      hole.width = h.at("width").get<double>();
      holes.push_back(hole);
    }
    alpha = std::make_shared<BumpMask>(spec.d, std::move(holes));
  }
  spec.alpha = alpha;

  if (doc.contains("metadata")) {
    const json& meta = doc.at("metadata");
    check_keys(meta, {"p", "H"}, "metadata");
    if (meta.contains("p") && !meta.at("p").is_null())
      spec.density = field_from_json(meta.at("p"), spec.d, alpha);
    if (meta.contains("H") && !meta.at("H").is_null()) {
      for (const auto& row : meta.at("H")) {
        VectorField r;
        for (const auto& e : row) r.push_back(field_from_json(e, spec.d, alpha));
        spec.stream.push_back(std::move(r));
      }
      if (static_cast<int>(spec.stream.size()) != spec.d)
        throw std::invalid_argument("H has wrong shape");
    }
  }

  const json& fields = doc.at("fields");
  check_keys(fields, {"b", "c", "sigma"}, "fields");
  const json& sig = fields.at("sigma");
  if (static_cast<int>(sig.size()) != spec.d)
    throw std::invalid_argument("sigma has wrong number of rows");
  for (const auto& row : sig) {
    if (static_cast<int>(row.size()) != spec.m)
      throw std::invalid_argument("sigma has wrong number of columns");
    VectorField r;
    for (const auto& e : row) r.push_back(field_from_json(e, spec.d, alpha));
    spec.sigma.push_back(std::move(r));
  }

  const json& b = fields.at("b");
  if (b.is_string() && b.get<std::string>() == "from_density") {
    if (!spec.density)
      throw std::invalid_argument("fields.b = from_density requires metadata.p");
    MatrixField H = spec.stream;
    spec.b = drift_from_density(spec.density, diffusion_entries(spec.sigma), H);
  } else {
    if (static_cast<int>(b.size()) != spec.d)
      throw std::invalid_argument("b has wrong dimension");
    for (const auto& e : b) spec.b.push_back(field_from_json(e, spec.d, alpha));
  }

  if (fields.contains("c") && !fields.at("c").is_null() && !fields.at("c").empty()) {
    if (static_cast<int>(fields.at("c").size()) != spec.d)
      throw std::invalid_argument("c has wrong dimension");
    for (const auto& e : fields.at("c")) spec.c.push_back(field_from_json(e, spec.d, alpha));
  }

  spec.validate();
  return spec;
}

namespace {

json normalize_field_json(const json& doc) {
  if (doc.is_array()) {
    json terms = json::array();
    for (const auto& t : doc)
      terms.push_back({{"k", t.at("k")}, {"cos", t.value("cos", 0.0)},
                       {"sin", t.value("sin", 0.0)}});
    return json{{"type", "trig"}, {"terms", terms}};
  }
  if (doc.is_number()) return json{{"type", "const"}, {"value", doc.get<double>()}};
  json out = doc;
  if (out.contains("of")) {
    if (out.at("of").is_array() &&
        (out.value("type", "") == "sum" || out.value("type", "") == "product")) {
      json parts = json::array();
      for (const auto& p : out.at("of")) parts.push_back(normalize_field_json(p));
      out["of"] = parts;
    } else {
      out["of"] = normalize_field_json(out.at("of"));
    }
  }
  if (out.value("type", "") == "trig") return normalize_field_json(out.at("terms"));
  return out;
}

}  // namespace

json normalize_spec_json(const json& doc) {
  // validate by construction, then emit the canonical document
  spec_from_json(doc);
  if (doc.contains("example")) {
    json out{{"example", doc.at("example")}};
    out["params"] = doc.value("params", json::object());
    return out;
  }
  json out{{"d", doc.at("d")}, {"m", doc.at("m")}};
  out["name"] = doc.value("name", "inline");
  out["bumps"] = doc.value("bumps", json::array());
  json meta = doc.value("metadata", json::object());
  if (meta.contains("p") && !meta.at("p").is_null())
    meta["p"] = normalize_field_json(meta.at("p"));
  out["metadata"] = meta;
  json fields;
  const json& f = doc.at("fields");
  if (f.at("b").is_string()) {
    fields["b"] = f.at("b");
  } else {
    fields["b"] = json::array();
    for (const auto& e : f.at("b")) fields["b"].push_back(normalize_field_json(e));
  }
  fields["c"] = json::array();
  if (f.contains("c") && !f.at("c").is_null())
    for (const auto& e : f.at("c")) fields["c"].push_back(normalize_field_json(e));
  fields["sigma"] = json::array();
  for (const auto& row : f.at("sigma")) {
    json r = json::array();
    for (const auto& e : row) r.push_back(normalize_field_json(e));
    fields["sigma"].push_back(r);
  }
  out["fields"] = fields;
  return out;
}

// Grid files ----------------------------------------------------------------

void write_occupation(const std::string& path, const OccupationGrid& grid,
                      std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  json meta{{"n", grid.shape.n}, {"d", grid.shape.d}, {"kind", "occupation"},
            {"seed", seed}, {"counts_total", grid.total}};
  out << meta.dump() << "\n";
  for (std::size_t i = 0; i < grid.counts.size(); ++i)
    if (grid.counts[i]) out << i << "," << grid.counts[i] << "\n";
}

OccupationGrid read_occupation(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty grid file");
  json meta = json::parse(line);
  if (meta.value("kind", "") != "occupation")
    throw std::runtime_error("not an occupation grid file");
  OccupationGrid grid(GridShape{meta.at("d").get<int>(), meta.at("n").get<int>()});
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto comma = line.find(',');
    std::size_t idx = std::stoull(line.substr(0, comma));
    std::uint64_t cnt = std::stoull(line.substr(comma + 1));
    grid.counts.at(idx) = cnt;
    grid.total += cnt;
  }
  if (grid.total != meta.at("counts_total").get<std::uint64_t>())
    throw std::runtime_error("grid file count mismatch");
  return grid;
}

void write_mask(const std::string& path, const BoolGrid& mask) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  json meta{{"n", mask.shape.n}, {"d", mask.shape.d}, {"kind", "mask"},
            {"seed", 0}, {"counts_total", mask.count()}};
  out << meta.dump() << "\n";
  for (std::size_t i = 0; i < mask.cells.size(); ++i)
    if (mask.test(i)) out << i << ",1\n";
}

BoolGrid read_mask(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty mask file");
  json meta = json::parse(line);
  if (meta.value("kind", "") != "mask") throw std::runtime_error("not a mask file");
  BoolGrid mask(GridShape{meta.at("d").get<int>(), meta.at("n").get<int>()});
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto comma = line.find(',');
    mask.set(std::stoull(line.substr(0, comma)), true);
  }
  return mask;
}

void write_path_csv(const std::string& path, const LiftedPath& p) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  const int d = static_cast<int>(p.states.front().y.size());
  out << "t";
  for (int i = 1; i <= d; ++i) out << ",y" << i;
  for (int i = 1; i <= d; ++i) out << ",k" << i;
  out << "\n" << std::setprecision(17);
  for (const auto& s : p.states) {
    out << s.t;
    for (int i = 0; i < d; ++i) out << "," << s.y[i];
    for (int i = 0; i < d; ++i) out << "," << s.k[i];
    out << "\n";
  }
}

LiftedPath read_path_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty path file");
  int d = 0;
  for (char c : line)
    if (c == ',') ++d;
  d /= 2;
  LiftedPath p;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    LiftedState s;
    s.y = Vec(d);
    s.k = IVec(d);
    std::getline(ss, tok, ',');
    s.t = std::stod(tok);
    for (int i = 0; i < d; ++i) {
      std::getline(ss, tok, ',');
      s.y[i] = std::stod(tok);
    }
    for (int i = 0; i < d; ++i) {
      std::getline(ss, tok, ',');
      s.k[i] = std::stoll(tok);
    }
    p.states.push_back(std::move(s));
  }
  if (p.states.size() > 1) p.h = p.states[1].t - p.states[0].t;
  return p;
}

// Result documents ----------------------------------------------------------

namespace {
json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (int j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}
json vec_to_json(const Vec& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}
}  // namespace

json coefficients_to_json(const EffectiveCoefficients& c) {
  return json{{"A", mat_to_json(c.A)},
              {"C", vec_to_json(c.C)},
              {"stderr_A", mat_to_json(c.stderr_A)},
              {"stderr_C", vec_to_json(c.stderr_C)},
              {"provenance",
               {{"samples", c.samples}, {"horizon", c.horizon}, {"seed", c.seed}}}};
}

json lattice_to_json(const PeriodLattice& lat) {
  json gens = json::array();
  for (const auto& g : lat.generators) {
    json v = json::array();
    for (int i = 0; i < g.size(); ++i) v.push_back(g[i]);
    gens.push_back(v);
  }
  json basis = json::array();
  for (int i = 0; i < lat.hnf_basis.rows(); ++i) {
    json r = json::array();
    for (int j = 0; j < lat.hnf_basis.cols(); ++j) r.push_back(lat.hnf_basis(i, j));
    basis.push_back(r);
  }
  return json{{"generators", gens}, {"hnf_basis", basis}, {"rank", lat.rank},
              {"span_frame", mat_to_json(lat.span_frame)}};
}

json consistency_to_json(const ConsistencyReport& rep) {
  return json{{"holds", rep.holds}, {"span_eigs", vec_to_json(rep.span_eigs)},
              {"complement_eigs", vec_to_json(rep.complement_eigs)},
              {"threshold", rep.threshold}, {"angle_deg", rep.angle_deg}};
}

json mc_to_json(const MCResult& r, std::uint64_t seed, double eps) {
  return json{{"value", r.value}, {"stderr", r.stderr_val}, {"n_paths", r.n_paths},
              {"capped_fraction", r.capped_fraction}, {"seed", seed}, {"eps", eps}};
}

}  // namespace cellhom
