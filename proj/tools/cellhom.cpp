// Config-driven driver: builds a problem from JSON, dispatches one task and
// writes the artifacts into the output directory. Exit codes: 0 success,
// 2 assumption-check failure, 1 runtime error.
#include "cellhom/verify.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

using namespace cellhom;
namespace fs = std::filesystem;

namespace {

struct Cli {
  std::string task;
  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
};

void reject_unknown(const json& cfg, std::initializer_list<const char*> allowed) {
  for (auto it = cfg.begin(); it != cfg.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) ok = true;
    if (!ok)
      throw std::invalid_argument("unknown config key '" + it.key() + "'");
  }
}

SimConfig sim_from_json(const json& cfg, std::uint64_t seed) {
  SimConfig sim;
  if (cfg.contains("sim")) {
    const json& s = cfg.at("sim");
    reject_unknown(s, {"h", "T", "eps", "ensemble", "scheme"});
    sim.h = s.value("h", sim.h);
    sim.T = s.value("T", sim.T);
    sim.eps = s.value("eps", sim.eps);
    sim.ensemble = s.value("ensemble", sim.ensemble);
    std::string scheme = s.value("scheme", "euler");
    if (scheme == "milstein")
      sim.scheme = Scheme::milstein_diag;
    else if (scheme != "euler")
      throw std::invalid_argument("unknown scheme '" + scheme + "'");
  }
  sim.seed = seed;
  return sim;
}

Vec vec_from_json(const json& v) {
  auto a = v.get<std::vector<double>>();
  return Eigen::Map<Vec>(a.data(), static_cast<int>(a.size()));
}

Mat mat_from_json(const json& m) {
  auto rows = m.get<std::vector<std::vector<double>>>();
  Mat out(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) out(i, j) = rows[i][j];
  return out;
}

Domain domain_from_json(const json& d) {
  reject_unknown(d, {"kind", "center", "radius", "lo", "hi"});
  std::string kind = d.value("kind", "ball");
  if (kind == "ball")
    return Domain::make_ball(vec_from_json(d.at("center")), d.at("radius").get<double>());
  if (kind == "box")
    return Domain::make_box(vec_from_json(d.at("lo")), vec_from_json(d.at("hi")));
  throw std::invalid_argument("unknown domain kind '" + kind + "'");
}

// Slow boundary/initial data: constant or affine in x.
SlowFunction slow_from_json(const json& g) {
  if (g.is_number()) {
    double v = g.get<double>();
    return [v](const Vec&) { return v; };
  }
  reject_unknown(g, {"const", "linear", "offset"});
  if (g.contains("const")) {
    double v = g.at("const").get<double>();
    return [v](const Vec&) { return v; };
  }
  Vec c = vec_from_json(g.at("linear"));
  double off = g.value("offset", 0.0);
  return [c, off](const Vec& x) { return c.dot(x) + off; };
}

// Potential f(x, y): constant, or a periodic field of the fast variable.
SlowFastFunction potential_from_json(const json& f, int d) {
  if (f.is_number()) {
    double v = f.get<double>();
    return [v](const Vec&, const Vec&) { return v; };
  }
  FieldPtr field = field_from_json(f, d, nullptr);
  return [field](const Vec&, const Vec& y) { return field->value(y); };
}

json resolved_config(const json& cfg, const Cli& cli) {
  json out = cfg;
  out["task"] = cli.task;
  out["seed"] = cli.seed;
  out["threads"] = cli.threads;
  return out;
}

void write_output(const Cli& cli, const std::string& name, json doc, const json& cfg) {
  doc["config"] = resolved_config(cfg, cli);
  write_json_file((fs::path(cli.out_dir) / name).string(), doc);
}

Vec start_point(const json& cfg, const ProblemSpec& spec) {
  if (cfg.contains("x0")) return vec_from_json(cfg.at("x0"));
  return default_start(spec);
}

// 1-d problems get the deterministic quadrature corrector; anywhere else
// the Monte Carlo pathwise corrector is used.
CorrectorField make_corrector(const ProblemSpec& spec, const SimConfig& sim, int n,
                              double T_corr) {
  if (spec.d == 1) return poisson_oracle_1d(spec, n).field;
  return corrector(spec, spec.b, sim, n, T_corr);
}

int run_task(const Cli& cli) {
  json cfg = cli.config_path.empty() ? json::object() : load_json_file(cli.config_path);

  if (cli.task == "verify") {
    reject_unknown(cfg, {"suite"});
    bool full = cfg.value("suite", "quick") == "full";
    auto rep = run_acceptance(full, cli.seed ? cli.seed : 2026);
    std::ofstream csv(fs::path(cli.out_dir) / "verify.csv");
    write_verify_csv(csv, rep);
    write_output(cli, "verify.json", verify_summary_json(rep), cfg);
    write_verify_csv(std::cout, rep);
    return rep.all_pass() ? 0 : 1;
  }

  reject_unknown(cfg, {"problem", "sim", "n", "burn_in", "theta", "clean_iters",
                       "T_corr", "eig_tol", "t0", "u_max", "t", "x0", "domain",
                       "f", "g", "e", "alpha", "T_max", "coefficients", "D_eff"});
  if (!cfg.contains("problem")) throw std::invalid_argument("config needs a problem");
  ProblemSpec spec = spec_from_json(cfg.at("problem"));
  SimConfig sim = sim_from_json(cfg, cli.seed);
  int n = cfg.value("n", 32);
  double burn_in = cfg.value("burn_in", 0.1 * sim.T);

  if (cli.task == "simulate") {
    auto path = simulate_lifted(spec, start_point(cfg, spec), sim);
    write_path_csv((fs::path(cli.out_dir) / "path.csv").string(), path);
    write_output(cli, "simulate.json",
                 json{{"steps", path.states.size() - 1}, {"h", path.h}}, cfg);
    return 0;
  }

  if (cli.task == "invariant") {
    auto occ = estimate_invariant(spec, sim.eps, sim, n, burn_in);
    write_occupation((fs::path(cli.out_dir) / "occupation.csv").string(), occ, sim.seed);
    Vec res = centering_residual(occ, spec);
    json doc{{"samples", occ.total}, {"n", n}};
    for (int i = 0; i < spec.d; ++i) doc["centering_residual"].push_back(res[i]);
    write_output(cli, "invariant.json", doc, cfg);
    return 0;
  }

  if (cli.task == "assumptions") {
    auto masks = hormander_masks(spec, n);
    json doc{{"U_cells", masks.U.count()}, {"V_cells", masks.V.count()},
             {"cells", masks.U.shape.cell_count()}};
    if (masks.U.count() == 0) throw AssumptionError("H2 cannot hold: U empty");

    auto cent = centering_check(spec, sim.eps, sim, burn_in);
    doc["H5_residual"] = json::array();
    for (int i = 0; i < spec.d; ++i) doc["H5_residual"].push_back(cent.residual[i]);
    doc["H5_passes"] = cent.passes;

    auto h4 = h4_estimate(spec, masks.V, cfg.value("t", 2.0), sim);
    doc["H4_estimate"] = h4.estimate;
    doc["H4_stderr"] = h4.stderr_est;
    doc["H4_holds"] = h4.holds;

    auto reach = reachability_check(spec, masks.U, cfg.value("t0", 2.0),
                                    cfg.value("u_max", 1.0), sim.eps, n);
    doc["H2_reachable"] = reach.all_reachable;
    doc["H2_K_estimate"] = reach.K_estimate;

    write_output(cli, "assumptions.json", doc, cfg);
    if (!cent.passes) throw AssumptionError("H5 violated: drift not centered under mu");
    if (!h4.holds) throw AssumptionError("H4 violated: flow contraction estimate >= 1");
    if (!reach.all_reachable)
      throw AssumptionError("H2 violated: U not reachable within t0");
    return 0;
  }

  if (cli.task == "corrector") {
    double T_corr = cfg.value("T_corr", 0.0);
    if (T_corr <= 0.0 && spec.d > 1) {
      auto mix = mixing_estimate(spec, spec.b[0], sim);
      T_corr = mix.suggested_T_corr;
    }
    auto corr = make_corrector(spec, sim, n, T_corr);
    json doc{{"n", n}, {"T_corr", T_corr},
             {"gradient_flag_ok", corr.gradient_flag_ok},
             {"cross_check_fraction", corr.cross_check_fraction}};
    json values = json::array();
    for (std::size_t i = 0; i < corr.shape.cell_count(); ++i) {
      json row{{"cell", i}};
      for (int c = 0; c < corr.n_comp; ++c) row["value"].push_back(corr.values(i, c));
      values.push_back(row);
    }
    doc["values"] = values;
    write_output(cli, "corrector.json", doc, cfg);
    return 0;
  }

  if (cli.task == "effective") {
    double T_corr = cfg.value("T_corr", 1.0);
    auto corr = make_corrector(spec, sim, n, T_corr);
    auto coeffs = effective_AC(spec, corr, sim);
    write_output(cli, "effective.json", coefficients_to_json(coeffs), cfg);
    return 0;
  }

  if (cli.task == "lattice") {
    auto occ = estimate_invariant(spec, sim.eps, sim, n, burn_in);
    auto mask = extract_support(occ, cfg.value("theta", 1e-3), cfg.value("clean_iters", 1));
    write_mask((fs::path(cli.out_dir) / "support.csv").string(), mask.grid);
    auto lat = period_lattice(mask);
    json doc = lattice_to_json(lat);
    doc["n_components"] = mask.n_components;
    doc["low_samples"] = mask.low_samples;
    if (cfg.contains("coefficients")) {
      EffectiveCoefficients est;
      const json& cj = cfg.at("coefficients");
      est.A = mat_from_json(cj.at("A"));
      est.C = cj.contains("C") ? vec_from_json(cj.at("C")) : Vec(Vec::Zero(spec.d));
      est.stderr_A = cj.contains("stderr_A") ? mat_from_json(cj.at("stderr_A"))
                                             : Mat(Mat::Zero(spec.d, spec.d));
      est.stderr_C = Vec::Zero(spec.d);
      auto con = consistency_check(est, lat, cfg.value("eig_tol", 0.02));
      doc["consistency"] = consistency_to_json(con);
    }
    write_output(cli, "lattice.json", doc, cfg);
    return 0;
  }

  if (cli.task == "elliptic") {
    EllipticProblem prob;
    prob.domain = domain_from_json(cfg.at("domain"));
    if (cfg.contains("f")) prob.f = potential_from_json(cfg.at("f"), spec.d);
    prob.g = slow_from_json(cfg.at("g"));
    prob.alpha = cfg.value("alpha", 0.0);
    Vec x = cfg.contains("x0") ? vec_from_json(cfg.at("x0"))
                               : Vec(Vec::Zero(prob.domain.dim()));
    double T_max = cfg.value("T_max", 100.0);
    MCResult r;
    if (sim.eps > 0.0) {
      r = elliptic_eps(prob, spec, sim.eps, x, sim, T_max);
    } else {
      const json& cj = cfg.at("coefficients");
      EffectiveCoefficients coeffs;
      coeffs.A = mat_from_json(cj.at("A"));
      coeffs.C = cj.contains("C") ? vec_from_json(cj.at("C"))
                                  : Vec(Vec::Zero(coeffs.A.rows()));
      SlowFunction d_eff;
      if (cfg.contains("D_eff")) d_eff = slow_from_json(cfg.at("D_eff"));
      r = elliptic_hom(prob, coeffs, d_eff, x, sim, T_max);
    }
    write_output(cli, "elliptic.json", mc_to_json(r, sim.seed, sim.eps), cfg);
    return 0;
  }

  if (cli.task == "parabolic") {
    ParabolicProblem prob;
    prob.g = slow_from_json(cfg.at("g"));
    prob.t = cfg.value("t", 1.0);
    if (cfg.contains("f")) prob.f = potential_from_json(cfg.at("f"), spec.d);
    if (cfg.contains("e")) prob.e = field_from_json(cfg.at("e"), spec.d, nullptr);
    Vec x = cfg.contains("x0") ? vec_from_json(cfg.at("x0")) : Vec(Vec::Zero(spec.d));
    if (sim.eps > 0.0) {
      CorrectorField corr_e;
      const CorrectorField* pe = nullptr;
      if (prob.e) {
        if (spec.d != 1)
          throw std::invalid_argument(
              "fast potential e currently needs the 1-d quadrature corrector");
        corr_e = poisson_oracle_1d(spec, n, prob.e).field;
        pe = &corr_e;
      }
      auto res = parabolic_eps(prob, spec, sim.eps, pe, x, sim);
      json doc{{"raw", mc_to_json(res.raw, sim.seed, sim.eps)},
               {"corrected", mc_to_json(res.corrected, sim.seed, sim.eps)},
               {"agree", res.agree}};
      write_output(cli, "parabolic.json", doc, cfg);
    } else {
      const json& cj = cfg.at("coefficients");
      EffectiveCoefficients coeffs;
      coeffs.A = mat_from_json(cj.at("A"));
      coeffs.C = cj.contains("C") ? vec_from_json(cj.at("C"))
                                  : Vec(Vec::Zero(coeffs.A.rows()));
      SlowFunction d_eff;
      if (cfg.contains("D_eff")) d_eff = slow_from_json(cfg.at("D_eff"));
      auto r = parabolic_hom(prob, coeffs, d_eff, x, sim);
      write_output(cli, "parabolic.json", mc_to_json(r, sim.seed, sim.eps), cfg);
    }
    return 0;
  }

  throw std::invalid_argument("unknown task '" + cli.task + "'");
}

}  // namespace

int main(int argc, char** argv) {
  Cli cli;
  CLI::App app{"periodic homogenization toolkit"};
  app.add_option("task", cli.task,
                 "simulate|invariant|assumptions|corrector|effective|lattice|"
                 "elliptic|parabolic|verify")
      ->required();
  app.add_option("--config", cli.config_path, "JSON run configuration");
  auto* seed_opt = app.add_option("--seed", cli.seed, "master seed override");
  app.add_option("--out", cli.out_dir, "output directory");
  app.add_option("--threads", cli.threads, "worker thread count");
  CLI11_PARSE(app, argc, argv);
  cli.seed_set = seed_opt->count() > 0;

  if (cli.threads > 0)
    setenv("CELLHOM_THREADS", std::to_string(cli.threads).c_str(), 1);

  try {
    fs::create_directories(cli.out_dir);
    return run_task(cli);
  } catch (const AssumptionError& e) {
    std::cerr << "assumption failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
