// Command-line front end: parse geometry and parameters, dispatch to the
// library, persist JSON/CSV results.  Exit codes: 0 ok, 2 validation,
// 3 numerical failure, 4 regime refusal; every failure prints a one-line
// machine-readable error object on stderr.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "conetrace/jsonio.hpp"
#include "conetrace/trace.hpp"

using namespace conetrace;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// CONETRACE_THREADS caps internal parallelism.  Every solver in this build is
// single-threaded, so the cap is recorded in the manifest and otherwise inert,
// but a malformed value is still a validation error.
int thread_cap() {
  const char* env = std::getenv("CONETRACE_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1)
    throw ValidationError("CONETRACE_THREADS must be a positive integer");
  return static_cast<int>(v);
}

void push_param(RunManifest& man, const std::string& key, const std::string& v) {
  man.parameters.emplace_back(key, v);
}
void push_param(RunManifest& man, const std::string& key, double v) {
  man.parameters.emplace_back(key, format_g17(v));
}
void push_param(RunManifest& man, const std::string& key, int v) {
  man.parameters.emplace_back(key, std::to_string(v));
}

RunManifest make_manifest(const std::string& command) {
  RunManifest man;
  man.command = command;
  push_param(man, "CONETRACE_THREADS", thread_cap());
  return man;
}

// Results go to stdout unless --out was given; file outputs get a sidecar
// manifest (the same provenance block plus the wall time) next to them.
void deliver(const std::string& body, const std::string& out_path,
             RunManifest& man, Clock::time_point t0, const char* what_for) {
  man.wall_seconds = seconds_since(t0);
  if (out_path.empty()) {
    std::fputs(body.c_str(), stdout);
    return;
  }
  write_text_file(out_path, body, what_for);
  write_text_file(out_path + ".manifest.json", manifest_json(man), what_for);
}

double parsed_angle(double value, bool degrees) {
  return degrees ? value * pi / 180.0 : value;
}

// --- flag payload parsers -------------------------------------------------

DiracMass parse_dirac(const std::string& text) {
  DiracMass d;
  char trail = '\0';
  if (std::sscanf(text.c_str(), "%lf,%lf,%lf%c", &d.point.x, &d.point.y, &d.mass,
                  &trail) != 3)
    throw ValidationError("--dirac expects \"x,y,mass\", got \"" + text + "\"");
  return d;
}

DensitySpan parse_density(const std::string& text) {
  DensitySpan d;
  char trail = '\0';
  if (std::sscanf(text.c_str(), "%d,%lf,%lf,%lf%c", &d.span.edge, &d.span.s0,
                  &d.span.s1, &d.value, &trail) != 4)
    throw ValidationError("--density expects \"edge,s0,s1,value\", got \"" + text +
                          "\"");
  return d;
}

EdgeSpan parse_edge_span(const std::string& text) {
  EdgeSpan s;
  char trail = '\0';
  if (std::sscanf(text.c_str(), "%d,%lf,%lf%c", &s.edge, &s.s0, &s.s1, &trail) != 3)
    throw ValidationError("--edge expects \"edge,s0,s1\", got \"" + text + "\"");
  return s;
}

BoundarySet parse_boundary_set(const RectilinearPolygon& poly, bool whole,
                               const std::vector<int>& corners,
                               const std::vector<std::string>& edges) {
  if (whole) {
    if (!corners.empty() || !edges.empty())
      throw ValidationError(
          "--whole-boundary cannot be combined with --corner/--edge");
    return whole_boundary(poly);
  }
  BoundarySet set;
  set.corners = corners;
  for (const std::string& e : edges) set.edges.push_back(parse_edge_span(e));
  return set;
}

MeasureDatum parse_datum(const std::vector<std::string>& diracs,
                         const std::vector<std::string>& densities) {
  MeasureDatum nu;
  for (const std::string& d : diracs) nu.diracs.push_back(parse_dirac(d));
  for (const std::string& d : densities) nu.densities.push_back(parse_density(d));
  return nu;
}

// --- subcommand runners ----------------------------------------------------

struct ExponentsArgs {
  int dim = 3;
  double half_angle = 0.0;
  bool degrees = false;
  std::optional<double> q;
  int resolution = 1024;
  bool resolution_given = false;
  std::string json_path;
};

void run_exponents(const ExponentsArgs& a) {
  const auto t0 = Clock::now();
  RunManifest man = make_manifest("conetrace exponents");
  const double angle = parsed_angle(a.half_angle, a.degrees);
  push_param(man, "--dim", a.dim);
  push_param(man, "--half-angle", angle);
  if (a.q) push_param(man, "--q", *a.q);
  push_param(man, "--resolution", a.resolution);
  man.grid_sizes = {{"resolution", a.resolution}};
  if (!a.json_path.empty()) man.outputs = {a.json_path};

  const AxisymmetricOpening opening(a.dim, angle);
  double lambda = 0.0, error = 0.0;
  const std::optional<double> exact = lambda_exact(opening);
  if (exact && !a.resolution_given) {
    lambda = *exact;
  } else {
    const EigenPair ep = lambda_numeric(opening, a.resolution);
    lambda = ep.lambda;
    error = ep.estimated_error;
  }
  const ExponentTriple triple = exponents(lambda, a.dim);
  std::optional<CriticalityClass> cls;
  if (a.q) cls = classify(opening, *a.q, a.resolution);
  const std::string body =
      exponents_json(opening, lambda, error, a.resolution, triple, a.q, cls, &man);
  deliver(body, a.json_path, man, t0, "exponents");
}

struct ProfileArgs {
  int dim = 3;
  double half_angle = 0.0;
  bool degrees = false;
  double q = 0.0;
  int resolution = 512;
  std::string csv_path;
};

void run_profile(const ProfileArgs& a) {
  const auto t0 = Clock::now();
  RunManifest man = make_manifest("conetrace profile");
  const double angle = parsed_angle(a.half_angle, a.degrees);
  push_param(man, "--dim", a.dim);
  push_param(man, "--half-angle", angle);
  push_param(man, "--q", a.q);
  push_param(man, "--resolution", a.resolution);
  man.grid_sizes = {{"resolution", a.resolution}};
  man.outputs = {a.csv_path};

  if (a.resolution < 64)
    throw ValidationError("profile: resolution must be at least 64 cells");
  const AxisymmetricOpening opening(a.dim, angle);
  const SingularProfile profile = solve_profile(opening, a.q, a.resolution);
  push_param(man, "result.amplitude_max", profile.amplitude_max);
  push_param(man, "result.residual_sup", profile.residual_sup);
  push_param(man, "result.newton_iterations", profile.newton.iterations);
  deliver(profile_csv(profile), a.csv_path, man, t0, "profile");
}

struct ConeArgs {
  int dim = 3;
  double half_angle = 0.0;
  bool degrees = false;
  double q = 0.0;
  double mass = 1.0;
  double tmax = 12.0;
  int nt = 600;
  int ntheta = 96;
  std::string out_path;
  std::string in_path;
  std::string json_path;       // classify: optional structured output
  int levels = 8;              // trace
  std::string test = "const";  // trace: const | vertex
  double cap_radius = 0.25;    // trace vertex bump
  int steps = 12;              // removability: epsilon halvings
};

void fill_cone_meta(RunManifest& man, const ConeArgs& a, double angle) {
  push_param(man, "--dim", a.dim);
  push_param(man, "--half-angle", angle);
  push_param(man, "--q", a.q);
  push_param(man, "--tmax", a.tmax);
  push_param(man, "--nt", a.nt);
  push_param(man, "--ntheta", a.ntheta);
  man.grid_sizes = {{"nt", a.nt}, {"ntheta", a.ntheta}};
}

void run_cone_solve(const ConeArgs& a) {
  const auto t0 = Clock::now();
  RunManifest man = make_manifest("conetrace cone solve");
  const double angle = parsed_angle(a.half_angle, a.degrees);
  fill_cone_meta(man, a, angle);
  push_param(man, "--mass", a.mass);
  if (!a.out_path.empty()) man.outputs = {a.out_path};

  const AxisymmetricOpening opening(a.dim, angle);
  const TensorGrid2D grid = make_cone_grid(opening, a.tmax, a.nt, a.ntheta);
  const ConeSolution sol = solve_weak(opening, a.q, a.mass, grid);
  deliver(cone_solution_json(sol, &man), a.out_path, man, t0, "cone solve");
}

void run_cone_strong(const ConeArgs& a) {
  const auto t0 = Clock::now();
  RunManifest man = make_manifest("conetrace cone strong");
  const double angle = parsed_angle(a.half_angle, a.degrees);
  fill_cone_meta(man, a, angle);
  if (!a.out_path.empty()) man.outputs = {a.out_path};

  const AxisymmetricOpening opening(a.dim, angle);
  const TensorGrid2D grid = make_cone_grid(opening, a.tmax, a.nt, a.ntheta);
  const ConeSolution sol = solve_strong(opening, a.q, grid);
  deliver(cone_solution_json(sol, &man), a.out_path, man, t0, "cone strong");
}

void run_cone_classify(const ConeArgs& a) {
  const auto t0 = Clock::now();
  RunManifest man = make_manifest("conetrace cone classify");
  push_param(man, "--in", a.in_path);
  if (!a.json_path.empty()) man.outputs = {a.json_path};

  const ConeSolution sol = read_cone_solution(a.in_path);
  man.grid_sizes = {{"nt", sol.grid.t.n_cells}, {"ntheta", sol.grid.theta.n_cells}};
  const Classification cls = classify_solution(sol);
  switch (cls.kind) {
  case SolutionClass::Bounded: std::printf("bounded\n"); break;
  case SolutionClass::WeakSingularity:
    std::printf("weak, k ≈ %.6g\n", *cls.k);
    break;
  case SolutionClass::StrongSingularity: std::printf("strong\n"); break;
  }
  if (a.json_path.empty()) return;
  JsonWriter w;
  w.begin_object();
  const char* kind = cls.kind == SolutionClass::Bounded ? "bounded"
                     : cls.kind == SolutionClass::WeakSingularity ? "weak"
                                                                  : "strong";
  w.field("class", kind);
  if (cls.k)
    w.field("k", *cls.k);
  else
    w.field_null("k");
  w.key("fit");
  w.begin_object();
  w.field("fitted_amplitude", cls.fit.fitted_amplitude);
  w.field("window_lo", cls.fit.window_lo);
  w.field("window_hi", cls.fit.window_hi);
  w.field("drift", cls.fit.drift);
  w.end_object();
  embed_manifest(w, &man);
  w.end_object();
  man.wall_seconds = seconds_since(t0);
  write_text_file(a.json_path, w.str() + "\n", "cone classify");
  write_text_file(a.json_path + ".manifest.json", manifest_json(man),
                  "cone classify");
}

void run_cone_trace(const ConeArgs& a) {
  const auto t0 = Clock::now();
  RunManifest man = make_manifest("conetrace cone trace");
  push_param(man, "--in", a.in_path);
  push_param(man, "--levels", a.levels);
  push_param(man, "--test", a.test);
  if (!a.out_path.empty()) man.outputs = {a.out_path};

  const ConeSolution sol = read_cone_solution(a.in_path);
  man.grid_sizes = {{"nt", sol.grid.t.n_cells},
                    {"ntheta", sol.grid.theta.n_cells},
                    {"levels", a.levels}};
  if (a.levels < 3)
    throw ValidationError("cone trace: need at least 3 levels to extrapolate");

  Exhaustion exhaustion;
  const double lo = sol.T / 2.0, hi = sol.T - 1.0;
  if (!(hi > lo))
    throw ValidationError("cone trace: solution too shallow for the level ladder");
  for (int i = 0; i < a.levels; ++i)
    exhaustion.levels.push_back(lo + (hi - lo) * i / (a.levels - 1));

  SectionFunction Z;
  if (a.test == "const")
    Z = [](double, double) { return 1.0; };
  else if (a.test == "vertex")
    Z = cap_bump({0.0, 0.0}, a.cap_radius);
  else
    throw ValidationError("cone trace: --test must be const or vertex");

  const TraceSequence seq = dynamic_trace(sol, Z, exhaustion, a.test);
  push_param(man, "result.limit_estimate", seq.limit_estimate);
  push_param(man, "result.diverging", seq.diverging ? "true" : "false");

  std::ostringstream csv;
  write_trace_csv(csv, exhaustion, seq);
  deliver(csv.str(), a.out_path, man, t0, "cone trace");
}

void run_cone_removability(const ConeArgs& a) {
  const auto t0 = Clock::now();
  RunManifest man = make_manifest("conetrace cone removability");
  const double angle = parsed_angle(a.half_angle, a.degrees);
  fill_cone_meta(man, a, angle);
  push_param(man, "--mass", a.mass);
  push_param(man, "--steps", a.steps);
  if (!a.out_path.empty()) man.outputs = {a.out_path};

  if (a.steps < 1) throw ValidationError("removability: --steps must be positive");
  const AxisymmetricOpening opening(a.dim, angle);
  const TensorGrid2D grid = make_cone_grid(opening, a.tmax, a.nt, a.ntheta);
  std::vector<double> schedule;
  for (int j = 0; j < a.steps; ++j) schedule.push_back(std::pow(2.0, -(j + 3)));
  const std::vector<double> probes =
      dirac_approximation_limit(opening, a.q, a.mass, schedule, grid);

  const std::size_t m = probes.size();
  if (m >= 3) {
    const double lo = std::min({probes[m - 3], probes[m - 2], probes[m - 1]});
    const double hi = std::max({probes[m - 3], probes[m - 2], probes[m - 1]});
    push_param(man, "result.last_three_spread",
               (hi - lo) / std::max(1e-300, std::abs(hi)));
  }
  push_param(man, "result.final_probe", probes.back());
  deliver(probe_table_csv(schedule, probes), a.out_path, man, t0, "removability");
}

struct PolygonArgs {
  std::string geometry;
  std::optional<double> q;
  int cells = 128;
  bool whole_boundary = false;
  std::vector<int> corners;
  std::vector<std::string> edges;
  std::vector<std::string> diracs;
  std::vector<std::string> densities;
  double tolerance = 1e-6;
  std::string out_path;
};

void fill_polygon_meta(RunManifest& man, const PolygonArgs& a) {
  push_param(man, "--geometry", a.geometry);
  if (a.q) push_param(man, "--q", *a.q);
  push_param(man, "--cells", a.cells);
  for (int c : a.corners) push_param(man, "--corner", c);
  for (const std::string& e : a.edges) push_param(man, "--edge", e);
  for (const std::string& d : a.diracs) push_param(man, "--dirac", d);
  for (const std::string& d : a.densities) push_param(man, "--density", d);
  if (a.whole_boundary) push_param(man, "--whole-boundary", "true");
  if (!a.out_path.empty()) man.outputs = {a.out_path};
}

double require_q(const PolygonArgs& a) {
  if (!a.q) throw ValidationError("polygon: --q is required for this subcommand");
  return *a.q;
}

void run_polygon_report(const PolygonArgs& a) {
  const auto t0 = Clock::now();
  RunManifest man = make_manifest("conetrace polygon report");
  fill_polygon_meta(man, a);

  const RectilinearPolygon poly = read_polygon_geometry(a.geometry);
  CriticalityReport rep;
  rep.features = feature_exponents(poly);
  rep.q_stars.push_back({"whole boundary", q_star(poly, whole_boundary(poly))});
  for (int c = 0; c < poly.size(); ++c) {
    BoundarySet single;
    single.corners = {c};
    rep.q_stars.push_back({"corner " + std::to_string(c), q_star(poly, single)});
  }
  if (a.q) {
    man.grid_sizes = {{"solver_cells", a.cells}};
    for (const BoundaryFeature& f : rep.features) {
      const AdmissibilityReport mass =
          admissibility_mass(poly, f.location, *a.q, {64, 256, 1024}, a.cells);
      rep.masses.push_back(
          {mass.feature, mass.q, mass.levels, mass.masses, mass.trend});
    }
  }
  deliver(criticality_report_json(poly, rep, &man), a.out_path, man, t0,
          "polygon report");
}

void run_polygon_solve(const PolygonArgs& a) {
  const auto t0 = Clock::now();
  RunManifest man = make_manifest("conetrace polygon solve");
  fill_polygon_meta(man, a);
  man.grid_sizes = {{"cells", a.cells}};

  const RectilinearPolygon poly = read_polygon_geometry(a.geometry);
  const MeasureDatum nu = parse_datum(a.diracs, a.densities);
  if (nu.empty())
    throw ValidationError("polygon solve: needs at least one --dirac or --density");
  const PolygonSolution sol = solve_measure_bvp(poly, require_q(a), nu, a.cells);
  deliver(polygon_solution_json(sol, &man), a.out_path, man, t0, "polygon solve");
}

void run_polygon_maximal(const PolygonArgs& a) {
  const auto t0 = Clock::now();
  RunManifest man = make_manifest("conetrace polygon maximal");
  fill_polygon_meta(man, a);
  man.grid_sizes = {{"cells", a.cells}};

  const RectilinearPolygon poly = read_polygon_geometry(a.geometry);
  const BoundarySet F =
      parse_boundary_set(poly, a.whole_boundary, a.corners, a.edges);
  const PolygonSolution sol = maximal_solution(poly, require_q(a), F, a.cells);
  deliver(polygon_solution_json(sol, &man), a.out_path, man, t0, "polygon maximal");
}

void run_polygon_sandwich(const PolygonArgs& a) {
  const auto t0 = Clock::now();
  RunManifest man = make_manifest("conetrace polygon sandwich");
  fill_polygon_meta(man, a);
  push_param(man, "--tolerance", a.tolerance);
  man.grid_sizes = {{"cells", a.cells}};

  const RectilinearPolygon poly = read_polygon_geometry(a.geometry);
  const MeasureDatum nu = parse_datum(a.diracs, a.densities);
  const BoundarySet F =
      parse_boundary_set(poly, a.whole_boundary, a.corners, a.edges);
  const SandwichReport rep =
      sandwich_check(poly, require_q(a), nu, F, a.cells, {}, a.tolerance);
  deliver(sandwich_report_json(rep, &man), a.out_path, man, t0, "polygon sandwich");
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"critical exponents, singular profiles, and boundary traces for "
               "-Delta u + |u|^{q-1} u = 0 in cones and rectilinear polygons"};
  app.require_subcommand(1);

  ExponentsArgs ex;
  CLI::App* exponents_cmd =
      app.add_subcommand("exponents", "spectral data of a cone opening");
  exponents_cmd->add_option("--dim", ex.dim, "ambient dimension N >= 2")->required();
  exponents_cmd->add_option("--half-angle", ex.half_angle, "opening half-angle")
      ->required();
  exponents_cmd->add_flag("--degrees", ex.degrees, "half-angle is in degrees");
  double ex_q = 0.0;
  CLI::Option* ex_q_opt = exponents_cmd->add_option(
      "--q", ex_q, "absorption exponent to classify against");
  CLI::Option* ex_res_opt = exponents_cmd->add_option(
      "--resolution", ex.resolution, "eigenvalue grid cells (default 1024)");
  exponents_cmd->add_option("--json", ex.json_path, "write the result here");

  ProfileArgs pr;
  CLI::App* profile_cmd =
      app.add_subcommand("profile", "singular nonlinear angular profile");
  profile_cmd->add_option("--dim", pr.dim, "ambient dimension N >= 2")->required();
  profile_cmd->add_option("--half-angle", pr.half_angle, "opening half-angle")
      ->required();
  profile_cmd->add_flag("--degrees", pr.degrees, "half-angle is in degrees");
  profile_cmd->add_option("--q", pr.q, "absorption exponent")->required();
  profile_cmd->add_option("--resolution", pr.resolution,
                          "angular cells (default 512, minimum 64)");
  profile_cmd->add_option("--csv", pr.csv_path, "write theta,omega here")
      ->required();

  ConeArgs cn;
  CLI::App* cone_cmd = app.add_subcommand("cone", "truncated-cone boundary value runs");
  cone_cmd->require_subcommand(1);
  auto add_cone_geometry = [&cn](CLI::App* sub) {
    sub->add_option("--dim", cn.dim, "ambient dimension N >= 2")->required();
    sub->add_option("--half-angle", cn.half_angle, "opening half-angle")->required();
    sub->add_flag("--degrees", cn.degrees, "half-angle is in degrees");
    sub->add_option("--q", cn.q, "absorption exponent")->required();
    sub->add_option("--tmax", cn.tmax, "log-cylinder depth T (default 12)");
    sub->add_option("--nt", cn.nt, "axial cells (default 600)");
    sub->add_option("--ntheta", cn.ntheta, "angular cells (default 96)");
  };
  CLI::App* cone_solve_cmd =
      cone_cmd->add_subcommand("solve", "weak singularity with vertex mass k");
  add_cone_geometry(cone_solve_cmd);
  cone_solve_cmd->add_option("--mass", cn.mass, "vertex Dirac mass k (default 1)");
  cone_solve_cmd->add_option("--out", cn.out_path, "write the solution here");
  CLI::App* cone_strong_cmd =
      cone_cmd->add_subcommand("strong", "maximal vertex singularity");
  add_cone_geometry(cone_strong_cmd);
  cone_strong_cmd->add_option("--out", cn.out_path, "write the solution here");
  CLI::App* cone_classify_cmd =
      cone_cmd->add_subcommand("classify", "verdict for a stored solution");
  cone_classify_cmd->add_option("--in", cn.in_path, "stored solution")->required();
  cone_classify_cmd->add_option("--json", cn.json_path,
                                "also write the structured verdict here");
  CLI::App* cone_trace_cmd =
      cone_cmd->add_subcommand("trace", "harmonic-measure trace ladder");
  cone_trace_cmd->add_option("--in", cn.in_path, "stored solution")->required();
  cone_trace_cmd->add_option("--levels", cn.levels, "ladder size (default 8)");
  cone_trace_cmd->add_option("--test", cn.test, "test function: const | vertex");
  cone_trace_cmd->add_option("--cap-radius", cn.cap_radius,
                             "vertex bump radius (default 0.25)");
  cone_trace_cmd->add_option("--out", cn.out_path, "write the CSV here");
  CLI::App* cone_remov_cmd = cone_cmd->add_subcommand(
      "removability", "vertex Dirac approximation probe table");
  add_cone_geometry(cone_remov_cmd);
  cone_remov_cmd->add_option("--mass", cn.mass, "band mass k (default 1)");
  cone_remov_cmd->add_option("--steps", cn.steps,
                             "epsilon halvings from 1/8 (default 12)");
  cone_remov_cmd->add_option("--out", cn.out_path, "write the CSV here");

  PolygonArgs pg;
  CLI::App* polygon_cmd =
      app.add_subcommand("polygon", "rectilinear polygon boundary value runs");
  polygon_cmd->require_subcommand(1);
  auto add_polygon_common = [&pg](CLI::App* sub, bool with_solver) {
    sub->add_option("--geometry", pg.geometry, "polygon geometry JSON")->required();
    sub->add_option("--q", pg.q, "absorption exponent");
    if (with_solver)
      sub->add_option("--cells", pg.cells, "grid cells along the longer side "
                                           "(default 128)");
    sub->add_option("--out", pg.out_path, "write the result here");
  };
  CLI::App* poly_report_cmd = polygon_cmd->add_subcommand(
      "report", "feature exponents, q*, and admissibility masses");
  add_polygon_common(poly_report_cmd, true);
  CLI::App* poly_solve_cmd =
      polygon_cmd->add_subcommand("solve", "boundary value problem with measure data");
  add_polygon_common(poly_solve_cmd, true);
  poly_solve_cmd->add_option("--dirac", pg.diracs, "point mass \"x,y,mass\"");
  poly_solve_cmd->add_option("--density", pg.densities,
                             "edge density \"edge,s0,s1,value\"");
  CLI::App* poly_maximal_cmd =
      polygon_cmd->add_subcommand("maximal", "maximal solution blowing up on F");
  add_polygon_common(poly_maximal_cmd, true);
  poly_maximal_cmd->add_option("--corner", pg.corners, "corner index in F");
  poly_maximal_cmd->add_option("--edge", pg.edges, "edge span \"edge,s0,s1\" in F");
  poly_maximal_cmd->add_flag("--whole-boundary", pg.whole_boundary,
                             "F is the whole boundary");
  CLI::App* poly_sandwich_cmd = polygon_cmd->add_subcommand(
      "sandwich", "combined trace (nu, F) with the order checks");
  add_polygon_common(poly_sandwich_cmd, true);
  poly_sandwich_cmd->add_option("--dirac", pg.diracs, "point mass \"x,y,mass\"");
  poly_sandwich_cmd->add_option("--density", pg.densities,
                                "edge density \"edge,s0,s1,value\"");
  poly_sandwich_cmd->add_option("--corner", pg.corners, "corner index in F");
  poly_sandwich_cmd->add_option("--edge", pg.edges,
                                "edge span \"edge,s0,s1\" in F");
  poly_sandwich_cmd->add_flag("--whole-boundary", pg.whole_boundary,
                              "F is the whole boundary");
  poly_sandwich_cmd->add_option("--tolerance", pg.tolerance,
                                "order-check tolerance (default 1e-6)");

  try {
    app.parse(argc, argv);
    ex.q = ex_q_opt->count() ? std::optional<double>(ex_q) : std::nullopt;
    ex.resolution_given = ex_res_opt->count() > 0;

    if (*exponents_cmd) run_exponents(ex);
    if (*profile_cmd) run_profile(pr);
    if (*cone_cmd) {
      if (*cone_solve_cmd) run_cone_solve(cn);
      if (*cone_strong_cmd) run_cone_strong(cn);
      if (*cone_classify_cmd) run_cone_classify(cn);
      if (*cone_trace_cmd) run_cone_trace(cn);
      if (*cone_remov_cmd) run_cone_removability(cn);
    }
    if (*polygon_cmd) {
      if (*poly_report_cmd) run_polygon_report(pg);
      if (*poly_solve_cmd) run_polygon_solve(pg);
      if (*poly_maximal_cmd) run_polygon_maximal(pg);
      if (*poly_sandwich_cmd) run_polygon_sandwich(pg);
    }
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fputs(error_json(ValidationError(e.what())).c_str(), stderr);
    return 2;
  } catch (const Error& e) {
    std::fputs(error_json(e).c_str(), stderr);
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fputs(error_json(NoConvergence(std::string("internal: ") + e.what())).c_str(),
               stderr);
    return 3;
  }
  return 0;
}
