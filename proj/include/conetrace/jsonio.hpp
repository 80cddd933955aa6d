#pragma once

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "conetrace/cone.hpp"
#include "conetrace/errors.hpp"
#include "conetrace/polygon.hpp"
#include "conetrace/polygon_bvp.hpp"
#include "conetrace/profile.hpp"
#include "conetrace/version.hpp"

namespace conetrace {

// Every floating-point number in a persisted document goes through this one
// formatter, so identical runs produce byte-identical files.
inline std::string format_g17(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// Append-only JSON writer with a fixed, caller-controlled field order and
// compact output.  Non-finite numbers become null: they never appear in a
// converged result, and null is at least parseable.
class JsonWriter {
public:
  void begin_object() { open('{'); }
  void end_object() { close('}'); }
  void begin_array() { open('['); }
  void end_array() { close(']'); }

  void key(std::string_view k) {
    separate();
    quote(k);
    out_ += ':';
    pending_value_ = true;
  }

  void value(double x) {
    separate();
    out_ += std::isfinite(x) ? format_g17(x) : "null";
  }
  void value(int x) { value(static_cast<long long>(x)); }
  void value(long long x) {
    separate();
    out_ += std::to_string(x);
  }
  void value(bool b) {
    separate();
    out_ += b ? "true" : "false";
  }
  void value(std::string_view s) {
    separate();
    quote(s);
  }
  void value(const char* s) { value(std::string_view(s)); }
  void null() {
    separate();
    out_ += "null";
  }

  template <class T> void field(std::string_view k, T v) {
    key(k);
    value(v);
  }
  void field_null(std::string_view k) {
    key(k);
    null();
  }
  void field(std::string_view k, const std::vector<double>& v) {
    key(k);
    begin_array();
    for (double x : v) value(x);
    end_array();
  }

  const std::string& str() const { return out_; }

private:
  std::string out_;
  std::vector<bool> first_{true};
  bool pending_value_ = false;

  void separate() {
    if (pending_value_) {
      pending_value_ = false;
      return;
    }
    if (!first_.back()) out_ += ',';
    first_.back() = false;
  }
  void open(char c) {
    separate();
    out_ += c;
    first_.push_back(true);
  }
  void close(char c) {
    out_ += c;
    first_.pop_back();
  }
  void quote(std::string_view s) {
    out_ += '"';
    for (char c : s) {
      switch (c) {
      case '"': out_ += "\\\""; break;
      case '\\': out_ += "\\\\"; break;
      case '\n': out_ += "\\n"; break;
      case '\t': out_ += "\\t"; break;
      case '\r': out_ += "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char esc[8];
          std::snprintf(esc, sizeof esc, "\\u%04x", c);
          out_ += esc;
        } else {
          out_ += c;
        }
      }
    }
    out_ += '"';
  }
};

// Provenance block attached to every persisted result.  The copy embedded in
// a result document omits the wall time, so reruns of the same invocation
// stay byte-identical; the sidecar written next to file outputs carries it.
struct RunManifest {
  std::string command;
  std::vector<std::pair<std::string, std::string>> parameters;
  std::string version = tool_version;
  std::vector<std::pair<std::string, long long>> grid_sizes;
  double wall_seconds = 0.0;
  std::vector<std::string> outputs;
};

inline void write_manifest_object(JsonWriter& w, const RunManifest& m,
                                  bool with_timing) {
  w.begin_object();
  w.field("command", m.command);
  w.key("parameters");
  w.begin_object();
  for (const auto& [k, v] : m.parameters) w.field(k, v);
  w.end_object();
  w.field("tool_version", m.version);
  w.key("grid_sizes");
  w.begin_object();
  for (const auto& [k, v] : m.grid_sizes) w.field(k, v);
  w.end_object();
  if (with_timing) w.field("wall_seconds", m.wall_seconds);
  w.key("outputs");
  w.begin_array();
  for (const std::string& p : m.outputs) w.value(p);
  w.end_array();
  w.end_object();
}

inline std::string manifest_json(const RunManifest& m) {
  JsonWriter w;
  w.begin_object();
  w.key("manifest");
  write_manifest_object(w, m, true);
  w.end_object();
  return w.str() + "\n";
}

inline void embed_manifest(JsonWriter& w, const RunManifest* m) {
  if (!m) return;
  w.key("manifest");
  write_manifest_object(w, *m, false);
}

// Machine-readable error object for stderr, one line.
inline std::string error_json(const Error& e) {
  JsonWriter w;
  w.begin_object();
  w.key("error");
  w.begin_object();
  const char* kind = e.kind() == ErrorKind::Validation  ? "validation"
                     : e.kind() == ErrorKind::Numerical ? "numerical"
                                                        : "refusal";
  w.field("kind", kind);
  w.field("code", e.code());
  w.field("exit_code", e.exit_code());
  w.field("message", std::string_view(e.what()));
  w.end_object();
  w.end_object();
  return w.str() + "\n";
}

inline void write_newton_object(JsonWriter& w, const NewtonReport& rep) {
  w.begin_object();
  w.field("iterations", rep.iterations);
  w.field("final_residual_sup", rep.final_residual_sup);
  w.field("damping_events", rep.damping_events);
  w.field("converged", rep.converged);
  w.end_object();
}

// Cone solution document: the meta block plus the transformed samples.  The
// derived spectral block (exponents, drift, kernel normalizations) is fully
// determined by the meta block and is rebuilt on read.
inline std::string cone_solution_json(const ConeSolution& sol,
                                      const RunManifest* manifest = nullptr) {
  JsonWriter w;
  w.begin_object();
  w.key("meta");
  w.begin_object();
  w.field("dim", sol.opening.dim);
  w.field("half_angle", sol.opening.half_angle);
  w.field("q", sol.q);
  if (sol.k)
    w.field("k", *sol.k);
  else
    w.field_null("k");
  w.field("T", sol.T);
  w.field("nt", sol.grid.t.n_cells);
  w.field("ntheta", sol.grid.theta.n_cells);
  w.field("gamma", sol.gamma);
  w.end_object();
  w.field("v", sol.v);
  w.key("newton");
  write_newton_object(w, sol.newton);
  embed_manifest(w, manifest);
  w.end_object();
  return w.str() + "\n";
}

namespace detail {

inline nlohmann::json parse_json_file(const std::string& path,
                                      const char* what_for) {
  std::ifstream in(path);
  if (!in)
    throw ValidationError(std::string(what_for) + ": cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string(what_for) + ": '" + path +
                          "' is not valid JSON (" + e.what() + ")");
  }
}

template <class T>
T json_field(const nlohmann::json& j, const char* key, const char* what_for) {
  if (!j.contains(key))
    throw ValidationError(std::string(what_for) + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(std::string(what_for) + ": field '" + key +
                          "' has the wrong type");
  }
}

} // namespace detail

// Rebuilds a full ConeSolution from a persisted document: the stored samples
// are taken as-is and the spectral block is recomputed from the meta fields,
// exactly as the solver would have produced it.
inline ConeSolution read_cone_solution(const std::string& path) {
  const nlohmann::json j = detail::parse_json_file(path, "cone solution");
  const nlohmann::json meta = detail::json_field<nlohmann::json>(j, "meta", "cone solution");
  const int dim = detail::json_field<int>(meta, "dim", "cone solution meta");
  const double half_angle =
      detail::json_field<double>(meta, "half_angle", "cone solution meta");
  const double q = detail::json_field<double>(meta, "q", "cone solution meta");
  const double T = detail::json_field<double>(meta, "T", "cone solution meta");
  const int nt = detail::json_field<int>(meta, "nt", "cone solution meta");
  const int ntheta = detail::json_field<int>(meta, "ntheta", "cone solution meta");

  const AxisymmetricOpening opening(dim, half_angle);
  if (!(q > 1.0)) throw ValidationError("cone solution: meta q must exceed 1");
  const TensorGrid2D grid = make_cone_grid(opening, T, nt, ntheta);
  detail::CylinderSystem sys = detail::make_cylinder_system(opening, q, grid);

  ConeSolution sol;
  sol.opening = opening;
  sol.q = q;
  sol.grid = grid;
  sol.v = detail::json_field<std::vector<double>>(j, "v", "cone solution");
  if (sol.v.size() != grid.size())
    throw ValidationError("cone solution: sample count does not match nt * ntheta");
  if (meta.contains("k") && !meta.at("k").is_null())
    sol.k = detail::json_field<double>(meta, "k", "cone solution meta");
  sol.T = T;
  sol.exponents = sys.expo;
  sol.lambda_theta = sys.lambda_h;
  sol.c = sys.c;
  sol.mu = sys.mu;
  sol.gamma_hat = sys.gamma_hat;
  sol.gamma = detail::analytic_gamma(opening);
  sol.phi = sys.phi;
  if (j.contains("newton")) {
    const nlohmann::json rep = j.at("newton");
    sol.newton.iterations = detail::json_field<int>(rep, "iterations", "newton");
    sol.newton.final_residual_sup =
        detail::json_field<double>(rep, "final_residual_sup", "newton");
    sol.newton.damping_events =
        detail::json_field<int>(rep, "damping_events", "newton");
    sol.newton.converged = detail::json_field<bool>(rep, "converged", "newton");
  }
  return sol;
}

inline std::string polygon_geometry_json(const RectilinearPolygon& poly) {
  JsonWriter w;
  w.begin_object();
  w.key("vertices");
  w.begin_array();
  for (const Point2& v : poly.vertices) {
    w.begin_array();
    w.value(v.x);
    w.value(v.y);
    w.end_array();
  }
  w.end_array();
  w.end_object();
  return w.str() + "\n";
}

inline RectilinearPolygon read_polygon_geometry(const std::string& path) {
  const nlohmann::json j = detail::parse_json_file(path, "polygon geometry");
  const auto rows = detail::json_field<std::vector<std::vector<double>>>(
      j, "vertices", "polygon geometry");
  RectilinearPolygon poly;
  for (const auto& r : rows) {
    if (r.size() != 2)
      throw ValidationError("polygon geometry: each vertex must be a pair [x, y]");
    poly.vertices.push_back({r[0], r[1]});
  }
  poly.validate();
  return poly;
}

inline void write_boundary_set_object(JsonWriter& w, const BoundarySet& set) {
  w.begin_object();
  w.key("corners");
  w.begin_array();
  for (int c : set.corners) w.value(c);
  w.end_array();
  w.key("edges");
  w.begin_array();
  for (const EdgeSpan& s : set.edges) {
    w.begin_array();
    w.value(s.edge);
    w.value(s.s0);
    w.value(s.s1);
    w.end_array();
  }
  w.end_array();
  w.end_object();
}

inline void write_feature_object(JsonWriter& w, const BoundaryFeature& f) {
  w.begin_object();
  w.field("kind", f.kind == FeatureKind::Corner ? "corner" : "edge");
  w.field("index", f.index);
  w.key("location");
  w.begin_array();
  w.value(f.location.x);
  w.value(f.location.y);
  w.end_array();
  w.field("interior_angle", f.interior_angle);
  w.field("q_c", f.q_c);
  w.end_object();
}

inline std::string criticality_report_json(const RectilinearPolygon& poly,
                                           const CriticalityReport& rep,
                                           const RunManifest* manifest = nullptr) {
  JsonWriter w;
  w.begin_object();
  w.key("geometry");
  w.begin_object();
  w.key("vertices");
  w.begin_array();
  for (const Point2& v : poly.vertices) {
    w.begin_array();
    w.value(v.x);
    w.value(v.y);
    w.end_array();
  }
  w.end_array();
  w.end_object();
  w.key("features");
  w.begin_array();
  for (const BoundaryFeature& f : rep.features) write_feature_object(w, f);
  w.end_array();
  w.key("q_stars");
  w.begin_array();
  for (const QStarEntry& e : rep.q_stars) {
    w.begin_object();
    w.field("label", e.label);
    w.field("value", e.value);
    w.end_object();
  }
  w.end_array();
  w.key("masses");
  w.begin_array();
  for (const MassTrend& m : rep.masses) {
    w.begin_object();
    w.key("feature");
    w.begin_array();
    w.value(m.feature.x);
    w.value(m.feature.y);
    w.end_array();
    w.field("q", m.q);
    w.key("levels");
    w.begin_array();
    for (int l : m.levels) w.value(l);
    w.end_array();
    w.field("masses", m.masses);
    w.field("trend", m.trend);
    w.end_object();
  }
  w.end_array();
  embed_manifest(w, manifest);
  w.end_object();
  return w.str() + "\n";
}

// Polygon solution document: geometry, grid frame, boundary data, and the
// full row-major field (exterior nodes carry zero).
inline std::string polygon_solution_json(const PolygonSolution& sol,
                                         const RunManifest* manifest = nullptr) {
  const PolygonGrid& grid = sol.grid;
  JsonWriter w;
  w.begin_object();
  w.key("meta");
  w.begin_object();
  w.field("q", sol.q);
  w.field("h", grid.h);
  w.key("origin");
  w.begin_array();
  w.value(grid.origin.x);
  w.value(grid.origin.y);
  w.end_array();
  w.field("columns", grid.columns());
  w.field("rows", grid.rows());
  const Point2 x0 = grid.node(grid.basepoint);
  w.key("basepoint");
  w.begin_array();
  w.value(x0.x);
  w.value(x0.y);
  w.end_array();
  w.end_object();
  w.key("geometry");
  w.begin_object();
  w.key("vertices");
  w.begin_array();
  for (const Point2& v : grid.poly.vertices) {
    w.begin_array();
    w.value(v.x);
    w.value(v.y);
    w.end_array();
  }
  w.end_array();
  w.end_object();
  w.key("datum");
  w.begin_object();
  w.key("diracs");
  w.begin_array();
  for (const DiracMass& d : sol.datum.diracs) {
    w.begin_array();
    w.value(d.point.x);
    w.value(d.point.y);
    w.value(d.mass);
    w.end_array();
  }
  w.end_array();
  w.key("densities");
  w.begin_array();
  for (const DensitySpan& d : sol.datum.densities) {
    w.begin_array();
    w.value(d.span.edge);
    w.value(d.span.s0);
    w.value(d.span.s1);
    w.value(d.value);
    w.end_array();
  }
  w.end_array();
  w.end_object();
  w.key("blow_up");
  write_boundary_set_object(w, sol.blow_up);
  w.field("u", sol.u);
  w.key("newton");
  write_newton_object(w, sol.newton);
  embed_manifest(w, manifest);
  w.end_object();
  return w.str() + "\n";
}

inline std::string sandwich_report_json(const SandwichReport& rep,
                                        const RunManifest* manifest = nullptr) {
  JsonWriter w;
  w.begin_object();
  w.key("sandwich");
  w.begin_object();
  w.field("worst_lower", rep.worst_lower);
  w.field("worst_upper", rep.worst_upper);
  w.field("tolerance", rep.tolerance);
  const int x0 = rep.combined.grid.basepoint;
  w.key("basepoint_values");
  w.begin_object();
  w.field("measure_part", rep.measure_part.u[x0]);
  w.field("maximal_part", rep.maximal_part.u[x0]);
  w.field("combined", rep.combined.u[x0]);
  w.end_object();
  w.end_object();
  w.key("combined");
  // the combined solution is the primary payload; the two comparison parts
  // are reproducible from its datum and blow-up set
  w.begin_object();
  w.field("q", rep.combined.q);
  w.field("u", rep.combined.u);
  w.key("newton");
  write_newton_object(w, rep.combined.newton);
  w.end_object();
  embed_manifest(w, manifest);
  w.end_object();
  return w.str() + "\n";
}

// CSV payloads.  CSVs cannot embed the manifest, so the CLI writes the
// sidecar next to them.
inline std::string profile_csv(const SingularProfile& profile) {
  std::string out = "theta,omega\n";
  for (int j = 0; j < profile.grid.n_cells; ++j) {
    out += format_g17(profile.grid.center(j));
    out += ',';
    out += format_g17(profile.samples[j]);
    out += '\n';
  }
  return out;
}

inline std::string probe_table_csv(const std::vector<double>& epsilons,
                                   const std::vector<double>& probes) {
  if (epsilons.size() != probes.size())
    throw ValidationError("probe table: schedule and probe counts differ");
  std::string out = "epsilon,probe\n";
  for (std::size_t i = 0; i < probes.size(); ++i) {
    out += format_g17(epsilons[i]);
    out += ',';
    out += format_g17(probes[i]);
    out += '\n';
  }
  return out;
}

inline std::string exponents_json(const AxisymmetricOpening& opening,
                                  double lambda_S, double lambda_error,
                                  int resolution, const ExponentTriple& t,
                                  std::optional<double> q,
                                  const std::optional<CriticalityClass>& cls,
                                  const RunManifest* manifest = nullptr) {
  JsonWriter w;
  w.begin_object();
  w.field("dim", opening.dim);
  w.field("half_angle", opening.half_angle);
  w.field("resolution", resolution);
  w.field("lambda_S", lambda_S);
  w.field("lambda_error_estimate", lambda_error);
  w.field("alpha", t.alpha);
  w.field("alpha_tilde", t.alpha_tilde);
  w.field("q_S", t.q_S);
  if (q) {
    w.field("q", *q);
    w.field("lambda_Nq", cls->lambda_Nq);
    w.field("class", cls->subcritical() ? "subcritical" : "critical_or_supercritical");
    w.field("margin", cls->margin);
  }
  embed_manifest(w, manifest);
  w.end_object();
  return w.str() + "\n";
}

inline void write_text_file(const std::string& path, const std::string& body,
                            const char* what_for) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw ValidationError(std::string(what_for) + ": cannot write '" + path + "'");
  out << body;
  if (!out)
    throw ValidationError(std::string(what_for) + ": short write to '" + path + "'");
}

} // namespace conetrace
