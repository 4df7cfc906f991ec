#pragma once

// JSON documents (system files, analysis / design / verification reports)
// and CSV traces.

#include <cstddef>
#include <fstream>
#include <iterator>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "piobs/analysis.hpp"
#include "piobs/design.hpp"
#include "piobs/errors.hpp"
#include "piobs/linalg.hpp"
#include "piobs/sim.hpp"

namespace piobs::io {

using nlohmann::json;

inline constexpr const char* kDesignFormat = "piobs.design/1";

inline json to_json(const RealMatrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (std::size_t j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline json to_json(const Complex& z) { return json::array({z.real(), z.imag()}); }

inline json to_json(const std::vector<Complex>& zs) {
  json a = json::array();
  for (const auto& z : zs) a.push_back(to_json(z));
  return a;
}

/// Array-of-rows matrix. `field` names the document key in error messages.
/// An empty array yields a 0 x `empty_cols` matrix.
inline RealMatrix matrix_from_json(const json& j, const std::string& field, std::size_t empty_cols = 0) {
  if (!j.is_array()) throw InputError("field \"" + field + "\": expected an array of rows");
  if (j.empty()) return RealMatrix(0, empty_cols);
  std::size_t cols = 0;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& row = j[i];
    if (!row.is_array()) {
      std::ostringstream os;
      os << "field \"" << field << "\", row " << i + 1 << ": expected an array of numbers";
      throw InputError(os.str());
    }
    if (i == 0) cols = row.size();
    if (row.size() != cols) {
      std::ostringstream os;
      os << "field \"" << field << "\", row " << i + 1 << ": has " << row.size() << " entries, expected " << cols
         << " (ragged matrix)";
      throw InputError(os.str());
    }
  }
  RealMatrix m(j.size(), cols);
  for (std::size_t i = 0; i < j.size(); ++i)
    for (std::size_t k = 0; k < cols; ++k) {
      const auto& x = j[i][k];
      if (!x.is_number()) {
        std::ostringstream os;
        os << "field \"" << field << "\", row " << i + 1 << ", column " << k + 1 << ": not a number";
        throw InputError(os.str());
      }
      m(i, k) = x.get<double>();
    }
  require_finite(m, ("field \"" + field + "\"").c_str());
  return m;
}

inline std::vector<Complex> complex_list_from_json(const json& j, const std::string& field) {
  if (!j.is_array()) throw InputError("field \"" + field + "\": expected an array of [re, im] pairs");
  std::vector<Complex> out;
  for (const auto& z : j) {
    if (z.is_number()) {
      out.emplace_back(z.get<double>(), 0.0);
    } else if (z.is_array() && z.size() == 2 && z[0].is_number() && z[1].is_number()) {
      out.emplace_back(z[0].get<double>(), z[1].get<double>());
    } else {
      throw InputError("field \"" + field + "\": entries must be numbers or [re, im] pairs");
    }
  }
  return out;
}

inline json parse_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(origin + ": " + e.what());
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline json load_json(const std::string& path) { return parse_text(read_file(path), path); }

inline const json& require_field(const json& doc, const char* key) {
  if (!doc.is_object() || !doc.contains(key)) throw InputError(std::string("missing field \"") + key + "\"");
  return doc.at(key);
}

// ---------------------------------------------------------------------------
// Systems

inline SystemRealization system_from_json(const json& doc, double tol_rank = kDefaultTolRank) {
  if (!doc.is_object()) throw InputError("system document must be an object with keys A, B, C");
  RealMatrix a = matrix_from_json(require_field(doc, "A"), "A");
  RealMatrix b = matrix_from_json(require_field(doc, "B"), "B");
  RealMatrix c = matrix_from_json(require_field(doc, "C"), "C");
  std::string name;
  if (doc.contains("name")) {
    if (!doc["name"].is_string()) throw InputError("field \"name\": expected a string");
    name = doc["name"].get<std::string>();
  }
  return SystemRealization(std::move(a), std::move(b), std::move(c), tol_rank, std::move(name));
}

inline json to_json(const SystemRealization& sys) {
  json j;
  if (!sys.name().empty()) j["name"] = sys.name();
  j["A"] = to_json(sys.A());
  j["B"] = to_json(sys.B());
  j["C"] = to_json(sys.C());
  return j;
}

// ---------------------------------------------------------------------------
// Analysis

inline json analysis_report(const SystemRealization& sys, const AnalysisOptions& opt = {}) {
  const auto det = is_detectable(sys.A(), sys.C(), opt);
  const auto obs = is_observable(sys.A(), sys.C(), opt);
  json j;
  j["system"] = to_json(sys);
  j["dimensions"] = {{"n", sys.n()}, {"m", sys.m()}, {"p", sys.p()}};
  json table = json::array();
  for (const auto& e : det.eigen) {
    table.push_back({{"eigenvalue", to_json(e.eigenvalue)},
                     {"magnitude", e.magnitude},
                     {"stable", e.stable},
                     {"boundary", e.boundary},
                     {"observable", e.observable},
                     {"pbh_rank", e.pbh_rank}});
  }
  j["eigenvalues"] = std::move(table);
  j["detectable"] = det.detectable;
  j["witness"] = to_json(det.witness);
  j["observable"] = obs.observable;
  j["observability_stack_rank"] = obs.stack_rank;
  j["observability_cross_check"] = obs.stack_agrees;
  if (!obs.observable) {
    const auto kd = kalman_decompose(sys.A(), sys.C(), opt.tol_rank);
    j["kalman"] = {{"q", kd.q},
                   {"T", to_json(kd.T)},
                   {"A11", to_json(kd.A11)},
                   {"A21", to_json(kd.A21)},
                   {"A22", to_json(kd.A22)},
                   {"C1", to_json(kd.C1)},
                   {"unobservable_spectrum", to_json(eigenvalues(kd.A22))}};
  }
  j["tolerances"] = {{"rank", opt.tol_rank}, {"boundary", opt.tol_boundary}, {"cluster", opt.tol_cluster}};
  return j;
}

// ---------------------------------------------------------------------------
// Designs

inline json tolerances_to_json(const Tolerances& t) {
  return {{"rank", t.rank},         {"boundary", t.boundary},
          {"cluster", t.cluster},   {"singular", t.singular},
          {"pairing", t.pairing},   {"output_identity", t.output_identity},
          {"similarity", t.similarity}};
}

inline Tolerances tolerances_from_json(const json& j) {
  Tolerances t;
  auto get = [&](const char* k, double& dst) {
    if (j.contains(k)) {
      if (!j[k].is_number()) throw InputError(std::string("tolerance \"") + k + "\" must be a number");
      dst = j[k].get<double>();
    }
  };
  get("rank", t.rank);
  get("boundary", t.boundary);
  get("cluster", t.cluster);
  get("singular", t.singular);
  get("pairing", t.pairing);
  get("output_identity", t.output_identity);
  get("similarity", t.similarity);
  return t;
}

inline json config_echo(const DesignConfig& cfg, const std::vector<Complex>& poles, const RealMatrix& phi,
                        const RealMatrix& lambda) {
  return {{"poles", to_json(poles)},
          {"poles_defaulted", cfg.target_poles.empty()},
          {"phi", to_json(phi)},
          {"phi_defaulted", !cfg.phi.has_value()},
          {"lambda", to_json(lambda)},
          {"lambda_defaulted", !cfg.lambda_block.has_value()},
          {"margin", cfg.margin},
          {"seed", cfg.seed},
          {"tolerances", tolerances_to_json(cfg.tol)}};
}

inline json verification_to_json(const VerificationReport& r) {
  json checks = json::array();
  for (const auto& c : r.checks)
    checks.push_back({{"name", c.name}, {"pass", c.pass}, {"value", c.value}, {"threshold", c.threshold}});
  return {{"spectral_radius", r.spectral_radius},
          {"schur_stable", r.schur_stable},
          {"pairing_distance", r.pairing_distance},
          {"similarity_residual", r.similarity_residual},
          {"output_identity_residual", r.output_identity_residual},
          {"checks", std::move(checks)},
          {"pass", r.all_pass()}};
}

inline json design_report(const PiObserver& obs, const DesignConfig& cfg) {
  const auto ver = verify_design(obs, cfg.margin, cfg.tol);
  json j;
  j["format"] = kDesignFormat;
  j["verdict"] = "feasible";
  j["system"] = to_json(obs.system);
  j["structure"] = {{"n", obs.system.n()},
                    {"m", obs.system.m()},
                    {"p", obs.system.p()},
                    {"q", obs.q},
                    {"assigned_poles", to_json(obs.assigned_poles)},
                    {"inherited_poles", to_json(obs.inherited_poles)}};
  j["gains"] = {{"L", to_json(obs.L)},     {"F", to_json(obs.F)},   {"K", to_json(obs.K)},
                {"T", to_json(obs.T)},     {"X", to_json(obs.X)},   {"phi", to_json(obs.phi)},
                {"lambda", to_json(obs.lambda_block)}};
  j["spectra"] = {{"A", to_json(eigenvalues(obs.system.A()))},
                  {"A_plus_KC", to_json(ver.closed_loop)},
                  {"phi", to_json(ver.phi_spectrum)},
                  {"augmented", to_json(ver.augmented)}};
  j["verification"] = verification_to_json(ver);
  j["config"] = config_echo(cfg, obs.assigned_poles, obs.phi, obs.lambda_block);
  return j;
}

inline json infeasible_report(const SystemRealization& sys, const std::vector<Complex>& witness,
                              const DesignConfig& cfg) {
  json j;
  j["format"] = kDesignFormat;
  j["verdict"] = "infeasible";
  j["reason"] = "the pair (A, C) is not detectable";
  j["witness"] = to_json(witness);
  j["system"] = to_json(sys);
  j["spectra"] = {{"A", to_json(eigenvalues(sys.A()))}};
  j["config"] = {{"poles", to_json(cfg.target_poles)}, {"margin", cfg.margin}, {"seed", cfg.seed},
                 {"tolerances", tolerances_to_json(cfg.tol)}};
  return j;
}

/// Rebuilds the observer stored in a feasible design report, attached to `sys`.
inline PiObserver observer_from_report(const json& doc, const SystemRealization& sys) {
  if (!doc.is_object()) throw InputError("design report must be a JSON object");
  if (!doc.contains("format") || doc["format"] != kDesignFormat)
    throw InputError(std::string("design report: expected format \"") + kDesignFormat + "\"");
  if (require_field(doc, "verdict") != "feasible")
    throw InputError("design report: verdict is not \"feasible\"; there are no gains to use");
  const auto& g = require_field(doc, "gains");
  const std::size_t n = sys.n(), p = sys.p();
  PiObserver obs{sys,
                 matrix_from_json(require_field(g, "L"), "gains.L", p),
                 matrix_from_json(require_field(g, "F"), "gains.F", p),
                 matrix_from_json(require_field(g, "K"), "gains.K", p),
                 matrix_from_json(require_field(g, "T"), "gains.T", n),
                 matrix_from_json(require_field(g, "X"), "gains.X", p),
                 matrix_from_json(require_field(g, "phi"), "gains.phi", p),
                 matrix_from_json(require_field(g, "lambda"), "gains.lambda", n > p ? p : 0),
                 0,
                 {},
                 {}};
  auto shape = [](const RealMatrix& m, std::size_t r, std::size_t c, const char* what) {
    if (m.rows() != r || m.cols() != c) {
      std::ostringstream os;
      os << "design report: " << what << " is " << m.rows() << "x" << m.cols() << ", the system needs " << r << "x"
         << c;
      throw DimensionError(os.str());
    }
  };
  shape(obs.L, n, p, "gains.L");
  shape(obs.F, n, p, "gains.F");
  shape(obs.K, n, p, "gains.K");
  shape(obs.T, n, n, "gains.T");
  shape(obs.X, n, p, "gains.X");
  shape(obs.phi, p, p, "gains.phi");
  if (doc.contains("structure")) {
    const auto& s = doc["structure"];
    if (s.contains("q") && s["q"].is_number_unsigned()) obs.q = s["q"].get<std::size_t>();
    if (s.contains("assigned_poles")) obs.assigned_poles = complex_list_from_json(s["assigned_poles"], "structure.assigned_poles");
    if (s.contains("inherited_poles")) obs.inherited_poles = complex_list_from_json(s["inherited_poles"], "structure.inherited_poles");
  }
  return obs;
}

/// DesignConfig as echoed in a feasible report (targets, Phi, Lambda, margin, tolerances, seed).
inline DesignConfig config_from_report(const json& doc) {
  DesignConfig cfg;
  if (!doc.contains("config")) return cfg;
  const auto& c = doc["config"];
  if (c.contains("margin")) cfg.margin = c["margin"].get<double>();
  if (c.contains("seed")) cfg.seed = c["seed"].get<std::uint64_t>();
  if (c.contains("tolerances")) cfg.tol = tolerances_from_json(c["tolerances"]);
  return cfg;
}

// ---------------------------------------------------------------------------
// Traces

inline void write_trace_csv(std::ostream& os, const SimulationTrace& trace, std::size_t n, std::size_t p) {
  os << "k";
  for (std::size_t i = 0; i < n; ++i) os << ",x" << i + 1;
  for (std::size_t i = 0; i < n; ++i) os << ",xhat" << i + 1;
  for (std::size_t i = 0; i < p; ++i) os << ",v" << i + 1;
  os << ",err_inf,v_inf\n";
  const auto old = os.precision(17);
  for (const auto& s : trace.steps) {
    os << s.k;
    for (double x : s.x) os << ',' << x;
    for (double x : s.xhat) os << ',' << x;
    for (double x : s.v) os << ',' << x;
    os << ',' << s.e_inf << ',' << s.v_inf << '\n';
  }
  os.precision(old);
}

inline void write_trace_summary(std::ostream& os, const SimulationTrace& trace) {
  const auto fit = fit_decay(trace);
  const auto old = os.precision(17);
  os << "# converged_at=";
  if (trace.converged_at)
    os << *trace.converged_at;
  else
    os << "none";
  os << " tail_converged=" << (trace.tail_converged ? "true" : "false") << " decay_rate=";
  if (fit)
    os << fit->rate;
  else
    os << "none";
  os << '\n';
  os.precision(old);
}

}  // namespace piobs::io
