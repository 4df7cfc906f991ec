#pragma once

// Command implementations behind the piobs executable. Each command returns
// its document text and exit status instead of touching stdout, so the
// commands can be driven from tests and from the batch runner.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "piobs/io.hpp"
#include "piobs/piobs.hpp"

namespace piobs::cli {

enum ExitCode : int {
  kOk = 0,
  kVerificationFailed = 1,
  kInfeasible = 2,
  kInputError = 3,
  kNumericalFailure = 4,
};

struct CommandResult {
  int exit_code = kOk;
  std::string output;      // document or trace
  std::string diagnostic;  // human-readable message for stderr, empty on success
};

struct DesignOptions {
  std::vector<std::string> poles;
  std::optional<double> phi_scalar;
  std::optional<std::string> phi_file;
  std::optional<std::string> lambda_file;
  double margin = 1e-6;
  double tol_rank = kDefaultTolRank;
  double tol_eig = 1e-7;
  std::uint64_t seed = 20240601;
};

struct SimulateOptions {
  std::size_t horizon = 100;
  std::optional<std::string> x0, xhat0, v0;
  std::string input = "zero";
  std::optional<std::string> input_value;
  std::size_t onset = 0;
  double amplitude = 1.0;
  std::uint64_t seed = 1;
  double convergence_tol = 1e-6;
};

/// Parses "0.2", "-0.1+0.3i", "0.1-0.3i" or "0.3i".
inline Complex parse_complex(const std::string& text) {
  auto fail = [&]() -> Complex { throw InputError("cannot parse \"" + text + "\" as a complex number"); };
  std::string s;
  for (char ch : text)
    if (ch != ' ') s.push_back(ch);
  if (s.empty()) return fail();
  auto number = [&](const std::string& t, double& out) {
    if (t.empty()) return false;
    std::size_t used = 0;
    try {
      out = std::stod(t, &used);
    } catch (const std::exception&) {
      return false;
    }
    return used == t.size() && std::isfinite(out);
  };
  double re = 0.0, im = 0.0;
  if (s.back() != 'i' && s.back() != 'j') {
    if (!number(s, re)) return fail();
    return {re, 0.0};
  }
  s.pop_back();
  // Split at the last sign that is not an exponent sign or the leading sign.
  std::size_t split = std::string::npos;
  for (std::size_t k = s.size(); k-- > 1;) {
    if ((s[k] == '+' || s[k] == '-') && s[k - 1] != 'e' && s[k - 1] != 'E') {
      split = k;
      break;
    }
  }
  std::string im_text = split == std::string::npos ? s : s.substr(split);
  if (im_text.empty() || im_text == "+" || im_text == "-") im_text += "1";
  if (!number(im_text, im)) return fail();
  if (split != std::string::npos && !number(s.substr(0, split), re)) return fail();
  return {re, im};
}

/// Comma-separated list of reals.
inline RealVector parse_vector(const std::string& text, const std::string& what) {
  RealVector v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(item, &used);
    } catch (const std::exception&) {
      throw InputError(what + ": cannot parse \"" + item + "\" as a number");
    }
    while (used < item.size() && item[used] == ' ') ++used;
    if (used != item.size() || !std::isfinite(x)) throw InputError(what + ": cannot parse \"" + item + "\" as a number");
    v.push_back(x);
  }
  if (v.empty()) throw InputError(what + ": empty vector");
  return v;
}

/// Runs `body`, mapping the error hierarchy onto exit codes.
inline CommandResult guarded(const std::function<CommandResult()>& body) {
  try {
    return body();
  } catch (const InfeasibleError& e) {
    return {kInfeasible, {}, e.what()};
  } catch (const NumericalFailure& e) {
    return {kNumericalFailure, {}, e.what()};
  } catch (const Error& e) {
    return {kInputError, {}, e.what()};
  } catch (const nlohmann::json::exception& e) {
    return {kInputError, {}, e.what()};
  } catch (const std::bad_alloc&) {
    return {kNumericalFailure, {}, "out of memory"};
  }
}

inline std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline DesignConfig design_config(const SystemRealization& sys, const DesignOptions& opt) {
  DesignConfig cfg;
  for (const auto& p : opt.poles) cfg.target_poles.push_back(parse_complex(p));
  if (opt.phi_scalar && opt.phi_file) throw InputError("give either --phi-scalar or --phi-file, not both");
  if (opt.phi_scalar) cfg.phi = *opt.phi_scalar * RealMatrix::identity(sys.p());
  if (opt.phi_file) cfg.phi = io::matrix_from_json(io::load_json(*opt.phi_file), *opt.phi_file);
  if (opt.lambda_file)
    cfg.lambda_block = io::matrix_from_json(io::load_json(*opt.lambda_file), *opt.lambda_file, sys.p());
  cfg.margin = opt.margin;
  cfg.tol.rank = opt.tol_rank;
  cfg.tol.cluster = opt.tol_eig;
  cfg.seed = opt.seed;
  return cfg;
}

inline CommandResult analyze(const std::string& system_path, const AnalysisOptions& opt = {}) {
  return guarded([&] {
    const auto sys = io::system_from_json(io::load_json(system_path), opt.tol_rank);
    return CommandResult{kOk, dump(io::analysis_report(sys, opt)), {}};
  });
}

inline CommandResult design(const std::string& system_path, const DesignOptions& opt = {}) {
  return guarded([&] {
    const auto sys = io::system_from_json(io::load_json(system_path), opt.tol_rank);
    const auto cfg = design_config(sys, opt);
    try {
      const auto obs = design_pi_observer(sys, cfg);
      return CommandResult{kOk, dump(io::design_report(obs, cfg)), {}};
    } catch (const InfeasibleError& e) {
      return CommandResult{kInfeasible, dump(io::infeasible_report(sys, e.witness(), cfg)), e.what()};
    }
  });
}

inline CommandResult verify(const std::string& system_path, const std::string& report_path,
                            std::optional<double> margin = std::nullopt) {
  return guarded([&] {
    const auto report = io::load_json(report_path);
    auto cfg = io::config_from_report(report);
    if (margin) cfg.margin = *margin;
    const auto sys = io::system_from_json(io::load_json(system_path), cfg.tol.rank);
    const auto obs = io::observer_from_report(report, sys);
    const auto ver = verify_design(obs, cfg.margin, cfg.tol);
    CommandResult r{ver.all_pass() ? kOk : kVerificationFailed, dump(io::verification_to_json(ver)), {}};
    if (!ver.all_pass()) {
      std::string names;
      for (const auto& name : ver.failed()) names += (names.empty() ? "" : ", ") + name;
      r.diagnostic = "verification failed: " + names;
    }
    return r;
  });
}

inline SimulationConfig simulation_config(const SystemRealization& sys, const SimulateOptions& opt) {
  SimulationConfig cfg;
  cfg.horizon = opt.horizon;
  cfg.convergence_tol = opt.convergence_tol;
  cfg.x0 = opt.x0 ? parse_vector(*opt.x0, "--x0") : RealVector(sys.n(), 1.0);
  if (opt.xhat0) cfg.xhat0 = parse_vector(*opt.xhat0, "--xhat0");
  if (opt.v0) cfg.v0 = parse_vector(*opt.v0, "--v0");
  const RealVector value = opt.input_value ? parse_vector(*opt.input_value, "--input-value") : RealVector(sys.m(), 1.0);
  if (opt.input == "zero")
    cfg.input = input::Zero{};
  else if (opt.input == "constant")
    cfg.input = input::Constant{value};
  else if (opt.input == "step")
    cfg.input = input::Step{value, opt.onset};
  else if (opt.input == "random")
    cfg.input = input::RandomBounded{opt.amplitude, opt.seed};
  else
    throw InputError("unknown input signal \"" + opt.input + "\" (expected zero, constant, step or random)");
  return cfg;
}

inline CommandResult simulate(const std::string& system_path, const std::string& report_path,
                              const SimulateOptions& opt = {}) {
  return guarded([&] {
    const auto report = io::load_json(report_path);
    const auto tol = io::config_from_report(report).tol;
    const auto sys = io::system_from_json(io::load_json(system_path), tol.rank);
    const auto obs = io::observer_from_report(report, sys);
    const auto cfg = simulation_config(sys, opt);
    std::ostringstream os;
    try {
      const auto trace = run_simulation(obs, cfg);
      io::write_trace_csv(os, trace, sys.n(), sys.p());
      io::write_trace_summary(os, trace);
      return CommandResult{kOk, os.str(), {}};
    } catch (const DivergenceError& e) {
      io::write_trace_csv(os, e.partial_trace(), sys.n(), sys.p());
      os << "# diverged_at=" << e.step() << '\n';
      return CommandResult{kNumericalFailure, os.str(), e.what()};
    }
  });
}

/// Designs every system file independently, writing <stem>.design.json into
/// `out_dir`, with up to `jobs` files in flight. The returned document
/// lists per-file status; the exit code is the largest per-file code.
inline CommandResult batch(const std::vector<std::string>& system_paths, const std::string& out_dir,
                           const DesignOptions& opt = {}, unsigned jobs = 1) {
  return guarded([&] {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw InputError("cannot create output directory " + out_dir + ": " + ec.message());
    jobs = std::max(1u, jobs);

    std::vector<CommandResult> results(system_paths.size());
    for (std::size_t i = 0; i < system_paths.size(); i += jobs) {
      std::vector<std::future<CommandResult>> running;
      const std::size_t end = std::min(system_paths.size(), i + jobs);
      for (std::size_t k = i; k < end; ++k)
        running.push_back(std::async(std::launch::async, [&, k] { return design(system_paths[k], opt); }));
      for (std::size_t k = i; k < end; ++k) results[k] = running[k - i].get();
    }

    nlohmann::json summary = nlohmann::json::array();
    int worst = kOk;
    for (std::size_t i = 0; i < system_paths.size(); ++i) {
      const auto& r = results[i];
      nlohmann::json entry{{"file", system_paths[i]}, {"exit_code", r.exit_code}};
      if (!r.output.empty()) {
        const auto target = (fs::path(out_dir) / (fs::path(system_paths[i]).stem().string() + ".design.json")).string();
        std::ofstream out(target, std::ios::binary);
        if (!out) throw InputError("cannot write " + target);
        out << r.output;
        entry["report"] = target;
      }
      if (!r.diagnostic.empty()) entry["diagnostic"] = r.diagnostic;
      summary.push_back(std::move(entry));
      worst = std::max(worst, r.exit_code);
    }
    return CommandResult{worst, dump(nlohmann::json{{"results", summary}}), {}};
  });
}

}  // namespace piobs::cli
