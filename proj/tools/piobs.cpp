// piobs: analyze, design, simulate and verify PI observers from JSON system files.

#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "piobs/cli.hpp"

namespace {

int emit(const piobs::cli::CommandResult& r, const std::string& out_path) {
  if (!r.output.empty()) {
    if (out_path.empty()) {
      std::cout << r.output;
    } else {
      std::ofstream out(out_path, std::ios::binary);
      if (!out) {
        std::cerr << "error: cannot write " << out_path << '\n';
        return piobs::cli::kInputError;
      }
      out << r.output;
    }
  }
  if (!r.diagnostic.empty()) std::cerr << (r.exit_code == 0 ? "note: " : "error: ") << r.diagnostic << '\n';
  return r.exit_code;
}

void add_design_flags(CLI::App* cmd, piobs::cli::DesignOptions& opt) {
  cmd->add_option("--pole", opt.poles, "Target pole, e.g. 0.2 or 0.1+0.3i (repeatable)")->allow_extra_args(false);
  auto* scalar = cmd->add_option("--phi-scalar", opt.phi_scalar, "Phi = s * I");
  cmd->add_option("--phi", opt.phi_scalar, "Alias of --phi-scalar")->excludes(scalar);
  cmd->add_option("--phi-file", opt.phi_file, "JSON file holding the p x p matrix Phi");
  cmd->add_option("--lambda-file", opt.lambda_file, "JSON file holding the (n-p) x p block Lambda");
  cmd->add_option("--margin", opt.margin, "Stability margin: spectral radius must be < 1 - margin")
      ->capture_default_str();
  cmd->add_option("--tol-rank", opt.tol_rank, "Relative rank tolerance")->capture_default_str();
  cmd->add_option("--tol-eig", opt.tol_eig, "Eigenvalue clustering tolerance")->capture_default_str();
  cmd->add_option("--seed", opt.seed, "Seed for randomized pole placement candidates")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Design and verification of PI observers for discrete-time LTI systems"};
  app.require_subcommand(1);
  std::string out_path;
  app.add_option("--out", out_path, "Write the document or trace to this file instead of stdout");

  std::string system_path, report_path;

  auto* analyze = app.add_subcommand("analyze", "Eigenvalue table, detectability and observability");
  analyze->add_option("system", system_path, "System file (JSON with A, B, C)")->required();
  piobs::AnalysisOptions aopt;
  analyze->add_option("--tol-rank", aopt.tol_rank, "Relative rank tolerance")->capture_default_str();
  analyze->add_option("--tol-eig", aopt.tol_cluster, "Eigenvalue clustering tolerance")->capture_default_str();
  analyze->add_option("--out", out_path, "Output file");

  auto* design = app.add_subcommand("design", "Construct L and F");
  design->add_option("system", system_path, "System file")->required();
  piobs::cli::DesignOptions dopt;
  add_design_flags(design, dopt);
  design->add_option("--out", out_path, "Output file");

  auto* simulate = app.add_subcommand("simulate", "Co-simulate plant and observer, emit a CSV trace");
  simulate->add_option("system", system_path, "System file")->required();
  simulate->add_option("report", report_path, "Design report")->required();
  piobs::cli::SimulateOptions sopt;
  simulate->add_option("--horizon", sopt.horizon, "Number of steps")->capture_default_str();
  simulate->add_option("--x0", sopt.x0, "Plant initial state, comma separated (default all ones)");
  simulate->add_option("--xhat0", sopt.xhat0, "Observer initial state (default zeros)");
  simulate->add_option("--v0", sopt.v0, "Integral state (default zeros)");
  simulate->add_option("--input", sopt.input, "Input signal")
      ->check(CLI::IsMember({"zero", "constant", "step", "random"}))
      ->capture_default_str();
  simulate->add_option("--input-value", sopt.input_value, "Value for constant and step inputs (default all ones)");
  simulate->add_option("--onset", sopt.onset, "Step onset")->capture_default_str();
  simulate->add_option("--amplitude", sopt.amplitude, "Bound for the random input")->capture_default_str();
  simulate->add_option("--seed", sopt.seed, "Seed for the random input")->capture_default_str();
  simulate->add_option("--convergence-tol", sopt.convergence_tol, "Convergence threshold")->capture_default_str();
  simulate->add_option("--out", out_path, "Output file");

  auto* verify = app.add_subcommand("verify", "Re-check a design report against a system file");
  verify->add_option("system", system_path, "System file")->required();
  verify->add_option("report", report_path, "Design report")->required();
  std::optional<double> vmargin;
  verify->add_option("--margin", vmargin, "Override the margin recorded in the report");
  verify->add_option("--out", out_path, "Output file");

  auto* batch = app.add_subcommand("batch", "Design several system files");
  std::vector<std::string> batch_files;
  std::string batch_dir = "designs";
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  batch->add_option("systems", batch_files, "System files")->required();
  batch->add_option("--out-dir", batch_dir, "Directory for the per-file reports")->capture_default_str();
  batch->add_option("--jobs", jobs, "Files designed concurrently");
  piobs::cli::DesignOptions bopt;
  add_design_flags(batch, bopt);
  batch->add_option("--out", out_path, "Summary output file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : piobs::cli::kInputError;
  }

  piobs::cli::CommandResult r;
  if (*analyze)
    r = piobs::cli::analyze(system_path, aopt);
  else if (*design)
    r = piobs::cli::design(system_path, dopt);
  else if (*simulate)
    r = piobs::cli::simulate(system_path, report_path, sopt);
  else if (*verify)
    r = piobs::cli::verify(system_path, report_path, vmargin);
  else
    r = piobs::cli::batch(batch_files, batch_dir, bopt, jobs);
  return emit(r, out_path);
}
