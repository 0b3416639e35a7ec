// tmld command-line front end. Links only the C API.

#include <cstdint>
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "tmld/tmld.h"

int main(int argc, char** argv) {
  CLI::App app{"tmld: transport-map Langevin sampling and diagnostics"};
  app.require_subcommand(1);
  app.fallthrough();

  uint64_t seed = 1;
  unsigned jobs = 0;
  bool desk_scale = true;
  app.add_option("--seed", seed, "master seed")->capture_default_str();
  app.add_option("--jobs", jobs, "worker threads (0 = all cores)")->capture_default_str();
  app.add_flag("--desk-scale,!--full-scale", desk_scale,
               "run experiments at desk scale (default) or full scale");

  // sample
  auto* sample = app.add_subcommand("sample", "run a chain from a JSON config and write CSV");
  std::string sample_cfg, sample_out;
  sample->add_option("--config", sample_cfg, "config JSON path")->required();
  sample->add_option("--out", sample_out, "output CSV file or directory")->required();

  // train-map
  auto* train = app.add_subcommand("train-map", "fit a monotone triangular map to samples");
  std::string train_samples, train_out, train_rect = "softplus", train_report;
  int train_order = 2, train_quad = 32;
  bool no_standardize = false;
  train->add_option("--samples", train_samples, "sample CSV (header row, one column per coordinate)")
      ->required();
  train->add_option("--order", train_order, "total polynomial order")->required();
  train->add_option("--out", train_out, "output map JSON path")->required();
  train->add_option("--rectifier", train_rect, "softplus or shifted-elu")->capture_default_str();
  train->add_option("--quadrature-points", train_quad, "Gauss-Legendre points")->capture_default_str();
  train->add_flag("--no-standardize", no_standardize, "skip the standardization pre-map");
  train->add_option("--report", train_report, "training report JSON path (default <out>.report.json)");

  // diagnose
  auto* diag = app.add_subcommand("diagnose", "ergodic averages, batch-means AVar and KSD for chain CSVs");
  std::string diag_chains, diag_target, diag_phi = "sum", diag_out = "report.json";
  size_t diag_burn = 0, diag_ksd_points = 10000;
  bool diag_svg = false;
  diag->add_option("--chains", diag_chains, "directory of chain CSV files")->required();
  diag->add_option("--target", diag_target, "target config JSON path")->required();
  diag->add_option("--phi", diag_phi, "test function name")->capture_default_str();
  diag->add_option("--burn-in", diag_burn, "rows to discard per chain")->capture_default_str();
  diag->add_option("--out", diag_out, "report JSON path")->capture_default_str();
  diag->add_option("--ksd-points", diag_ksd_points, "points per chain for KSD")->capture_default_str();
  diag->add_flag("--svg", diag_svg, "emit SVG plots next to the report");

  // verify
  auto* verify = app.add_subcommand("verify", "run numerical verification suites");
  std::string verify_suite = "all", verify_out = "verify_report.json";
  verify->add_option("--suite", verify_suite, "tmrmld | giirr | onestep | rate | all")
      ->capture_default_str();
  verify->add_option("--out", verify_out, "report JSON path")->capture_default_str();

  // run-experiment
  auto* exp = app.add_subcommand("run-experiment", "run a named experiment preset or config");
  std::string exp_name, exp_out = "out";
  bool exp_svg = false;
  exp->add_option("name", exp_name, "banana-bias | funnel | rosenbrock | mixture | config.json")
      ->required();
  exp->add_option("--out", exp_out, "output directory")->capture_default_str();
  exp->add_flag("--svg", exp_svg, "emit SVG plots");

  CLI11_PARSE(app, argc, argv);

  if (*sample) return tmld_cmd_sample(sample_cfg.c_str(), sample_out.c_str(), jobs);
  if (*train)
    return tmld_cmd_train_map(train_samples.c_str(), train_order, train_out.c_str(), train_rect.c_str(),
                              train_quad, no_standardize ? 0 : 1,
                              train_report.empty() ? nullptr : train_report.c_str());
  if (*diag)
    return tmld_cmd_diagnose(diag_chains.c_str(), diag_target.c_str(), diag_phi.c_str(), diag_burn,
                             diag_out.c_str(), diag_ksd_points, diag_svg ? 1 : 0, jobs);
  if (*verify) return tmld_cmd_verify(verify_suite.c_str(), verify_out.c_str(), seed, jobs);
  if (*exp)
    return tmld_cmd_run_experiment(exp_name.c_str(), exp_out.c_str(), seed, desk_scale ? 1 : 0,
                                   exp_svg ? 1 : 0, jobs);
  return 0;
}
