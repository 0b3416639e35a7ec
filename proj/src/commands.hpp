#pragma once

#include <cstdint>
#include <string>

namespace tmld::cmd {

// Backends for the CLI subcommands. They throw (InvalidParameterError /
// SchemaError / IoError for config problems, NumericsError for runtime
// numerics); callers map exceptions onto the exit-code contract.

void sample(const std::string& config_path, const std::string& out_path, unsigned jobs);

void train_map_cmd(const std::string& samples_csv, int total_order, const std::string& out_path,
                   const std::string& rectifier, int quadrature_points, bool standardize,
                   const std::string& report_path);

void diagnose(const std::string& chains_dir, const std::string& target_cfg_path, const std::string& phi,
              size_t burn_in, const std::string& out_path, size_t ksd_points, bool svg, unsigned jobs);

// Runs a verification suite ("tmrmld", "giirr", "onestep", "rate" or "all");
// returns true when every check passed. A report is always written.
bool verify(const std::string& suite, const std::string& out_path, uint64_t seed, unsigned jobs);

}  // namespace tmld::cmd
