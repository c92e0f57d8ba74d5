#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "tmerr/bias_demo.hpp"
#include "tmerr/forward_models.hpp"
#include "tmerr/solver.hpp"

namespace tmerr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

enum class ProblemKind { Affine, SimpleMachine };
enum class OracleTarget { Exact, Reduced, FixedPoint };

/// Flat key=value pairs. Blank lines and lines starting with '#' are skipped,
/// values may be double-quoted. Duplicate keys are a ConfigError.
std::map<std::string, std::string> parse_key_values(const std::string& text);

struct ExperimentConfig {
  ProblemKind problem = ProblemKind::Affine;
  Vector x_star;
  double noise_level = 0.05;
  std::size_t d = 1;
  bool zero_noise = true;
  Vector prior_lo, prior_hi;
  double machine_a = 10.0;

  std::string algorithm = "iterative";  // full|reduced|iterative|iterative_mod|oracle_grid|oracle_mcmc
  SolverConfig solver;

  std::size_t S = 10000;
  std::string output_dir = "out";
  std::size_t checkpoint_every = 1;

  OracleTarget oracle_target = OracleTarget::Exact;
  std::size_t oracle_resolution = 256;
  bool oracle_cross_check = false;
  std::size_t mh_samples = 20000;
  std::size_t mh_burn = 2000;
  Vector mh_proposal_std;  // empty: 5% of the box width

  std::string raw_text;

  bool operator==(const ExperimentConfig&) const;
};

/// Parse and range-check. Every problem is reported as a ConfigError naming the key.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

InverseProblem build_problem(const ExperimentConfig& cfg);

std::string to_string(OracleTarget t);

/// Commands return the process exit code; diagnostics go to `err`.
int cmd_run(const std::string& config_path, std::ostream& out, std::ostream& err);
int cmd_oracle(const std::string& config_path, std::ostream& out, std::ostream& err);
int cmd_bias_demo(const BiasDemoConfig& cfg, const std::string& output_dir, std::ostream& out, std::ostream& err);
int cmd_cost_report(const std::vector<std::string>& trace_paths, std::ostream& out, std::ostream& err);

/// OUTPUT_DIR when set, otherwise `fallback`.
std::string resolve_output_dir(const std::string& fallback);

}  // namespace tmerr::cli
