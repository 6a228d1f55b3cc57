#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lvssm/changepoint.hpp"
#include "lvssm/sync.hpp"

namespace lvssm {

/// Every setting a subcommand reads. Paths left empty fall back to files in
/// output_dir written by the earlier pipeline stages.
struct RunConfig {
  // inputs
  std::string input_dir;              // raw hr/gaze/aus/imu/objects CSVs
  std::vector<std::string> features;  // feature tables; compare accepts several
  std::vector<std::string> participants;
  std::string bcp_csv;
  std::string rolling_csv;
  std::string model = "two_latent";  // base | two_latent | path to a spec JSON
  std::string output_dir = "out";
  std::uint64_t seed = 1;
  int workers = 0;  // 0 = hardware concurrency

  // features
  double gte_window = 60.0;  // seconds
  int aoi_rows = 4;
  int aoi_cols = 4;

  // change points
  int bcp_iterations = 500;
  int bcp_burnin = 50;
  double bcp_p0 = 0.2;
  double bcp_w0 = 0.2;
  double rare_k = 2.0;
  std::string rare_scale = "residual";  // residual | series
  double prob_floor = 0.5;

  // fitting
  int stride = 10;
  int max_iter = 500;
  double tol = 1e-6;
  bool refine = true;
  int starts = 1;
  bool standard_errors = true;

  // rolling windows and segments
  double rolling_window = 1800.0;
  double rolling_step = 60.0;
  bool warm_start = true;
  int rolling_max_iter = 200;
  double min_segment = 300.0;
  bool smoothed_association = false;

  // windowed cross-correlation, in rolling steps
  int wcc_window = 30;
  int wcc_window_inc = 1;
  int wcc_max_lag = 10;
  int wcc_lag_inc = 1;
  bool wcc_detrend = false;

  // simulation
  int duration = 7200;  // seconds
  bool raw = false;
};

/// Fails with ConfigError on out-of-range settings.
void validate(const RunConfig& config);

std::string config_to_json(const RunConfig& config);
/// Unknown keys are a ConfigError so that typos do not pass silently.
RunConfig config_from_json(const std::string& text, RunConfig base = {});
/// FNV-1a hash of the canonical JSON form without output_dir, as 16 hex digits.
std::string config_hash(const RunConfig& config);

void cmd_features(const RunConfig& config);
void cmd_fit(const RunConfig& config);
void cmd_compare(const RunConfig& config);
void cmd_rolling(const RunConfig& config);
void cmd_segments(const RunConfig& config);
void cmd_wcc(const RunConfig& config);
void cmd_simulate(const RunConfig& config);

/// Parses the command line, runs one subcommand and returns the exit status
/// (0 ok, 1 other failure, 2 config, 3 data, 4 numerical).
int run_cli(int argc, char** argv);

}  // namespace lvssm
