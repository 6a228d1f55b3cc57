#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lvssm/timeseries.hpp"

namespace lvssm {

/// Rectangular grid of equally sized areas of interest over gaze angles.
struct AoiGrid {
  double x_min = 0.0;
  double x_max = 1.0;
  double y_min = 0.0;
  double y_max = 1.0;
  int rows = 4;
  int cols = 4;

  /// Grid spanning the finite min/max of a session's gaze samples.
  static AoiGrid from_range(std::span<const double> gaze_x, std::span<const double> gaze_y,
                            int rows = 4, int cols = 4);

  int cells() const { return rows * cols; }
  /// Cell index row*cols + col; samples on an interior boundary go to the
  /// higher cell, samples outside the range are clamped to the edge cells.
  int cell_of(double x, double y) const;
  void validate() const;
};

using AoiSequence = std::vector<std::optional<int>>;

AoiSequence bin_gaze(std::span<const double> gaze_x, std::span<const double> gaze_y,
                     const AoiGrid& grid);

enum class StationaryEstimate {
  EmpiricalOccupancy,  // fraction of non-missing samples in each state
  FixedPoint,          // left eigenvector of the estimated transition matrix
};

struct TransitionModel {
  Eigen::MatrixXd p;       // row-stochastic where a row has departures, zero row otherwise
  Eigen::VectorXd pi;      // stationary weights
  Eigen::MatrixXi counts;  // counts(i, j) = number of i -> j transitions

  int states() const { return static_cast<int>(p.rows()); }
  /// True when every state reaches every other state through observed transitions.
  bool irreducible() const;
};

/// Transition counts between consecutive non-missing samples; pairs spanning
/// a missing sample are skipped. `states` defaults to max index + 1.
TransitionModel transition_model(const AoiSequence& aoi, std::optional<int> states = std::nullopt,
                                 StationaryEstimate estimate = StationaryEstimate::EmpiricalOccupancy);

/// Stationary vector of a row-stochastic matrix (least-squares solve of
/// pi P = pi with sum(pi) = 1).
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& p);

/// Shannon entropy in bits of an occupancy vector.
double sge(std::span<const double> occupancy);

/// Conditional (transition) entropy in bits: -sum_i pi_i sum_j p_ij log2 p_ij.
double gte(const TransitionModel& model);

struct EntropySeries {
  std::vector<std::size_t> end_index;  // sample index of each window's last element
  std::vector<double> value;           // NaN where the window has no valid transition
};

EntropySeries windowed_gte(const AoiSequence& aoi, std::size_t window, std::size_t step,
                           std::optional<int> states = std::nullopt);

struct ImuActivity {
  std::vector<int> per_sample;    // 1 where either sensor magnitude exceeds its session mean
  std::vector<double> per_second;  // max of per_sample within [s, s+1), s = 0, 1, ...
};

ImuActivity imu_activity(std::span<const double> timestamps,
                         const std::array<std::span<const double>, 3>& accel,
                         const std::array<std::span<const double>, 3>& gyro);

/// Per-sample indicator for a single magnitude series (strictly above mean).
std::vector<int> above_mean_indicator(std::span<const double> magnitudes);

inline const std::vector<std::string>& action_unit_names() {
  static const std::vector<std::string> names = {"AU1", "AU2", "AU6", "AU7", "AU12", "AU15", "AU25"};
  return names;
}

/// Observation columns of the feature table, in order.
const std::vector<std::string>& feature_observation_columns();
/// Input columns of the feature table, in order.
const std::vector<std::string>& feature_input_columns();

struct FeatureSeries {
  std::vector<double> grid;  // common 1 Hz timestamps
  std::vector<double> hr;
  std::vector<double> bcp_mean;
  std::vector<double> bcp_prob;
  std::map<std::string, std::vector<double>> action_units;
  std::vector<double> gte;
  std::vector<double> road_users;
  std::vector<double> hand_activity;
};

/// Builds the observation + input table; AU intensities are clamped to [0, 5].
TimeSeriesTable assemble_feature_table(const FeatureSeries& series);

}  // namespace lvssm
