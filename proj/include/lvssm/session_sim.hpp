#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "lvssm/model_spec.hpp"
#include "lvssm/timeseries.hpp"

namespace lvssm {

/// Reference parameter values for the standard two-latent spec (stress and
/// workload transitions 0.88 and 0.98, moderate input effects, latent noise
/// correlation 0.3, unit observation noise). Works for any observation set
/// that contains the indicator columns.
ParamSet reference_truth(const ModelSpec& two_latent_spec);

/// Exogenous inputs at 1 Hz: road_users is a bounded integer random walk,
/// hand_activity a persistent two-state chain. Returns p x T in the order of
/// `inputs`; unknown input names get white noise.
Eigen::MatrixXd simulate_inputs(const std::vector<std::string>& inputs, int steps, std::uint64_t seed);

struct SimulatedSession {
  TimeSeriesTable features;  // t, observation columns, input columns
  Eigen::MatrixXd latent;    // m x T
};

/// Feature-level session of `steps` seconds. With stride > 1 the rows are
/// `stride` independent interleaved sequences sharing one input path, which
/// is exactly the structure fitted after lag restructuring.
SimulatedSession simulate_session(const ModelSpec& spec, const ParamSet& truth, int steps, std::uint64_t seed,
                                  int stride = 1);

struct RawSession {
  TimeSeriesTable hr;       // t, hr (1 Hz)
  TimeSeriesTable gaze;     // t, gaze_x, gaze_y (10 Hz)
  TimeSeriesTable aus;      // t, AU1 ... AU25 (1 Hz, occasional dropouts)
  TimeSeriesTable imu;      // t, accel_x/y/z, gyro_x/y/z (10 Hz)
  TimeSeriesTable objects;  // t, road_users (1 Hz)
};

/// Sensor-level session whose derived features follow the two-latent model:
/// heart rate and action units are affine images of simulated indicators,
/// gaze switches between grid cells more often under higher workload, and
/// the hand-activity input drives bursts of IMU motion. `stride` is passed to
/// simulate_session.
RawSession simulate_raw_session(const ModelSpec& spec, const ParamSet& truth, int seconds, std::uint64_t seed,
                                int stride = 1);

/// Writes hr.csv, gaze.csv, aus.csv, imu.csv and objects.csv into `dir`.
void write_raw_session(const RawSession& session, const std::string& dir, const std::string& comment = "");

}  // namespace lvssm
