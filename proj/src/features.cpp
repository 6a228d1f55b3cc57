#include "lvssm/features.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "lvssm/error.hpp"

namespace lvssm {

AoiGrid AoiGrid::from_range(std::span<const double> gaze_x, std::span<const double> gaze_y,
                            int rows, int cols) {
  AoiGrid g;
  g.rows = rows;
  g.cols = cols;
  g.x_min = g.y_min = std::numeric_limits<double>::infinity();
  g.x_max = g.y_max = -std::numeric_limits<double>::infinity();
  const std::size_t n = std::min(gaze_x.size(), gaze_y.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(gaze_x[i]) || !std::isfinite(gaze_y[i])) continue;
    g.x_min = std::min(g.x_min, gaze_x[i]);
    g.x_max = std::max(g.x_max, gaze_x[i]);
    g.y_min = std::min(g.y_min, gaze_y[i]);
    g.y_max = std::max(g.y_max, gaze_y[i]);
  }
  if (!std::isfinite(g.x_min)) throw DataError("aoi grid: no finite gaze samples");
  g.validate();
  return g;
}

void AoiGrid::validate() const {
  if (rows < 1 || cols < 1) throw DataError("aoi grid: rows and cols must be positive");
  if (!(x_max > x_min) || !(y_max > y_min)) throw DataError("aoi grid: degenerate gaze range");
}

int AoiGrid::cell_of(double x, double y) const {
  auto bin = [](double v, double lo, double hi, int k) {
    int b = static_cast<int>(std::floor((v - lo) * k / (hi - lo)));
    return std::clamp(b, 0, k - 1);
  };
  return bin(y, y_min, y_max, rows) * cols + bin(x, x_min, x_max, cols);
}

AoiSequence bin_gaze(std::span<const double> gaze_x, std::span<const double> gaze_y,
                     const AoiGrid& grid) {
  if (gaze_x.size() != gaze_y.size()) throw DataError("bin_gaze: series lengths differ");
  if (gaze_x.empty()) throw DataError("bin_gaze: empty series");
  grid.validate();
  AoiSequence out(gaze_x.size());
  for (std::size_t i = 0; i < gaze_x.size(); ++i) {
    if (std::isfinite(gaze_x[i]) && std::isfinite(gaze_y[i])) out[i] = grid.cell_of(gaze_x[i], gaze_y[i]);
  }
  return out;
}

bool TransitionModel::irreducible() const {
  const int k = states();
  for (int s = 0; s < k; ++s) {
    std::vector<bool> seen(static_cast<std::size_t>(k), false);
    std::queue<int> frontier;
    frontier.push(s);
    seen[static_cast<std::size_t>(s)] = true;
    int reached = 1;
    while (!frontier.empty()) {
      int i = frontier.front();
      frontier.pop();
      for (int j = 0; j < k; ++j) {
        if (counts(i, j) > 0 && !seen[static_cast<std::size_t>(j)]) {
          seen[static_cast<std::size_t>(j)] = true;
          ++reached;
          frontier.push(j);
        }
      }
    }
    if (reached != k) return false;
  }
  return true;
}

Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& p) {
  const Eigen::Index k = p.rows();
  Eigen::MatrixXd system(k + 1, k);
  system.topRows(k) = p.transpose() - Eigen::MatrixXd::Identity(k, k);
  system.row(k).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k + 1);
  rhs(k) = 1.0;
  Eigen::VectorXd pi = system.colPivHouseholderQr().solve(rhs);
  pi = pi.cwiseMax(0.0);
  return pi / pi.sum();
}

TransitionModel transition_model(const AoiSequence& aoi, std::optional<int> states,
                                 StationaryEstimate estimate) {
  int k = 0;
  for (const auto& s : aoi) {
    if (!s) continue;
    if (*s < 0) throw DataError("transition_model: negative AOI index");
    k = std::max(k, *s + 1);
  }
  if (states) {
    if (*states < k) throw DataError("transition_model: AOI index exceeds state count");
    k = *states;
  }
  TransitionModel m;
  m.counts = Eigen::MatrixXi::Zero(k, k);
  Eigen::VectorXd occupancy = Eigen::VectorXd::Zero(k);
  long transitions = 0;
  for (std::size_t i = 0; i < aoi.size(); ++i) {
    if (!aoi[i]) continue;
    occupancy(*aoi[i]) += 1.0;
    if (i + 1 < aoi.size() && aoi[i + 1]) {
      ++m.counts(*aoi[i], *aoi[i + 1]);
      ++transitions;
    }
  }
  if (transitions == 0) throw DataError("transition_model: no valid transitions");
  m.p = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i < k; ++i) {
    const double departures = m.counts.row(i).sum();
    if (departures > 0) m.p.row(i) = m.counts.row(i).cast<double>() / departures;
  }
  if (estimate == StationaryEstimate::EmpiricalOccupancy) {
    m.pi = occupancy / occupancy.sum();
  } else {
    m.pi = stationary_distribution(m.p);
  }
  return m;
}

double sge(std::span<const double> occupancy) {
  double total = 0.0;
  for (double p : occupancy) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw DataError("sge: invalid probability vector");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DataError("sge: probabilities do not sum to 1");
  double h = 0.0;
  for (double p : occupancy)
    if (p > 0.0) h -= p * std::log2(p);
  return h;
}

double gte(const TransitionModel& model) {
  double h = 0.0;
  for (int i = 0; i < model.states(); ++i) {
    double row = 0.0;
    for (int j = 0; j < model.states(); ++j) {
      const double pij = model.p(i, j);
      if (pij > 0.0) row -= pij * std::log2(pij);
    }
    h += model.pi(i) * row;
  }
  return h;
}

EntropySeries windowed_gte(const AoiSequence& aoi, std::size_t window, std::size_t step,
                           std::optional<int> states) {
  if (window < 2) throw DataError("windowed_gte: window must be >= 2");
  if (step < 1) throw DataError("windowed_gte: step must be >= 1");
  if (window > aoi.size()) throw DataError("windowed_gte: window longer than sequence");
  EntropySeries out;
  for (std::size_t start = 0; start + window <= aoi.size(); start += step) {
    AoiSequence sub(aoi.begin() + static_cast<std::ptrdiff_t>(start),
                    aoi.begin() + static_cast<std::ptrdiff_t>(start + window));
    out.end_index.push_back(start + window - 1);
    try {
      out.value.push_back(gte(transition_model(sub, states)));
    } catch (const DataError&) {
      out.value.push_back(kMissing);
    }
  }
  return out;
}

std::vector<int> above_mean_indicator(std::span<const double> magnitudes) {
  // Mean accumulated as offsets from the first finite value so a constant
  // series reproduces its value exactly.
  double anchor = kMissing;
  double offset = 0.0;
  std::size_t n = 0;
  for (double v : magnitudes) {
    if (!std::isfinite(v)) continue;
    if (n == 0) anchor = v;
    offset += v - anchor;
    ++n;
  }
  std::vector<int> out(magnitudes.size(), 0);
  if (n == 0) return out;
  const double mean = anchor + offset / static_cast<double>(n);
  for (std::size_t i = 0; i < magnitudes.size(); ++i) {
    if (std::isfinite(magnitudes[i]) && magnitudes[i] > mean) out[i] = 1;
  }
  return out;
}

ImuActivity imu_activity(std::span<const double> timestamps,
                         const std::array<std::span<const double>, 3>& accel,
                         const std::array<std::span<const double>, 3>& gyro) {
  const std::size_t n = timestamps.size();
  if (n == 0) throw DataError("imu_activity: empty input");
  for (int a = 0; a < 3; ++a) {
    if (accel[a].size() != n || gyro[a].size() != n) {
      throw DataError("imu_activity: axis lengths differ");
    }
  }
  std::vector<double> accel_mag(n), gyro_mag(n);
  for (std::size_t i = 0; i < n; ++i) {
    accel_mag[i] = std::sqrt(accel[0][i] * accel[0][i] + accel[1][i] * accel[1][i] + accel[2][i] * accel[2][i]);
    gyro_mag[i] = std::sqrt(gyro[0][i] * gyro[0][i] + gyro[1][i] * gyro[1][i] + gyro[2][i] * gyro[2][i]);
  }
  auto accel_hi = above_mean_indicator(accel_mag);
  auto gyro_hi = above_mean_indicator(gyro_mag);

  ImuActivity out;
  out.per_sample.resize(n);
  double t_max = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.per_sample[i] = (accel_hi[i] || gyro_hi[i]) ? 1 : 0;
    if (std::isfinite(timestamps[i])) t_max = std::max(t_max, timestamps[i]);
  }
  // Seconds without samples report no exceedance.
  out.per_second.assign(static_cast<std::size_t>(std::floor(t_max)) + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(timestamps[i]) || timestamps[i] < 0) continue;
    auto s = static_cast<std::size_t>(std::floor(timestamps[i]));
    out.per_second[s] = std::max(out.per_second[s], static_cast<double>(out.per_sample[i]));
  }
  return out;
}

const std::vector<std::string>& feature_observation_columns() {
  static const std::vector<std::string> names = {"HR",  "BCP_mean", "AU1",  "AU2",  "AU6",
                                                 "AU7", "AU12",     "AU15", "AU25", "GTE"};
  return names;
}

const std::vector<std::string>& feature_input_columns() {
  static const std::vector<std::string> names = {"road_users", "hand_activity"};
  return names;
}

TimeSeriesTable assemble_feature_table(const FeatureSeries& s) {
  const std::size_t n = s.grid.size();
  auto check = [n](const std::vector<double>& v, const std::string& name) {
    if (v.size() != n) {
      throw DataError("assemble_feature_table: grid mismatch for '" + name + "' (" +
                      std::to_string(v.size()) + " rows, grid has " + std::to_string(n) + ")");
    }
  };
  check(s.hr, "HR");
  check(s.bcp_mean, "BCP_mean");
  check(s.bcp_prob, "BCP_prob");
  check(s.gte, "GTE");
  check(s.road_users, "road_users");
  check(s.hand_activity, "hand_activity");

  std::vector<std::string> names;
  std::vector<std::vector<double>> cols;
  auto add = [&](const std::string& name, std::vector<double> v) {
    names.push_back(name);
    cols.push_back(std::move(v));
  };
  add("HR", s.hr);
  add("BCP_mean", s.bcp_mean);
  for (const auto& au : action_unit_names()) {
    auto it = s.action_units.find(au);
    if (it == s.action_units.end()) throw DataError("assemble_feature_table: missing " + au);
    check(it->second, au);
    std::vector<double> v = it->second;
    for (double& x : v)
      if (!std::isnan(x)) x = std::clamp(x, 0.0, 5.0);
    add(au, std::move(v));
  }
  add("GTE", s.gte);
  add("road_users", s.road_users);
  add("hand_activity", s.hand_activity);
  return TimeSeriesTable(s.grid, std::move(names), std::move(cols));
}

}  // namespace lvssm
