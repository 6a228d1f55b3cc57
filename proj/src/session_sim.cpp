#include "lvssm/session_sim.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>

#include "lvssm/error.hpp"
#include "lvssm/features.hpp"
#include "lvssm/kalman.hpp"

namespace lvssm {

namespace {

// Steps per phase simulated and discarded before recording; 0.98^300 < 0.003.
constexpr int kBurnInSteps = 300;

// Independent generator streams derived from one user seed.
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

ParamSet reference_truth(const ModelSpec& spec) {
  static const std::map<std::string, double> values = {
      {"Z11", 0.8},  {"Z21", 0.4},  {"Z41", 0.6}, {"Z61", 0.5}, {"Z71", 0.7},
      {"Z22", 0.3},  {"Z32", 0.6},  {"Z52", 0.5}, {"Z82", 0.4}, {"Z92", 0.7},
      {"b1", 0.88},  {"b2", -0.04}, {"b3", 0.05}, {"b4", 0.98},
      {"C11", 0.3},  {"C21", 0.2},  {"C12", 0.5}, {"C22", -0.4},
      {"q2", 0.3},
  };
  const ParamLayout layout = ParamLayout::from_spec(spec);
  Eigen::VectorXd v(static_cast<Eigen::Index>(layout.size()));
  for (std::size_t k = 0; k < layout.size(); ++k) {
    double x = 0.0;
    if (auto it = values.find(layout.labels[k]); it != values.end()) {
      x = it->second;
    } else if (layout.kinds[k] == ParamKind::Variance) {
      x = 1.0;
    }
    v(static_cast<Eigen::Index>(k)) = x;
  }
  ParamSet ps;
  unpack_into(v, spec, layout, ps);
  return ps;
}

Eigen::MatrixXd simulate_inputs(const std::vector<std::string>& inputs, int steps, std::uint64_t seed) {
  Eigen::MatrixXd u(static_cast<Eigen::Index>(inputs.size()), steps);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto rng = stream(seed, 0x1000 + k);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const auto row = static_cast<Eigen::Index>(k);
    if (inputs[k] == "road_users") {
      int count = 3;
      for (int t = 0; t < steps; ++t) {
        const double r = unif(rng);
        if (r < 0.1) count = std::max(0, count - 1);
        else if (r < 0.2) count = std::min(8, count + 1);
        u(row, t) = count;
      }
    } else if (inputs[k] == "hand_activity") {
      int state = 0;
      for (int t = 0; t < steps; ++t) {
        if (unif(rng) < 0.05) state = 1 - state;
        u(row, t) = state;
      }
    } else {
      std::normal_distribution<double> normal(0.0, 1.0);
      for (int t = 0; t < steps; ++t) u(row, t) = normal(rng);
    }
  }
  return u;
}

SimulatedSession simulate_session(const ModelSpec& spec, const ParamSet& truth, int steps, std::uint64_t seed,
                                  int stride) {
  if (steps < 1) throw ConfigError("simulate: need at least one step");
  if (stride < 1 || stride > steps) throw ConfigError("simulate: stride must be in [1, steps]");
  truth.validate();
  // A burn-in driven by the same input process puts the recorded part in its
  // stationary regime instead of starting every phase from x0.
  const int burn = kBurnInSteps * stride;
  const Eigen::MatrixXd all_u = simulate_inputs(spec.inputs, burn + steps, seed);
  const Eigen::MatrixXd u = all_u.rightCols(steps);
  const int m = truth.latents();
  const int n = truth.observations();
  Eigen::MatrixXd x(m, steps), y(n, steps);
  for (int phase = 0; phase < stride; ++phase) {
    const int len = (steps - phase + stride - 1) / stride;
    Eigen::MatrixXd up(u.rows(), kBurnInSteps + len);
    for (int j = 0; j < kBurnInSteps + len; ++j) up.col(j) = all_u.col(phase + j * stride);
    const SimulationOutput sim =
        simulate(truth, up, kBurnInSteps + len, seed * 1000003ULL + static_cast<std::uint64_t>(phase));
    for (int j = 0; j < len; ++j) {
      x.col(phase + j * stride) = sim.x.col(kBurnInSteps + j);
      y.col(phase + j * stride) = sim.y.col(kBurnInSteps + j);
    }
  }
  std::vector<double> t(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) t[static_cast<std::size_t>(i)] = i;
  std::vector<std::string> names;
  std::vector<std::vector<double>> cols;
  for (int i = 0; i < n; ++i) {
    names.push_back(spec.observations[static_cast<std::size_t>(i)]);
    std::vector<double> c(static_cast<std::size_t>(steps));
    for (int s = 0; s < steps; ++s) c[static_cast<std::size_t>(s)] = y(i, s);
    cols.push_back(std::move(c));
  }
  for (int k = 0; k < spec.p(); ++k) {
    names.push_back(spec.inputs[static_cast<std::size_t>(k)]);
    std::vector<double> c(static_cast<std::size_t>(steps));
    for (int s = 0; s < steps; ++s) c[static_cast<std::size_t>(s)] = u(k, s);
    cols.push_back(std::move(c));
  }
  SimulatedSession out;
  out.features = TimeSeriesTable(std::move(t), std::move(names), std::move(cols));
  out.latent = std::move(x);
  return out;
}

RawSession simulate_raw_session(const ModelSpec& spec, const ParamSet& truth, int seconds, std::uint64_t seed,
                                int stride) {
  if (seconds < 120) throw ConfigError("simulate: a raw session needs at least 120 seconds");
  const SimulatedSession sim = simulate_session(spec, truth, seconds, seed, stride);
  const TimeSeriesTable& f = sim.features;
  auto column = [&](const std::string& name) -> std::vector<double> {
    if (!f.has_column(name)) throw ConfigError("simulate: spec lacks column '" + name + "'");
    return f.column(name);
  };
  const auto T = static_cast<std::size_t>(seconds);
  std::vector<double> t1(T);
  for (std::size_t i = 0; i < T; ++i) t1[i] = static_cast<double>(i);

  RawSession raw;

  // Heart rate with a sustained rise partway through the drive.
  {
    const auto y = column("HR");
    std::vector<double> hr(T);
    const std::size_t rise = T * 2 / 5;
    for (std::size_t i = 0; i < T; ++i) hr[i] = 72.0 + 2.0 * y[i] + (i >= rise ? 12.0 : 0.0);
    raw.hr = TimeSeriesTable(t1, {"hr"}, {hr});
  }

  // Action units with occasional face-tracking dropouts.
  {
    auto rng = stream(seed, 0x2000);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<std::string> names;
    std::vector<std::vector<double>> cols;
    for (const auto& au : action_unit_names()) {
      const auto y = column(au);
      std::vector<double> v(T);
      for (std::size_t i = 0; i < T; ++i) v[i] = std::clamp(1.5 + 0.5 * y[i], 0.0, 5.0);
      names.push_back(au);
      cols.push_back(std::move(v));
    }
    for (std::size_t i = 0; i < T; ++i) {
      if (unif(rng) < 0.01) {
        for (auto& c : cols) c[i] = kMissing;
      }
    }
    raw.aus = TimeSeriesTable(t1, names, cols);
  }

  const int rate = 10;
  const std::size_t fast = T * static_cast<std::size_t>(rate);
  std::vector<double> tf(fast);
  for (std::size_t i = 0; i < fast; ++i) tf[i] = static_cast<double>(i) / rate;

  // Gaze: a 4x4 grid of cells over +-30 x +-20 degrees; the switching rate
  // follows the GTE indicator.
  {
    const auto g = column("GTE");
    auto rng = stream(seed, 0x3000);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_int_distribution<int> cell_dist(0, 15);
    std::vector<double> gx(fast), gy(fast);
    int cell = 5;
    for (std::size_t i = 0; i < fast; ++i) {
      const double z = g[i / rate];
      const double p_switch = 0.02 + 0.3 / (1.0 + std::exp(-0.5 * z));
      if (unif(rng) < p_switch) cell = cell_dist(rng);
      const int row = cell / 4, col = cell % 4;
      gx[i] = -30.0 + (col + unif(rng)) * 15.0;
      gy[i] = -20.0 + (row + unif(rng)) * 10.0;
    }
    raw.gaze = TimeSeriesTable(tf, {"gaze_x", "gaze_y"}, {gx, gy});
  }

  // IMU: bursts of wrist motion while the hand-activity input is on.
  {
    std::vector<double> hand(T, 0.0);
    if (f.has_column("hand_activity")) hand = f.column("hand_activity");
    auto rng = stream(seed, 0x4000);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::vector<double>> axes(6, std::vector<double>(fast));
    for (std::size_t i = 0; i < fast; ++i) {
      const bool active = hand[i / rate] > 0.5;
      const double accel_sd = active ? 1.5 : 0.05;
      const double gyro_sd = active ? 0.8 : 0.02;
      axes[0][i] = accel_sd * normal(rng);
      axes[1][i] = accel_sd * normal(rng);
      axes[2][i] = 9.81 + accel_sd * normal(rng);
      axes[3][i] = gyro_sd * normal(rng);
      axes[4][i] = gyro_sd * normal(rng);
      axes[5][i] = gyro_sd * normal(rng);
    }
    raw.imu = TimeSeriesTable(tf, {"accel_x", "accel_y", "accel_z", "gyro_x", "gyro_y", "gyro_z"}, axes);
  }

  {
    std::vector<double> road(T, 0.0);
    if (f.has_column("road_users")) road = f.column("road_users");
    raw.objects = TimeSeriesTable(t1, {"road_users"}, {road});
  }
  return raw;
}

void write_raw_session(const RawSession& s, const std::string& dir, const std::string& comment) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  write_csv(s.hr, (base / "hr.csv").string(), "t", comment);
  write_csv(s.gaze, (base / "gaze.csv").string(), "t", comment);
  write_csv(s.aus, (base / "aus.csv").string(), "t", comment);
  write_csv(s.imu, (base / "imu.csv").string(), "t", comment);
  write_csv(s.objects, (base / "objects.csv").string(), "t", comment);
}

}  // namespace lvssm
