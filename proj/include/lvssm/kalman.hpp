#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "lvssm/model_spec.hpp"

namespace lvssm {

/// One contiguous observation sequence. Column t holds time step t + 1 (the
/// state prior x_0 ~ N(x0, P0) precedes the first column). NaN in `y` marks a
/// missing entry; `u` must be complete.
struct Sequence {
  Eigen::MatrixXd y;  // n x T
  Eigen::MatrixXd u;  // p x T (p may be 0)

  int steps() const { return static_cast<int>(y.cols()); }
};

using SequenceSet = std::vector<Sequence>;

enum class FilterMethod {
  Auto,         // information form when R is diagonal and positive, covariance form otherwise
  Covariance,   // factorizes the innovation covariance at every step
  Information,  // requires diagonal, positive R
};

struct FilterOptions {
  FilterMethod method = FilterMethod::Auto;
  bool joseph = false;
  /// Keep per-step innovation covariances and gains (observed rows only).
  bool keep_details = false;
  /// Reuse the gain once the predicted covariance has stopped changing and
  /// the missing pattern repeats.
  bool steady_state = true;
};

struct FilterOutput {
  Eigen::MatrixXd predicted_mean;  // m x T
  Eigen::MatrixXd predicted_cov;   // m x (m*T), block t is P_{t|t-1}
  Eigen::MatrixXd filtered_mean;   // m x T
  Eigen::MatrixXd filtered_cov;    // m x (m*T)
  Eigen::MatrixXd innovation;      // n x T, NaN where the entry was missing
  Eigen::VectorXd initial_mean;
  Eigen::MatrixXd initial_cov;
  double minus2ll = 0.0;
  long observed_entries = 0;
  std::vector<int> jittered_steps;

  // Only with FilterOptions::keep_details.
  std::vector<std::vector<int>> observed;       // observed row indices per step
  std::vector<Eigen::MatrixXd> innovation_cov;  // S_t over observed rows
  std::vector<Eigen::MatrixXd> gain;            // K_t, m x (observed rows)

  int steps() const { return static_cast<int>(predicted_mean.cols()); }
  int latents() const { return static_cast<int>(predicted_mean.rows()); }
  auto P_pred(int t) const { return predicted_cov.middleCols(static_cast<Eigen::Index>(t) * latents(), latents()); }
  auto P_filt(int t) const { return filtered_cov.middleCols(static_cast<Eigen::Index>(t) * latents(), latents()); }
};

FilterOutput kalman_filter(const ParamSet& params, const Sequence& seq, const FilterOptions& options = {});

/// -2 log-likelihood from a filter pass (sum of per-step prediction-error terms).
inline double minus_two_log_likelihood(const FilterOutput& f) { return f.minus2ll; }

/// -2 log-likelihood of one sequence without storing filter states.
double minus_two_log_likelihood(const ParamSet& params, const Sequence& seq, const FilterOptions& options = {});
/// Sum over independent sequences.
double minus_two_log_likelihood(const ParamSet& params, const SequenceSet& data, const FilterOptions& options = {});

struct SmootherOutput {
  Eigen::MatrixXd mean;     // m x T, x_{t|T}
  Eigen::MatrixXd cov;      // m x (m*T), P_{t|T}
  Eigen::MatrixXd lag_cov;  // m x (m*T), block t is Cov(x_t, x_{t-1} | all data); block 0 pairs with x_0
  Eigen::VectorXd initial_mean;  // x_{0|T}
  Eigen::MatrixXd initial_cov;   // P_{0|T}
  std::vector<int> pseudo_inverse_steps;

  int steps() const { return static_cast<int>(mean.cols()); }
  int latents() const { return static_cast<int>(mean.rows()); }
  auto P(int t) const { return cov.middleCols(static_cast<Eigen::Index>(t) * latents(), latents()); }
  auto P_lag(int t) const { return lag_cov.middleCols(static_cast<Eigen::Index>(t) * latents(), latents()); }
};

/// Rauch-Tung-Striebel fixed-interval smoother.
SmootherOutput rts_smoother(const ParamSet& params, const FilterOutput& filter);

struct SimulationOutput {
  Eigen::MatrixXd x;  // m x T
  Eigen::MatrixXd y;  // n x T
};

/// Draws from the model starting at x_0 = x0. `u` is p x T (an empty matrix
/// means zero inputs).
SimulationOutput simulate(const ParamSet& params, const Eigen::MatrixXd& u, int steps, std::uint64_t seed);

/// Symmetric factor L with L L' = S for a PSD matrix (eigenvalues below
/// 1e-12 of the largest are treated as zero). Throws NumericalError when S has
/// a materially negative eigenvalue.
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& s, const char* name);

/// Solution of Sigma = A Sigma A' + Q; throws NumericalError when the spectral
/// radius of A is at least 1.
Eigen::MatrixXd stationary_covariance(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q);

double spectral_radius(const Eigen::MatrixXd& A);

}  // namespace lvssm
