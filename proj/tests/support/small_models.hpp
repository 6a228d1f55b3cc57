#pragma once

// Small specs that fit in well under a second, for estimation tests.

#include <random>
#include <string>

#include "lvssm/estimation.hpp"
#include "lvssm/kalman.hpp"
#include "lvssm/model_spec.hpp"

namespace small {

using namespace lvssm;

/// Two latents, four indicators (two per latent), one input, correlated latent
/// noise with unit variances.
inline ModelSpec two_factor(bool with_input = true) {
  ModelSpec s;
  s.name = "small_two_factor";
  s.latents = {"f1", "f2"};
  s.observations = {"y1", "y2", "y3", "y4"};
  if (with_input) s.inputs = {"u"};
  const int p = s.p();
  s.C = ConstraintMatrix(4, 2);
  s.C(0, 0) = Free{"Z11"};
  s.C(1, 0) = Free{"Z21"};
  s.C(2, 1) = Free{"Z32"};
  s.C(3, 1) = Free{"Z42"};
  s.A = ConstraintMatrix(2, 2);
  s.A(0, 0) = Free{"b1"};
  s.A(1, 0) = Free{"b2"};
  s.A(0, 1) = Free{"b3"};
  s.A(1, 1) = Free{"b4"};
  s.B = ConstraintMatrix(2, p);
  for (int k = 0; k < p; ++k) {
    s.B(0, k) = Free{"C1" + std::to_string(k + 1)};
    s.B(1, k) = Free{"C2" + std::to_string(k + 1)};
  }
  s.D = ConstraintMatrix(4, p);
  s.Q = ConstraintMatrix(2, 2, Fixed{1.0});
  s.Q.set_symmetric(1, 0, "q2");
  s.R = ConstraintMatrix(4, 4);
  for (int i = 0; i < 4; ++i) s.R(i, i) = Free{"r" + std::to_string(i + 1)};
  s.x0 = ConstraintMatrix(2, 1);
  s.P0 = ConstraintMatrix(2, 2);
  s.P0(0, 0) = Fixed{5.0};
  s.P0(1, 1) = Fixed{5.0};
  s.standardize = false;
  return s;
}

/// Two-factor truth: transitions 0.8 / 0.6, input effects 0.5 / -0.3,
/// latent noise correlation `q2`.
inline ParamSet two_factor_truth(const ModelSpec& spec, double q2 = 0.3) {
  ParamSet ps;
  ps.A = (Eigen::MatrixXd(2, 2) << 0.8, 0.0, 0.0, 0.6).finished();
  ps.B = Eigen::MatrixXd(2, spec.p());
  if (spec.p() > 0) ps.B.col(0) = Eigen::Vector2d(0.5, -0.3);
  ps.C = Eigen::MatrixXd::Zero(4, 2);
  ps.C(0, 0) = 1.0;
  ps.C(1, 0) = 0.7;
  ps.C(2, 1) = 0.9;
  ps.C(3, 1) = 0.6;
  ps.D = Eigen::MatrixXd::Zero(4, spec.p());
  ps.Q = (Eigen::MatrixXd(2, 2) << 1.0, q2, q2, 1.0).finished();
  ps.R = Eigen::Vector4d(0.5, 0.4, 0.6, 0.3).asDiagonal();
  ps.x0 = Eigen::VectorXd::Zero(2);
  ps.P0 = 5.0 * Eigen::MatrixXd::Identity(2, 2);
  return ps;
}

/// One simulated sequence with a persistent +-1 input.
inline FitData simulate_data(const ParamSet& truth, int steps, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::bernoulli_distribution flip(0.05);
  Eigen::MatrixXd u(truth.inputs(), steps);
  double level = 1.0;
  for (int t = 0; t < steps; ++t) {
    if (flip(rng)) level = -level;
    if (u.rows() > 0) u(0, t) = level;
  }
  const auto sim = simulate(truth, u, steps, seed);
  FitData data;
  data.sequences.push_back(Sequence{sim.y, u});
  data.fingerprint = fingerprint(data.sequences);
  return data;
}

/// Random parameter point of `spec` with stable transitions and variances in
/// [0.3, 1.5].
inline ParamSet random_point(const ModelSpec& spec, std::mt19937_64& rng) {
  const ParamLayout layout = ParamLayout::from_spec(spec);
  std::uniform_real_distribution<double> unif(-0.6, 0.6), var(0.3, 1.5), cov(-0.5, 0.5);
  Eigen::VectorXd v(static_cast<Eigen::Index>(layout.size()));
  for (std::size_t k = 0; k < layout.size(); ++k) {
    double x = unif(rng);
    if (layout.kinds[k] == ParamKind::Variance) x = var(rng);
    if (layout.kinds[k] == ParamKind::Covariance) x = cov(rng);
    v(static_cast<Eigen::Index>(k)) = x;
  }
  return unpack(v, spec);
}

}  // namespace small
