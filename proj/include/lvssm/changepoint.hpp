#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace lvssm {

struct BcpOptions {
  int iterations = 500;  // total Gibbs sweeps, burn-in included
  int burnin = 50;
  std::uint64_t seed = 1;
  double p0 = 0.2;  // upper bound of the uniform prior on the change probability
  double w0 = 0.2;  // upper bound of the uniform prior on the signal-to-noise ratio
};

struct BcpResult {
  std::vector<double> posterior_mean;
  /// change_prob[i]: posterior probability of a change between i and i+1
  /// (the final entry is 0).
  std::vector<double> change_prob;
  int iterations = 0;
  int burnin = 0;
  std::uint64_t seed = 0;
};

/// Product-partition change-point analysis of a piecewise-constant mean
/// (Barry-Hartigan model), sampled with a Gibbs sweep over change indicators.
BcpResult bcp(std::span<const double> series, const BcpOptions& options = {});

struct SegmentBoundaries {
  std::vector<std::size_t> indices;  // first index of each new segment
  double k = 2.0;
};

enum class JumpScale {
  Residual,  // sd of hr around the posterior mean (noise level within segments)
  Series,    // sd of the whole hr series, level shifts included
};

struct RareEventOptions {
  double k = 2.0;
  JumpScale scale = JumpScale::Residual;
  double prob_floor = 0.5;
  std::size_t merge_window = 5;  // samples
  std::size_t jump_half_width = 2;
};

/// Boundaries where the change probability reaches prob_floor and the
/// posterior mean rises by more than k * sd across the index (posterior
/// means compared jump_half_width samples on either side); `scale` picks the
/// sd. Qualifying indices
/// within merge_window of each other collapse onto the most probable one.
SegmentBoundaries rare_events(std::span<const double> hr, const BcpResult& bcp,
                              const RareEventOptions& options = {});

}  // namespace lvssm
