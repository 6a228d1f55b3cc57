#include "lvssm/changepoint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "lvssm/error.hpp"
#include "lvssm/special_functions.hpp"

namespace lvssm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

class PartitionModel {
 public:
  PartitionModel(std::span<const double> centered, double p0, double w0)
      : n_(centered.size()), w0_(w0), prefix_(centered.size() + 1, 0.0) {
    for (std::size_t i = 0; i < n_; ++i) {
      prefix_[i + 1] = prefix_[i] + centered[i];
      total_ss_ += centered[i] * centered[i];
    }
    w_floor_ = 1e-10 * total_ss_ + 1e-300;
    const double nn = static_cast<double>(n_);
    log_prior_.assign(n_ + 1, kNegInf);
    for (std::size_t b = 1; b <= n_; ++b) {
      const double bb = static_cast<double>(b);
      log_prior_[b] = log_beta(bb, nn - bb + 1.0) + log_regularized_incomplete_beta(bb, nn - bb + 1.0, p0);
    }
  }

  // Sum of squares explained by block [s, e].
  double block_term(std::size_t s, std::size_t e) const {
    const double sum = prefix_[e + 1] - prefix_[s];
    return sum * sum / static_cast<double>(e - s + 1);
  }

  double block_mean(std::size_t s, std::size_t e) const {
    return (prefix_[e + 1] - prefix_[s]) / static_cast<double>(e - s + 1);
  }

  double within(double between) const { return std::max(total_ss_ - between, w_floor_); }

  double log_prior(std::size_t blocks) const { return log_prior_[blocks]; }

  // log of integral_0^w0 w^((b-1)/2) (W + B w)^(-(n-1)/2) dw; partitions with
  // b >= n - 2 blocks are excluded.
  double log_likelihood(std::size_t blocks, double between) const {
    if (blocks + 2 >= n_) return kNegInf;
    const double nn = static_cast<double>(n_);
    const double a = (static_cast<double>(blocks) - 1.0) / 2.0;
    const double B = blocks == 1 ? 0.0 : std::max(between, 0.0);
    return log_power_ratio_integral(a, (nn - 1.0) / 2.0, within(between), B, w0_);
  }

  // Posterior expectation of the shrinkage weight w given the partition.
  double expected_w(std::size_t blocks, double between) const {
    if (blocks == 1) return w0_ / 2.0;
    if (blocks + 4 >= n_) return 0.0;
    const double nn = static_cast<double>(n_);
    const double a = (static_cast<double>(blocks) - 1.0) / 2.0;
    const double c = (nn - 1.0) / 2.0;
    const double W = within(between), B = std::max(between, 0.0);
    return std::exp(log_power_ratio_integral(a + 1.0, c, W, B, w0_) -
                    log_power_ratio_integral(a, c, W, B, w0_));
  }

 private:
  std::size_t n_;
  double w0_;
  double total_ss_ = 0.0;
  double w_floor_ = 0.0;
  std::vector<double> prefix_;
  std::vector<double> log_prior_;
};

}  // namespace

BcpResult bcp(std::span<const double> series, const BcpOptions& options) {
  const std::size_t n = series.size();
  if (n < 3) throw DataError("bcp: series must have at least 3 values");
  if (!(options.iterations > options.burnin) || options.burnin < 0) {
    throw DataError("bcp: need iterations > burnin >= 0");
  }
  if (!(options.p0 > 0 && options.p0 <= 1) || !(options.w0 > 0 && options.w0 <= 1)) {
    throw DataError("bcp: prior bounds must lie in (0, 1]");
  }
  double mean = 0.0;
  for (double v : series) {
    if (!std::isfinite(v)) throw DataError("bcp: series contains missing values");
    mean += v;
  }
  mean /= static_cast<double>(n);
  std::vector<double> centered(n);
  for (std::size_t i = 0; i < n; ++i) centered[i] = series[i] - mean;

  PartitionModel model(centered, options.p0, options.w0);
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  // change[i] == 1 closes a block at i; change[n-1] is always 1.
  std::vector<char> change(n, 0);
  change[n - 1] = 1;
  std::vector<std::size_t> next_change(n, n - 1);

  BcpResult result;
  result.posterior_mean.assign(n, 0.0);
  result.change_prob.assign(n, 0.0);
  result.iterations = options.iterations;
  result.burnin = options.burnin;
  result.seed = options.seed;
  const int retained = options.iterations - options.burnin;

  for (int sweep = 0; sweep < options.iterations; ++sweep) {
    double between = 0.0;
    std::size_t blocks = 0;
    for (std::size_t s = 0, i = 0; i < n; ++i) {
      if (change[i]) {
        between += model.block_term(s, i);
        ++blocks;
        s = i + 1;
      }
    }
    for (std::size_t i = n - 1; i-- > 0;) next_change[i] = change[i + 1] ? i + 1 : next_change[i + 1];
    double current = model.log_likelihood(blocks, between);

    std::size_t block_start = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const std::size_t e = next_change[i];
      const double merged = model.block_term(block_start, e);
      const double split = model.block_term(block_start, i) + model.block_term(i + 1, e);
      const bool was_change = change[i] != 0;
      const double base = between - (was_change ? split : merged);
      const std::size_t b0 = blocks - (was_change ? 1 : 0);
      const double between0 = base + merged, between1 = base + split;
      const double lik0 = was_change ? model.log_likelihood(b0, between0) : current;
      const double lik1 = was_change ? current : model.log_likelihood(b0 + 1, between1);
      const double log_odds = model.log_prior(b0 + 1) - model.log_prior(b0) + lik1 - lik0;
      double prob_change;
      if (std::isnan(log_odds)) {
        prob_change = lik1 > lik0 ? 1.0 : 0.0;
      } else {
        prob_change = 1.0 / (1.0 + std::exp(-log_odds));
      }
      const bool now_change = uniform(rng) < prob_change;
      change[i] = now_change ? 1 : 0;
      blocks = b0 + (now_change ? 1 : 0);
      between = now_change ? between1 : between0;
      current = now_change ? lik1 : lik0;
      if (now_change) block_start = i + 1;
    }

    if (sweep < options.burnin) continue;
    const double w = model.expected_w(blocks, between);
    for (std::size_t s = 0, i = 0; i < n; ++i) {
      if (!change[i]) continue;
      const double fitted = mean + (1.0 - w) * model.block_mean(s, i);
      for (std::size_t j = s; j <= i; ++j) result.posterior_mean[j] += fitted;
      s = i + 1;
    }
    for (std::size_t i = 0; i + 1 < n; ++i) result.change_prob[i] += change[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    result.posterior_mean[i] /= retained;
    result.change_prob[i] /= retained;
  }
  result.change_prob[n - 1] = 0.0;
  return result;
}

SegmentBoundaries rare_events(std::span<const double> hr, const BcpResult& result,
                              const RareEventOptions& options) {
  const std::size_t n = hr.size();
  if (result.posterior_mean.size() != n || result.change_prob.size() != n) {
    throw DataError("rare_events: length mismatch between series and change-point result");
  }
  if (!(options.k > 0)) throw DataError("rare_events: k must be positive");
  if (!(options.prob_floor > 0 && options.prob_floor < 1)) {
    throw DataError("rare_events: prob_floor must lie in (0, 1)");
  }
  const auto& pm = result.posterior_mean;
  double mean = 0.0;
  std::size_t count = 0;
  for (double v : hr)
    if (std::isfinite(v)) mean += v, ++count;
  SegmentBoundaries out;
  out.k = options.k;
  if (count < 2) return out;
  mean /= static_cast<double>(count);
  double ss = 0.0;
  std::size_t terms = 0;
  for (std::size_t i = 0; i < n; ++i) {
    // A step inflates the whole-series sd by half its height, so the default
    // measures spread around the fitted levels instead.
    const double centre = options.scale == JumpScale::Residual ? pm[i] : mean;
    if (!std::isfinite(hr[i]) || !std::isfinite(centre)) continue;
    ss += (hr[i] - centre) * (hr[i] - centre);
    ++terms;
  }
  if (terms < 2) return out;
  const double threshold = options.k * std::sqrt(ss / static_cast<double>(terms - 1));

  const std::size_t h = options.jump_half_width;
  std::vector<std::size_t> candidates;  // index i: change between i and i+1
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (result.change_prob[i] < options.prob_floor) continue;
    const double before = pm[i >= h ? i - h : 0];
    const double after = pm[std::min(n - 1, i + 1 + h)];
    if (after - before > threshold) candidates.push_back(i);
  }
  for (std::size_t c = 0; c < candidates.size();) {
    std::size_t best = candidates[c];
    std::size_t d = c + 1;
    while (d < candidates.size() && candidates[d] - candidates[d - 1] <= options.merge_window) {
      if (result.change_prob[candidates[d]] > result.change_prob[best]) best = candidates[d];
      ++d;
    }
    out.indices.push_back(best + 1);
    c = d;
  }
  return out;
}

}  // namespace lvssm
