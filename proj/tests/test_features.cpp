#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <random>

#include "lvssm/error.hpp"
#include "lvssm/features.hpp"

using namespace lvssm;

namespace {

AoiSequence seq(std::initializer_list<int> states) {
  AoiSequence s;
  for (int v : states) s.emplace_back(v);
  return s;
}

// Entropy of the empirical transition model written out with plain counts.
double gte_by_counts(const std::vector<int>& s, int states) {
  std::vector<double> occupancy(states, 0.0);
  std::vector<std::vector<double>> counts(states, std::vector<double>(states, 0.0));
  for (std::size_t i = 0; i < s.size(); ++i) {
    occupancy[s[i]] += 1.0;
    if (i + 1 < s.size()) counts[s[i]][s[i + 1]] += 1.0;
  }
  double h = 0.0;
  for (int i = 0; i < states; ++i) {
    double out = 0.0;
    for (double c : counts[i]) out += c;
    if (out == 0.0) continue;
    double row = 0.0;
    for (double c : counts[i])
      if (c > 0.0) row -= (c / out) * std::log2(c / out);
    h += occupancy[i] / static_cast<double>(s.size()) * row;
  }
  return h;
}

}  // namespace

TEST(AoiGrid, CornerCell) {
  const AoiGrid g{0, 4, 0, 4, 4, 4};
  EXPECT_EQ(g.cell_of(0.5, 0.5), 0);
}

TEST(AoiGrid, BoundaryGoesToHigherCell) {
  const AoiGrid g{0, 4, 0, 4, 4, 4};
  EXPECT_EQ(g.cell_of(1.0, 0.5), 1);
  EXPECT_EQ(g.cell_of(0.5, 1.0), 4);
}

TEST(AoiGrid, DiagonalSamples) {
  const AoiGrid g{0, 4, 0, 4, 4, 4};
  const std::vector<double> d = {0.2, 0.9, 1.5, 2.0, 2.7, 3.9};
  const auto cells = bin_gaze(d, d, g);
  const std::vector<int> expected = {0, 0, 5, 10, 10, 15};
  ASSERT_EQ(cells.size(), expected.size());
  for (std::size_t i = 0; i < cells.size(); ++i) EXPECT_EQ(cells[i], expected[i]);
}

TEST(AoiGrid, NonFiniteSampleIsMissing) {
  const AoiGrid g{0, 4, 0, 4, 4, 4};
  const std::vector<double> x = {1.5, std::nan("")}, y = {1.5, 1.5};
  const auto cells = bin_gaze(x, y, g);
  EXPECT_TRUE(cells[0].has_value());
  EXPECT_FALSE(cells[1].has_value());
}

TEST(TransitionModel, Alternation) {
  const auto m = transition_model(seq({0, 1, 0, 1, 0}));
  EXPECT_DOUBLE_EQ(m.p(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(m.p(1, 0), 1.0);
  EXPECT_TRUE(m.irreducible());
}

TEST(TransitionModel, SingleState) {
  const auto m = transition_model(seq({0, 0, 0, 0}));
  ASSERT_EQ(m.states(), 1);
  EXPECT_DOUBLE_EQ(m.p(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(m.pi(0), 1.0);
}

TEST(TransitionModel, HandCounts) {
  const auto m = transition_model(seq({0, 0, 1, 0, 1, 1}));
  EXPECT_NEAR(m.p(0, 0), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(m.p(0, 1), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(m.p(1, 0), 0.5, 1e-15);
  EXPECT_NEAR(m.p(1, 1), 0.5, 1e-15);
}

TEST(TransitionModel, GapBreaksTransitions) {
  AoiSequence s = seq({0, 1, 0, 1});
  s[2].reset();
  const auto m = transition_model(s);
  EXPECT_EQ(m.counts.sum(), 1);
}

TEST(TransitionModel, FixedPointStationary) {
  const auto m = transition_model(seq({0, 0, 1, 0, 1, 1}), std::nullopt, StationaryEstimate::FixedPoint);
  const Eigen::RowVectorXd pi = m.pi.transpose();
  EXPECT_LT((pi * m.p - pi).norm(), 1e-12);
  EXPECT_NEAR(m.pi.sum(), 1.0, 1e-12);
}

TEST(Entropy, Sge) {
  const std::vector<double> uniform(16, 1.0 / 16.0);
  EXPECT_NEAR(sge(uniform), 4.0, 1e-12);
  const std::vector<double> one = {1.0};
  EXPECT_NEAR(sge(one), 0.0, 1e-12);
  const std::vector<double> dyadic = {0.5, 0.25, 0.25};
  EXPECT_NEAR(sge(dyadic), 1.5, 1e-12);
}

TEST(Entropy, GteFixtures) {
  EXPECT_NEAR(gte(transition_model(seq({0, 1, 0, 1, 0, 1}))), 0.0, 1e-12);

  TransitionModel uniform;
  uniform.p = Eigen::MatrixXd::Constant(4, 4, 0.25);
  uniform.pi = Eigen::VectorXd::Constant(4, 0.25);
  EXPECT_NEAR(gte(uniform), 2.0, 1e-12);

  const auto m = transition_model(seq({0, 0, 1, 0, 1, 1}));
  const double third = 1.0 / 3.0;
  const double hand = -(0.5 * (third * std::log2(third) + 2 * third * std::log2(2 * third)) +
                        0.5 * (0.5 * std::log2(0.5) + 0.5 * std::log2(0.5)));
  EXPECT_NEAR(gte(m), hand, 1e-12);
}

TEST(Entropy, BruteForceShortSequences) {
  // Every sequence of length 2..8 over three states; the acceptance run
  // extends this to length 12.
  for (int len = 2; len <= 8; ++len) {
    std::vector<int> s(static_cast<std::size_t>(len), 0);
    for (;;) {
      AoiSequence a(s.begin(), s.end());
      ASSERT_NEAR(gte(transition_model(a, 3)), gte_by_counts(s, 3), 1e-12);
      int k = 0;
      while (k < len && ++s[k] == 3) s[k++] = 0;
      if (k == len) break;
    }
  }
}

TEST(WindowedGte, AlternationIsZero) {
  AoiSequence s;
  for (int i = 0; i < 40; ++i) s.emplace_back(i % 2);
  const auto w = windowed_gte(s, 10, 1);
  for (double v : w.value) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(WindowedGte, FullWindowEqualsGte) {
  const auto s = seq({0, 2, 1, 1, 0, 2, 2, 1, 0, 0});
  const auto w = windowed_gte(s, s.size(), 1);
  ASSERT_EQ(w.value.size(), 1u);
  EXPECT_NEAR(w.value[0], gte(transition_model(s)), 1e-14);
}

TEST(WindowedGte, RisesWhenMixingStarts) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> state(0, 3);
  AoiSequence s;
  for (int i = 0; i < 400; ++i) s.emplace_back(i % 2);
  for (int i = 0; i < 400; ++i) s.emplace_back(state(rng));
  const auto w = windowed_gte(s, 200, 50, 4);
  EXPECT_NEAR(w.value.front(), 0.0, 1e-12);
  EXPECT_GT(w.value.back(), 1.7);
  for (std::size_t k = 0; k < w.value.size(); ++k) {
    AoiSequence sub(s.begin() + static_cast<std::ptrdiff_t>(k * 50),
                    s.begin() + static_cast<std::ptrdiff_t>(k * 50 + 200));
    EXPECT_NEAR(w.value[k], gte(transition_model(sub, 4)), 1e-12);
  }
}

TEST(Imu, AboveMeanIndicator) {
  const std::vector<double> constant(10, 2.0);
  for (int v : above_mean_indicator(constant)) EXPECT_EQ(v, 0);
  std::vector<double> spike(10, 1.0);
  spike[6] = 9.0;
  const auto ind = above_mean_indicator(spike);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(ind[i], i == 6 ? 1 : 0);
  const std::vector<double> small = {1, 1, 4};
  EXPECT_EQ(above_mean_indicator(small), (std::vector<int>{0, 0, 1}));
}

TEST(Imu, SpikeLandsInItsSecond) {
  std::vector<double> t, ax, ay, az, gx, gy, gz;
  for (int i = 0; i < 50; ++i) {
    t.push_back(i * 0.1);
    ax.push_back(0.0);
    ay.push_back(0.0);
    az.push_back(1.0);
    gx.push_back(0.0);
    gy.push_back(0.0);
    gz.push_back(0.0);
  }
  ax[23] = 5.0;
  const auto act = imu_activity(t, {std::span<const double>(ax), ay, az}, {std::span<const double>(gx), gy, gz});
  ASSERT_EQ(act.per_second.size(), 5u);
  for (int s = 0; s < 5; ++s) EXPECT_EQ(act.per_second[s], s == 2 ? 1.0 : 0.0);
}

namespace {

FeatureSeries flat_series(std::size_t len) {
  FeatureSeries f;
  for (std::size_t i = 0; i < len; ++i) f.grid.push_back(static_cast<double>(i));
  f.hr.assign(len, 70.0);
  f.bcp_mean.assign(len, 70.0);
  f.bcp_prob.assign(len, 0.0);
  for (const auto& au : action_unit_names()) f.action_units[au].assign(len, 1.0);
  f.gte.assign(len, 1.0);
  f.road_users.assign(len, 2.0);
  f.hand_activity.assign(len, 0.0);
  return f;
}

}  // namespace

TEST(FeatureTable, TwelveColumns) {
  const auto t = assemble_feature_table(flat_series(100));
  EXPECT_EQ(t.rows(), 100u);
  EXPECT_EQ(t.cols(), 12u);
  EXPECT_EQ(feature_observation_columns().size() + feature_input_columns().size(), 12u);
}

TEST(FeatureTable, GridMismatchRejected) {
  auto f = flat_series(100);
  f.gte.pop_back();
  EXPECT_THROW(assemble_feature_table(f), DataError);
}

TEST(FeatureTable, ActionUnitsClamped) {
  auto f = flat_series(10);
  f.action_units["AU12"][3] = 5.3;
  f.action_units["AU12"][4] = -0.2;
  const auto t = assemble_feature_table(f);
  EXPECT_DOUBLE_EQ(t.column("AU12")[3], 5.0);
  EXPECT_DOUBLE_EQ(t.column("AU12")[4], 0.0);
}
