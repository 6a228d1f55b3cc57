#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "lvssm/error.hpp"
#include "lvssm/timeseries.hpp"

using namespace lvssm;

TEST(Csv, ParsesThreeRows) {
  const auto t = parse_csv("t,hr\n0,60\n1,61\n2,62\n");
  ASSERT_EQ(t.rows(), 3u);
  ASSERT_EQ(t.cols(), 1u);
  for (std::size_t r = 0; r < 3; ++r) EXPECT_FALSE(t.is_missing(0, r));
  EXPECT_DOUBLE_EQ(t.column("hr")[2], 62.0);
}

TEST(Csv, BlankCellIsMissing) {
  const auto t = parse_csv("t,hr,gsr\n0,60,1\n1,,2\n2,62,3\n");
  EXPECT_TRUE(t.is_missing(0, 1));
  EXPECT_FALSE(t.is_missing(1, 1));
  EXPECT_FALSE(t.is_missing(0, 0));
}

TEST(Csv, NonMonotoneTimestampsRejected) {
  EXPECT_THROW(parse_csv("t,hr\n5,1\n3,2\n4,3\n"), DataError);
}

TEST(Csv, CommentLinesSkipped) {
  const auto t = parse_csv("# produced by a test\nt,x\n0,1\n1,2\n");
  EXPECT_EQ(t.rows(), 2u);
}

TEST(Csv, MissingTimeColumnRejected) {
  EXPECT_THROW(parse_csv("time,x\n0,1\n"), DataError);
}

TEST(Csv, WriteParseRoundTripIsExact) {
  const std::vector<double> x = {0.1, 1.0 / 3.0, -2.5e-17, kMissing, 123456.789};
  const TimeSeriesTable a({0, 1, 2, 3, 4}, {"x"}, {x});
  const auto b = parse_csv(format_csv(a, "t", "seed 1"));
  EXPECT_TRUE(a == b);
  for (std::size_t r = 0; r < x.size(); ++r) {
    if (std::isnan(x[r])) {
      EXPECT_TRUE(b.is_missing(0, r));
    } else {
      EXPECT_EQ(b.column(0)[r], x[r]);
    }
  }
}

TEST(Csv, LoadFromFile) {
  const auto path = std::filesystem::temp_directory_path() / "lvssm_ts_load.csv";
  const TimeSeriesTable a({0, 1}, {"a", "b"}, {{1, 2}, {3, 4}});
  write_csv(a, path.string());
  EXPECT_TRUE(load_csv(path.string()) == a);
  std::filesystem::remove(path);
  EXPECT_THROW(load_csv(path.string()), DataError);
}

TEST(Resample, GridInputUnchanged) {
  const TimeSeriesTable a({0, 1, 2, 3}, {"hr"}, {{60, 61, 63, 62}});
  EXPECT_TRUE(resample_uniform(a, 1.0) == a);
}

TEST(Resample, LinearInterpolationByHand) {
  const TimeSeriesTable a({0, 0.9, 2.1}, {"hr"}, {{60, 69, 81}});
  const auto r = resample_uniform(a, 1.0);
  ASSERT_GE(r.rows(), 3u);
  EXPECT_NEAR(r.column(0)[1], 70.0, 1e-12);
  EXPECT_NEAR(r.column(0)[2], 80.0, 1e-12);
}

TEST(Resample, NoExtrapolation) {
  const TimeSeriesTable a({0, 0.9, 2.1}, {"hr"}, {{60, 69, 81}});
  const auto r = resample_uniform(a, 1.0);
  ASSERT_EQ(r.rows(), 4u);
  EXPECT_DOUBLE_EQ(r.timestamps()[3], 3.0);
  EXPECT_TRUE(r.is_missing(0, 3));
}

TEST(Standardize, SymmetricThreePoint) {
  const TimeSeriesTable a({0, 1, 2}, {"x"}, {{1, 2, 3}});
  const auto [s, rec] = standardize(a, {"x"});
  EXPECT_NEAR(s.column(0)[0], -1.0, 1e-12);
  EXPECT_NEAR(s.column(0)[1], 0.0, 1e-12);
  EXPECT_NEAR(s.column(0)[2], 1.0, 1e-12);
}

TEST(Standardize, ConstantColumnRejected) {
  const TimeSeriesTable a({0, 1, 2}, {"x"}, {{5, 5, 5}});
  EXPECT_THROW(standardize(a, {"x"}), DataError);
}

TEST(Standardize, StatisticsOverPresentCellsOnly) {
  const TimeSeriesTable a({0, 1, 2, 3}, {"x"}, {{2, kMissing, 4, 9}});
  const auto [s, rec] = standardize(a, {"x"});
  // Present cells 2, 4, 9: mean 5, squared deviations 9 + 1 + 16 over 2.
  EXPECT_NEAR(rec.stats.at("x").mean, 5.0, 1e-12);
  EXPECT_NEAR(rec.stats.at("x").sd, std::sqrt(13.0), 1e-12);
  EXPECT_TRUE(s.is_missing(0, 1));
}

TEST(Standardize, RoundTrip) {
  const TimeSeriesTable a({0, 1, 2, 3}, {"x", "y"}, {{0.3, -1.2, 7.5, 2.2}, {1, 2, 3, 5}});
  const auto [s, rec] = standardize(a, {"x", "y"});
  const auto back = unstandardize(s, rec);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t r = 0; r < 4; ++r) EXPECT_NEAR(back.column(c)[r], a.column(c)[r], 1e-12);
}

namespace {

TimeSeriesTable counting_table(std::size_t rows) {
  std::vector<double> t(rows), v(rows);
  std::iota(t.begin(), t.end(), 0.0);
  std::iota(v.begin(), v.end(), 100.0);
  return TimeSeriesTable(t, {"v"}, {v});
}

}  // namespace

TEST(LagRestructure, StrideOneIsIdentity) {
  const auto a = counting_table(9);
  const auto r = lag_restructure(a, 1);
  ASSERT_EQ(r.phases.size(), 1u);
  EXPECT_TRUE(r.phases[0] == a);
}

TEST(LagRestructure, TwentyRowsStrideTen) {
  const auto r = lag_restructure(counting_table(20), 10);
  ASSERT_EQ(r.phases.size(), 10u);
  for (const auto& p : r.phases) EXPECT_EQ(p.rows(), 2u);
  EXPECT_EQ(r.total_rows(), 20u);
}

TEST(LagRestructure, SevenRowsStrideThree) {
  const auto r = lag_restructure(counting_table(7), 3);
  ASSERT_EQ(r.phases.size(), 3u);
  const std::vector<std::vector<double>> expected = {{100, 103, 106}, {101, 104}, {102, 105}};
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(r.phases[k].column(0), expected[k]);
}

TEST(Table, RejectsDuplicateNamesAndLengthMismatch) {
  EXPECT_THROW(TimeSeriesTable({0, 1}, {"a", "a"}, {{1, 2}, {3, 4}}), DataError);
  EXPECT_THROW(TimeSeriesTable({0, 1}, {"a"}, {{1, 2, 3}}), DataError);
}

TEST(Table, SamplePeriod) {
  EXPECT_DOUBLE_EQ(*counting_table(5).sample_period(), 1.0);
  const TimeSeriesTable a({0, 1, 3}, {"x"}, {{1, 2, 3}});
  EXPECT_FALSE(a.sample_period().has_value());
}
