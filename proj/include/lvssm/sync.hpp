#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

namespace lvssm {

/// Pearson correlation over index-aligned pairs; pairs with a NaN are skipped.
/// NaN when fewer than 3 pairs remain or either side has zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

struct CrossCorrelation {
  std::vector<int> lags;
  std::vector<double> r;  // NaN where undefined
};

/// Correlation of a[t] with b[t + lag] for lag in [-max_lag, max_lag]; a
/// positive lag means b follows a.
CrossCorrelation cross_correlation(std::span<const double> a, std::span<const double> b, int max_lag);

struct WccOptions {
  int window = 30;
  int window_inc = 1;
  int max_lag = 10;
  int lag_inc = 1;
  bool detrend = false;  // remove a least-squares line from each window first
};

struct WccMatrix {
  std::vector<int> window_start;  // sample index of each row's unshifted window
  std::vector<int> lags;
  Eigen::MatrixXd values;  // rows = windows, cols = lags, NaN where undefined
  WccOptions options;
};

/// Windowed cross-correlation. For lag k >= 0 row i pairs a[i .. i+w) with
/// b[i+k .. i+k+w); for k < 0 it pairs a[i-k ..) with b[i ..). Windows running
/// past the end are truncated.
WccMatrix wcc(std::span<const double> a, std::span<const double> b, const WccOptions& options = {});

struct PeakSeries {
  std::vector<int> window_start;
  std::vector<int> lag;        // meaningful only where !missing
  std::vector<double> r;       // NaN where missing
  std::vector<bool> flagged;   // true when the peak is not an interior local maximum
  std::vector<bool> missing;   // row had no finite entry
};

/// Row maximum of a WCC matrix. Ties go to the smaller |lag|, then to the
/// positive lag. A peak that is not an interior local maximum (at the edge of
/// the lag range or next to a missing entry) is flagged.
PeakSeries peak_pick(const WccMatrix& matrix);

}  // namespace lvssm
