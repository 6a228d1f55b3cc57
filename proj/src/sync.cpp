#include "lvssm/sync.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>

#include "lvssm/error.hpp"

namespace lvssm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Pearson correlation of (a[ia + j], b[ib + j]) for j < len.
double pearson_at(std::span<const double> a, std::size_t ia, std::span<const double> b, std::size_t ib,
                  std::size_t len, bool detrend) {
  std::vector<double> xs, ys, idx;
  xs.reserve(len);
  ys.reserve(len);
  idx.reserve(len);
  for (std::size_t j = 0; j < len; ++j) {
    const double x = a[ia + j];
    const double y = b[ib + j];
    if (std::isnan(x) || std::isnan(y)) continue;
    xs.push_back(x);
    ys.push_back(y);
    idx.push_back(static_cast<double>(j));
  }
  const std::size_t n = xs.size();
  if (n < 3) return kNaN;
  double xmax = 0.0, ymax = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    xmax = std::max(xmax, std::abs(xs[k]));
    ymax = std::max(ymax, std::abs(ys[k]));
  }
  auto centre = [n](std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(n);
    for (double& x : v) x -= mean;
  };
  centre(xs);
  centre(ys);
  if (detrend) {
    centre(idx);
    double tt = 0.0;
    for (double t : idx) tt += t * t;
    if (tt > 0) {
      double bx = 0.0, by = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        bx += idx[k] * xs[k];
        by += idx[k] * ys[k];
      }
      bx /= tt;
      by /= tt;
      for (std::size_t k = 0; k < n; ++k) {
        xs[k] -= bx * idx[k];
        ys[k] -= by * idx[k];
      }
    }
  }
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    sxy += xs[k] * ys[k];
    sxx += xs[k] * xs[k];
    syy += ys[k] * ys[k];
  }
  // Centring a constant leaves rounding residue of order eps * |x|; anything
  // that small is a flat window, not signal.
  const double tiny = 16.0 * std::numeric_limits<double>::epsilon();
  const double nn = static_cast<double>(n);
  if (!(sxx > nn * std::pow(tiny * xmax, 2)) || !(syy > nn * std::pow(tiny * ymax, 2))) return kNaN;
  const double r = sxy / std::sqrt(sxx * syy);
  return std::max(-1.0, std::min(1.0, r));
}

}  // namespace

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DataError("pearson: series lengths differ");
  return pearson_at(a, 0, b, 0, a.size(), false);
}

CrossCorrelation cross_correlation(std::span<const double> a, std::span<const double> b, int max_lag) {
  if (a.size() != b.size()) throw DataError("cross_correlation: series lengths differ");
  const auto n = static_cast<long>(a.size());
  if (n < 3) throw DataError("cross_correlation: need at least 3 samples");
  if (max_lag < 0 || max_lag >= n - 2) throw DataError("cross_correlation: max_lag must be in [0, length - 2)");
  CrossCorrelation out;
  for (int k = -max_lag; k <= max_lag; ++k) {
    const std::size_t ia = k < 0 ? static_cast<std::size_t>(-k) : 0;
    const std::size_t ib = k > 0 ? static_cast<std::size_t>(k) : 0;
    out.lags.push_back(k);
    out.r.push_back(pearson_at(a, ia, b, ib, static_cast<std::size_t>(n - std::abs(k)), false));
  }
  return out;
}

WccMatrix wcc(std::span<const double> a, std::span<const double> b, const WccOptions& opt) {
  if (a.size() != b.size()) throw DataError("wcc: series lengths differ");
  if (opt.window < 4) throw DataError("wcc: window must be at least 4");
  if (opt.window_inc < 1 || opt.lag_inc < 1) throw DataError("wcc: increments must be at least 1");
  if (opt.max_lag < 0) throw DataError("wcc: max_lag must be non-negative");
  const auto n = static_cast<long>(a.size());
  if (n < opt.window) throw DataError("wcc: series shorter than the window");

  WccMatrix out;
  out.options = opt;
  for (int k = -(opt.max_lag / opt.lag_inc); k <= opt.max_lag / opt.lag_inc; ++k) out.lags.push_back(k * opt.lag_inc);
  for (long i = 0; i + opt.window <= n; i += opt.window_inc) out.window_start.push_back(static_cast<int>(i));
  out.values.resize(static_cast<Eigen::Index>(out.window_start.size()), static_cast<Eigen::Index>(out.lags.size()));
  for (std::size_t row = 0; row < out.window_start.size(); ++row) {
    const long i = out.window_start[row];
    for (std::size_t col = 0; col < out.lags.size(); ++col) {
      const int k = out.lags[col];
      const long ia = i + (k < 0 ? -k : 0);
      const long ib = i + (k > 0 ? k : 0);
      const long len = std::min<long>(opt.window, n - std::max(ia, ib));
      double r = kNaN;
      if (len >= 3) {
        r = pearson_at(a, static_cast<std::size_t>(ia), b, static_cast<std::size_t>(ib), static_cast<std::size_t>(len),
                       opt.detrend);
      }
      out.values(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) = r;
    }
  }
  return out;
}

PeakSeries peak_pick(const WccMatrix& mat) {
  PeakSeries out;
  const Eigen::Index cols = mat.values.cols();
  for (Eigen::Index row = 0; row < mat.values.rows(); ++row) {
    out.window_start.push_back(mat.window_start[static_cast<std::size_t>(row)]);
    Eigen::Index best = -1;
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double v = mat.values(row, c);
      if (std::isnan(v)) continue;
      if (best < 0) {
        best = c;
        continue;
      }
      const double bv = mat.values(row, best);
      const int lag = mat.lags[static_cast<std::size_t>(c)];
      const int best_lag = mat.lags[static_cast<std::size_t>(best)];
      if (v > bv || (v == bv && (std::abs(lag) < std::abs(best_lag) || (std::abs(lag) == std::abs(best_lag) && lag > 0)))) {
        best = c;
      }
    }
    if (best < 0) {
      out.lag.push_back(0);
      out.r.push_back(kNaN);
      out.flagged.push_back(false);
      out.missing.push_back(true);
      continue;
    }
    const bool interior = best > 0 && best + 1 < cols && !std::isnan(mat.values(row, best - 1)) &&
                          !std::isnan(mat.values(row, best + 1));
    out.lag.push_back(mat.lags[static_cast<std::size_t>(best)]);
    out.r.push_back(mat.values(row, best));
    out.flagged.push_back(!interior);
    out.missing.push_back(false);
  }
  return out;
}

}  // namespace lvssm
