#include "lvssm/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lvssm/error.hpp"
#include "lvssm/parallel.hpp"

namespace lvssm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_two_latents(const ParamSet& ps) {
  if (ps.latents() < 2) throw ConfigError("association needs at least two latents");
}

double row_period(const TimeSeriesTable& table) {
  auto period = table.sample_period();
  if (!period || !(*period > 0)) throw DataError("table timestamps are not a uniform grid");
  return *period;
}

}  // namespace

double normalized_association(const FitResult& fit, const ModelSpec& spec) {
  const ParamSet ps = unpack(fit.estimates, spec);
  require_two_latents(ps);
  if (ps.Q(1, 0) == 0.0) return 0.0;
  const Eigen::MatrixXd sigma = stationary_covariance(ps.A, ps.Q);
  const double denom = std::sqrt(sigma(0, 0) * sigma(1, 1));
  if (!(denom > 0)) throw NumericalError("association: a latent has zero stationary variance");
  return ps.Q(1, 0) / denom;
}

double normalized_association(const FitResult& fit, const ModelSpec& spec, const FitData& data,
                              AssociationScale scale) {
  if (scale == AssociationScale::Stationary) return normalized_association(fit, spec);
  const ParamSet ps = unpack(fit.estimates, spec);
  require_two_latents(ps);
  if (ps.Q(1, 0) == 0.0) return 0.0;
  double s[2] = {0, 0}, ss[2] = {0, 0};
  long count = 0;
  for (const auto& seq : data.sequences) {
    const SmootherOutput sm = rts_smoother(ps, kalman_filter(ps, seq));
    for (int t = 0; t < sm.steps(); ++t) {
      for (int j = 0; j < 2; ++j) {
        s[j] += sm.mean(j, t);
        ss[j] += sm.mean(j, t) * sm.mean(j, t);
      }
      ++count;
    }
  }
  if (count < 2) throw DataError("association: not enough smoothed samples");
  double sd[2];
  for (int j = 0; j < 2; ++j) {
    const double mean = s[j] / static_cast<double>(count);
    sd[j] = std::sqrt(std::max(0.0, (ss[j] - count * mean * mean) / static_cast<double>(count - 1)));
  }
  if (!(sd[0] > 0 && sd[1] > 0)) throw NumericalError("association: a smoothed latent is constant");
  return ps.Q(1, 0) / (sd[0] * sd[1]);
}

// ---------------------------------------------------------------------------

RollingFitSeries rolling_fit(const TimeSeriesTable& table, const ModelSpec& spec, const RollingOptions& opt) {
  const double period = row_period(table);
  const auto w = static_cast<std::size_t>(std::llround(opt.window / period));
  const auto step = static_cast<std::size_t>(std::llround(opt.step / period));
  if (w < 2 || step < 1) throw ConfigError("rolling: window and step must cover at least one sample");
  if (table.rows() < w) throw DataError("rolling: table is shorter than the window");
  const std::size_t count = (table.rows() - w) / step + 1;

  RollingFitSeries out(count);
  auto run_window = [&](std::size_t k, const FitResult* previous) {
    const std::size_t begin = k * step;
    const TimeSeriesTable slice = table.slice(begin, begin + w);
    const FitData data = make_fit_data(slice, spec, opt.stride);
    FitOptions fo = opt.fit;
    if (previous) {
      // The previous optimum and its curvature are already close, so the
      // quasi-Newton pass alone finishes the job.
      fo.initial = previous->estimates;
      fo.inverse_hessian = previous->inverse_hessian;
      fo.em = false;
    }
    FitResult r = fit(spec, data, fo);
    const ParamSet ps = unpack(r.estimates, spec);
    RollingWindow& win = out[k];
    win.start = table.timestamps()[begin];
    win.end = win.start + static_cast<double>(w) * period;
    win.b1 = ps.A(0, 0);
    win.b4 = ps.A.rows() > 1 ? ps.A(1, 1) : kNaN;
    win.q2 = ps.Q.rows() > 1 ? ps.Q(1, 0) : kNaN;
    win.minus2ll = r.minus2ll;
    win.converged = r.converged;
    return r;
  };

  if (opt.warm_start) {
    FitResult previous;
    for (std::size_t k = 0; k < count; ++k) {
      FitResult r = run_window(k, k > 0 ? &previous : nullptr);
      // A failed window is a poor starting point for the next one.
      if (k == 0 || r.converged) previous = std::move(r);
    }
  } else {
    parallel_for(count, static_cast<unsigned>(std::max(opt.workers, 0)),
                 [&](std::size_t k) { run_window(k, nullptr); });
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> segment_ranges(const TimeSeriesTable& table,
                                                                const SegmentBoundaries& boundaries,
                                                                double min_length) {
  const std::size_t n = table.rows();
  if (n == 0) throw DataError("segments: empty table");
  const double period = row_period(table);
  std::vector<std::size_t> cuts;
  for (std::size_t b : boundaries.indices)
    if (b > 0 && b < n) cuts.push_back(b);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  std::vector<std::pair<std::size_t, std::size_t>> segs;
  std::size_t begin = 0;
  for (std::size_t c : cuts) {
    segs.emplace_back(begin, c);
    begin = c;
  }
  segs.emplace_back(begin, n);

  auto too_short = [&](const std::pair<std::size_t, std::size_t>& s) {
    return static_cast<double>(s.second - s.first) * period < min_length;
  };
  while (segs.size() > 1) {
    auto it = std::find_if(segs.begin(), segs.end(), too_short);
    if (it == segs.end()) break;
    if (it == segs.begin()) {
      (it + 1)->first = it->first;
    } else {
      (it - 1)->second = it->second;
    }
    segs.erase(it);
  }
  if (too_short(segs.front())) throw DataError("segments: no segment reaches the minimum length");
  return segs;
}

std::vector<SegmentFit> segment_fit(const TimeSeriesTable& table, const ModelSpec& spec,
                                    const SegmentBoundaries& boundaries, const SegmentOptions& opt) {
  const auto ranges = segment_ranges(table, boundaries, opt.min_length);
  const double period = row_period(table);
  std::vector<SegmentFit> out(ranges.size());
  parallel_for(ranges.size(), static_cast<unsigned>(std::max(opt.workers, 0)), [&](std::size_t k) {
    const auto [b, e] = ranges[k];
    const TimeSeriesTable slice = table.slice(b, e);
    SegmentFit& s = out[k];
    s.begin = b;
    s.end = e;
    s.start_time = table.timestamps()[b];
    s.end_time = table.timestamps()[e - 1] + period;
    s.fit = fit(spec, make_fit_data(slice, spec, opt.stride), opt.fit);
  });
  return out;
}

// ---------------------------------------------------------------------------

TransitionSync transition_coefficient_wcc(const RollingFitSeries& rolling, const WccOptions& options) {
  std::vector<double> b1, b4;
  long converged = 0;
  for (const auto& w : rolling) {
    b1.push_back(w.converged ? w.b1 : kNaN);
    b4.push_back(w.converged ? w.b4 : kNaN);
    if (w.converged) ++converged;
  }
  if (converged < options.window) {
    throw DataError("transition wcc: " + std::to_string(converged) + " converged windows, need at least " +
                    std::to_string(options.window));
  }
  TransitionSync out;
  out.wcc = wcc(b1, b4, options);
  out.peaks = peak_pick(out.wcc);
  const int max_lag = std::min<int>(options.max_lag, static_cast<int>(b1.size()) - 3);
  out.xcorr = cross_correlation(b1, b4, std::max(0, max_lag));
  out.all_missing = !out.wcc.values.array().isFinite().any();
  return out;
}

ParticipantSummary participant_summary(const FitResult& base, const FitResult& two_latent,
                                       const ModelSpec& spec, const std::string& id) {
  if (!base.converged || !two_latent.converged) {
    throw NumericalError("participant " + id + ": summary needs converged fits");
  }
  const ComparisonResult cmp = compare_models(base, two_latent);
  const ParamSet ps = unpack(two_latent.estimates, spec);
  ParticipantSummary s;
  s.id = id;
  s.delta_ll = cmp.delta;
  s.association = normalized_association(two_latent, spec);
  auto effect = [&](const char* input, int latent) {
    auto it = std::find(spec.inputs.begin(), spec.inputs.end(), input);
    if (it == spec.inputs.end() || latent >= ps.latents()) return kNaN;
    return ps.B(latent, static_cast<Eigen::Index>(it - spec.inputs.begin()));
  };
  s.road_stress = effect("road_users", 0);
  s.road_workload = effect("road_users", 1);
  s.hand_stress = effect("hand_activity", 0);
  s.hand_workload = effect("hand_activity", 1);
  s.b1 = ps.A(0, 0);
  s.b4 = ps.latents() > 1 ? ps.A(1, 1) : kNaN;
  return s;
}

}  // namespace lvssm
