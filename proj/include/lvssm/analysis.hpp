#pragma once

#include <string>
#include <vector>

#include "lvssm/changepoint.hpp"
#include "lvssm/estimation.hpp"
#include "lvssm/sync.hpp"
#include "lvssm/timeseries.hpp"

namespace lvssm {

enum class AssociationScale {
  Stationary,     // stationary latent sd implied by (A, Q)
  SmoothedSample  // sample sd of the smoothed latent paths
};

/// Latent noise covariance Q(1,0) divided by the product of the two latent
/// standard deviations.
double normalized_association(const FitResult& fit, const ModelSpec& spec);
double normalized_association(const FitResult& fit, const ModelSpec& spec, const FitData& data,
                              AssociationScale scale);

struct RollingOptions {
  double window = 1800.0;  // seconds
  double step = 60.0;      // seconds
  int stride = 10;
  bool warm_start = true;
  int workers = 1;  // used only without warm start
  FitOptions fit;

  RollingOptions() { fit.standard_errors = false; }
};

struct RollingWindow {
  double start = 0.0;  // seconds, inclusive
  double end = 0.0;    // seconds, exclusive
  double b1 = 0.0;     // A(0,0)
  double b4 = 0.0;     // A(1,1)
  double q2 = 0.0;     // Q(1,0)
  double minus2ll = 0.0;
  bool converged = false;
};

using RollingFitSeries = std::vector<RollingWindow>;

RollingFitSeries rolling_fit(const TimeSeriesTable& table, const ModelSpec& spec, const RollingOptions& options = {});

struct SegmentOptions {
  double min_length = 300.0;  // seconds
  int stride = 10;
  int workers = 1;
  FitOptions fit;
};

struct SegmentFit {
  std::size_t begin = 0;  // row range [begin, end)
  std::size_t end = 0;
  double start_time = 0.0;
  double end_time = 0.0;
  FitResult fit;
};

/// Splits the table at the boundary rows, merges segments shorter than the
/// minimum into their predecessor (the first into its successor) and fits each.
std::vector<SegmentFit> segment_fit(const TimeSeriesTable& table, const ModelSpec& spec,
                                    const SegmentBoundaries& boundaries, const SegmentOptions& options = {});

/// Row ranges segment_fit would use.
std::vector<std::pair<std::size_t, std::size_t>> segment_ranges(const TimeSeriesTable& table,
                                                                const SegmentBoundaries& boundaries,
                                                                double min_length);

struct TransitionSync {
  WccMatrix wcc;
  PeakSeries peaks;
  CrossCorrelation xcorr;
  bool all_missing = false;
};

/// WCC of the b1 and b4 series with non-converged windows masked.
TransitionSync transition_coefficient_wcc(const RollingFitSeries& rolling, const WccOptions& options = {});

struct ParticipantSummary {
  std::string id;
  double delta_ll = 0.0;
  double association = 0.0;
  double road_stress = 0.0;
  double road_workload = 0.0;
  double hand_stress = 0.0;
  double hand_workload = 0.0;
  double b1 = 0.0;
  double b4 = 0.0;
};

/// Input effects are looked up by input name (road_users, hand_activity);
/// absent inputs give NaN.
ParticipantSummary participant_summary(const FitResult& base, const FitResult& two_latent,
                                       const ModelSpec& two_latent_spec, const std::string& id);

}  // namespace lvssm
