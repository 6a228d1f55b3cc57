#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lvssm/kalman.hpp"
#include "lvssm/model_spec.hpp"
#include "lvssm/timeseries.hpp"

namespace lvssm {

/// Observation/input sequences laid out for a spec, plus what was done to them.
struct FitData {
  SequenceSet sequences;
  StandardizationRecord standardization;  // empty when the spec does not standardize
  std::uint64_t fingerprint = 0;

  long time_steps() const;
  long observed_entries() const;
};

std::uint64_t fingerprint(const SequenceSet& sequences);

/// Picks the spec's observation and input columns from each phase. Inputs
/// must be complete.
FitData make_fit_data(const RestructuredSeries& series, const ModelSpec& spec);

/// Standardizes the spec's observation columns when the spec asks for it
/// (inputs are only centred, so input effects keep their units) and splits the table into `stride`
/// interleaved phases.
FitData make_fit_data(const TimeSeriesTable& table, const ModelSpec& spec, int stride = 1);

/// Fails with DataError if an observation column is constant or has fewer than
/// two observed values.
void check_data(const ModelSpec& spec, const FitData& data);

/// Deterministic starting values (see README for the recipe).
ParamSet initial_params(const ModelSpec& spec, const FitData& data);

/// Whether the closed-form/conditional EM updates apply to this spec at these
/// parameter values. `reason` receives the first obstacle found.
bool em_applicable(const ModelSpec& spec, const ParamSet& params, std::string* reason = nullptr);

/// One expectation / conditional-maximization cycle.
PackedParams em_step(const ModelSpec& spec, const PackedParams& current, const FitData& data);

/// Gradient of -2LL with respect to the free labels (natural scale), from the
/// smoothed complete-data score. Same preconditions as EM.
Eigen::VectorXd minus2ll_gradient(const ModelSpec& spec, const ParamSet& params, const FitData& data);

struct FitOptions {
  int max_iter = 500;
  double tol = 1e-6;
  bool refine = true;
  /// false skips EM and goes straight to the quasi-Newton pass, which suits
  /// starts that already sit near the optimum (warm-started windows).
  bool em = true;
  std::uint64_t seed = 1;
  int starts = 1;             // > 1 adds jittered restarts
  double start_jitter = 0.2;  // sd of restart perturbations in optimizer coordinates
  std::optional<PackedParams> initial;
  /// Quasi-Newton curvature carried over from an earlier fit of the same spec.
  Eigen::MatrixXd inverse_hessian;
  bool standard_errors = true;
};

struct FitResult {
  std::string model;
  PackedParams estimates;
  Eigen::VectorXd se;       // NaN where the Hessian could not support an error
  Eigen::VectorXd ci_low;
  Eigen::VectorXd ci_high;
  double minus2ll = 0.0;
  std::vector<double> trace;  // -2LL at the start and after every EM or quasi-Newton step
  int em_iterations = 0;
  int refine_iterations = 0;
  int iterations = 0;
  bool converged = false;
  std::string method;
  std::string message;
  std::uint64_t data_fingerprint = 0;
  long observed_entries = 0;
  Eigen::MatrixXd inverse_hessian;  // optimizer coordinates; empty without a quasi-Newton pass

  std::size_t free_parameters() const { return estimates.labels.size(); }
  double value(std::string_view label) const { return estimates.value(label); }
};

/// True when every step of the trace is non-increasing within `tol`.
bool trace_non_increasing(const std::vector<double>& trace, double tol = 1e-8);

FitResult fit(const ModelSpec& spec, const FitData& data, const FitOptions& options = {});

/// Receives every completed fit, restarts included (for auditing traces).
/// Fits run on worker threads, so the observer must be thread-safe.
using FitObserver = std::function<void(const FitResult&)>;
/// Installs `observer` and returns the one it replaces.
FitObserver set_fit_observer(FitObserver observer);

struct StandardErrors {
  Eigen::VectorXd se;
  Eigen::VectorXd low;
  Eigen::VectorXd high;
  std::vector<std::string> flagged;  // labels left without a standard error
};

/// Inverse of the central-difference Hessian of 0.5 * (-2LL) on the natural
/// parameter scale; labels spanning a non-positive-definite direction are
/// dropped and flagged.
StandardErrors standard_errors(const ModelSpec& spec, const FitResult& fit, const FitData& data);

struct ComparisonResult {
  std::string base_model;
  std::string alternative_model;
  double base_minus2ll = 0.0;
  double alternative_minus2ll = 0.0;
  double delta = 0.0;  // base - alternative
  std::string preferred;
  std::size_t base_parameters = 0;
  std::size_t alternative_parameters = 0;
};

ComparisonResult compare_models(const FitResult& base, const FitResult& alternative);

/// Starting point for the larger of two nested specs obtained by reading the
/// smaller spec's fitted matrices; nullopt when the fitted matrices violate
/// one of the larger spec's fixed entries.
std::optional<PackedParams> embed(const ModelSpec& from, const PackedParams& estimates, const ModelSpec& to);

/// Fits base and alternative on the same data; the alternative is also
/// started from the embedded base optimum and the better of its fits is kept.
std::pair<FitResult, FitResult> fit_nested_pair(const ModelSpec& base, const ModelSpec& alternative,
                                                const FitData& data, const FitOptions& options = {});

/// Name of a label's matrix in the fitting-package convention:
/// C -> Z (loadings), A -> B (transitions), B -> C (input effects),
/// D -> D, Q -> Q, R -> R, x0 -> x0, P0 -> V0.
std::string package_matrix_name(MatrixId id);
std::vector<std::pair<std::string, std::string>> notation_bridge();

std::string fit_to_json(const FitResult& fit, const ModelSpec& spec);
std::string comparison_to_json(const ComparisonResult& cmp);

}  // namespace lvssm
