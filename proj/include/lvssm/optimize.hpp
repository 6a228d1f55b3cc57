#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace lvssm {

/// Objective to minimize. May throw NumericalError for points outside the
/// valid region; the line search treats those as +infinity.
using Objective = std::function<double(const Eigen::VectorXd&)>;
using Gradient = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct BfgsOptions {
  int max_iter = 500;
  double grad_tol = 1e-4;   // max |gradient component|
  double f_tol = 1e-6;      // absolute objective change over two successive iterations
  double rel_step = 1e-5;   // finite-difference step relative to max(1, |x_i|)
  int max_backtracks = 40;
  /// Starting inverse Hessian; identity when empty or of the wrong size.
  Eigen::MatrixXd initial_inverse_hessian;
};

struct BfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // objective after each accepted step
  std::string message;
  Eigen::MatrixXd inverse_hessian;  // final quasi-Newton approximation
};

/// Objective value that maps thrown NumericalError/DataError and NaN to +inf.
double safe_eval(const Objective& f, const Eigen::VectorXd& x);

Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x, double rel_step = 1e-5);

/// Quasi-Newton minimization with an Armijo backtracking line search and a
/// central-difference gradient.
BfgsResult bfgs_minimize(const Objective& f, const Eigen::VectorXd& start, const BfgsOptions& options = {});
/// Same with a caller-supplied gradient.
BfgsResult bfgs_minimize(const Objective& f, const Gradient& gradient, const Eigen::VectorXd& start,
                         const BfgsOptions& options = {});

/// Central-difference Hessian with per-coordinate steps h.
Eigen::MatrixXd numeric_hessian(const Objective& f, const Eigen::VectorXd& x, const Eigen::VectorXd& h);

}  // namespace lvssm
