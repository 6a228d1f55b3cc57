#include "lvssm/optimize.hpp"

#include <cmath>
#include <limits>

#include "lvssm/error.hpp"

namespace lvssm {

double safe_eval(const Objective& f, const Eigen::VectorXd& x) {
  try {
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  } catch (const NumericalError&) {
    return std::numeric_limits<double>::infinity();
  } catch (const DataError&) {
    return std::numeric_limits<double>::infinity();
  }
}

Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x, double rel_step) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = rel_step * std::max(1.0, std::abs(x(i)));
    probe(i) = x(i) + h;
    const double up = safe_eval(f, probe);
    probe(i) = x(i) - h;
    const double down = safe_eval(f, probe);
    probe(i) = x(i);
    if (std::isfinite(up) && std::isfinite(down)) {
      g(i) = (up - down) / (2.0 * h);
    } else {
      // One-sided difference at the edge of the valid region.
      const double centre = safe_eval(f, x);
      g(i) = std::isfinite(up) ? (up - centre) / h : std::isfinite(down) ? (centre - down) / h : 0.0;
    }
  }
  return g;
}

BfgsResult bfgs_minimize(const Objective& f, const Eigen::VectorXd& start, const BfgsOptions& opt) {
  const Gradient gradient = [&](const Eigen::VectorXd& x) { return numeric_gradient(f, x, opt.rel_step); };
  return bfgs_minimize(f, gradient, start, opt);
}

BfgsResult bfgs_minimize(const Objective& f, const Gradient& gradient, const Eigen::VectorXd& start,
                         const BfgsOptions& opt) {
  BfgsResult res;
  const Eigen::Index n = start.size();
  res.x = start;
  res.f = safe_eval(f, start);
  if (!std::isfinite(res.f)) {
    res.message = "objective is not finite at the starting point";
    return res;
  }
  if (n == 0) {
    res.converged = true;
    res.message = "no free parameters";
    return res;
  }
  Eigen::VectorXd g = gradient(res.x);
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  bool fresh_h = true;
  if (opt.initial_inverse_hessian.rows() == n && opt.initial_inverse_hessian.cols() == n &&
      opt.initial_inverse_hessian.allFinite()) {
    H = opt.initial_inverse_hessian;
    fresh_h = false;
  }
  struct Keep {
    BfgsResult& r;
    Eigen::MatrixXd& h;
    ~Keep() { r.inverse_hessian = h; }
  } keep{res, H};
  int small_changes = 0;

  for (int iter = 0; iter < opt.max_iter; ++iter) {
    if (g.cwiseAbs().maxCoeff() <= opt.grad_tol) {
      res.converged = true;
      res.message = "gradient tolerance reached";
      return res;
    }
    Eigen::VectorXd d = -H * g;
    double slope = g.dot(d);
    if (!(slope < 0)) {
      H.setIdentity();
      fresh_h = true;
      d = -g;
      slope = -g.squaredNorm();
    }
    double alpha = 1.0;
    if (fresh_h) alpha = std::min(1.0, 1.0 / std::max(1e-12, d.cwiseAbs().maxCoeff()));
    double f_new = std::numeric_limits<double>::infinity();
    Eigen::VectorXd x_new;
    bool accepted = false;
    for (int k = 0; k < opt.max_backtracks; ++k) {
      x_new = res.x + alpha * d;
      f_new = safe_eval(f, x_new);
      if (f_new <= res.f + 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      if (!fresh_h) {
        H.setIdentity();
        fresh_h = true;
        --iter;
        continue;
      }
      res.message = "line search failed";
      res.converged = g.cwiseAbs().maxCoeff() <= 100 * opt.grad_tol;
      return res;
    }
    const Eigen::VectorXd g_new = gradient(x_new);
    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      if (fresh_h) {
        H *= sy / y.squaredNorm();
        fresh_h = false;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd Hy = H * y;
      H += (rho * rho * y.dot(Hy) + rho) * s * s.transpose() - rho * (Hy * s.transpose() + s * Hy.transpose());
    }
    const double change = res.f - f_new;
    res.x = x_new;
    res.f = f_new;
    g = g_new;
    res.iterations = iter + 1;
    res.trace.push_back(f_new);
    small_changes = change < opt.f_tol ? small_changes + 1 : 0;
    if (small_changes >= 2) {
      res.converged = true;
      res.message = "objective tolerance reached";
      return res;
    }
  }
  res.converged = g.cwiseAbs().maxCoeff() <= opt.grad_tol;
  res.message = res.converged ? "gradient tolerance reached" : "iteration limit reached";
  return res;
}

Eigen::MatrixXd numeric_hessian(const Objective& f, const Eigen::VectorXd& x, const Eigen::VectorXd& h) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd H(n, n);
  const double f0 = f(x);
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < n; ++i) {
    probe(i) = x(i) + h(i);
    const double up = f(probe);
    probe(i) = x(i) - h(i);
    const double down = f(probe);
    probe(i) = x(i);
    H(i, i) = (up - 2.0 * f0 + down) / (h(i) * h(i));
    for (Eigen::Index j = 0; j < i; ++j) {
      auto at = [&](double si, double sj) {
        probe(i) = x(i) + si * h(i);
        probe(j) = x(j) + sj * h(j);
        const double v = f(probe);
        probe(i) = x(i);
        probe(j) = x(j);
        return v;
      };
      const double v = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h(i) * h(j));
      H(i, j) = H(j, i) = v;
    }
  }
  return H;
}

}  // namespace lvssm
