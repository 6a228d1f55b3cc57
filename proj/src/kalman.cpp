#include "lvssm/kalman.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>
#include <string>

#include "lvssm/error.hpp"

namespace lvssm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void symmetrize(Eigen::MatrixXd& p) { p = 0.5 * (p + p.transpose()).eval(); }

bool diagonal_positive(const Eigen::MatrixXd& r) {
  for (Eigen::Index j = 0; j < r.cols(); ++j) {
    for (Eigen::Index i = 0; i < r.rows(); ++i) {
      if (i == j) {
        if (!(r(i, i) > 0.0)) return false;
      } else if (r(i, j) != 0.0) {
        return false;
      }
    }
  }
  return true;
}

void check_inputs(const ParamSet& ps, const Sequence& seq) {
  const auto n = ps.C.rows();
  const auto p = ps.B.cols();
  if (seq.y.rows() != n) {
    throw DataError("filter: observation rows " + std::to_string(seq.y.rows()) + " != model observations " +
                    std::to_string(n));
  }
  if (p > 0) {
    if (seq.u.rows() != p || seq.u.cols() != seq.y.cols()) {
      throw DataError("filter: input matrix is " + std::to_string(seq.u.rows()) + "x" +
                      std::to_string(seq.u.cols()) + ", expected " + std::to_string(p) + "x" +
                      std::to_string(seq.y.cols()));
    }
    if (!seq.u.allFinite()) throw DataError("filter: inputs contain missing or non-finite values");
  }
  if (ps.A.rows() != ps.A.cols() || ps.C.cols() != ps.A.rows() || ps.Q.rows() != ps.A.rows() ||
      ps.R.rows() != n || ps.D.rows() != n || ps.D.cols() != p || ps.x0.size() != ps.A.rows() ||
      ps.P0.rows() != ps.A.rows()) {
    throw DataError("filter: parameter dimensions are inconsistent");
  }
}

/// Runs the forward recursion. With `out` null only the likelihood is kept.
double run_filter(const ParamSet& ps, const Sequence& seq, const FilterOptions& opt, FilterOutput* out) {
  check_inputs(ps, seq);
  const int m = static_cast<int>(ps.A.rows());
  const int n = static_cast<int>(ps.C.rows());
  const int p = static_cast<int>(ps.B.cols());
  const int T = seq.steps();

  bool information = false;
  switch (opt.method) {
    case FilterMethod::Auto: information = diagonal_positive(ps.R); break;
    case FilterMethod::Covariance: information = false; break;
    case FilterMethod::Information:
      if (!diagonal_positive(ps.R)) throw DataError("information filter needs a diagonal, positive R");
      information = true;
      break;
  }

  if (out) {
    out->predicted_mean.resize(m, T);
    out->predicted_cov.resize(m, static_cast<Eigen::Index>(m) * T);
    out->filtered_mean.resize(m, T);
    out->filtered_cov.resize(m, static_cast<Eigen::Index>(m) * T);
    out->innovation.resize(n, T);
    out->initial_mean = ps.x0;
    out->initial_cov = ps.P0;
    out->jittered_steps.clear();
    out->observed.clear();
    out->innovation_cov.clear();
    out->gain.clear();
    out->observed_entries = 0;
  }
  const bool details = out && opt.keep_details;

  Eigen::VectorXd x_f = ps.x0, x_p(m), innov(n), h(m);
  Eigen::MatrixXd P_f = ps.P0, P_p(m, m), P_p_prev(m, m);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(m, m);

  // Quantities that depend only on P_p and the observed pattern.
  Eigen::MatrixXd F(m, m), W(m, m), K;
  Eigen::LLT<Eigen::MatrixXd> s_llt;
  Eigen::MatrixXd Co;  // observed rows of C (covariance form)
  double logdet = 0.0;  // log|M| + sum log r (information) or log|S| (covariance)

  std::vector<int> obs, prev_obs;
  obs.reserve(static_cast<std::size_t>(n));
  bool have_prev = false;
  bool locked = false;
  double total = 0.0;
  long observed_total = 0;

  for (int t = 0; t < T; ++t) {
    x_p.noalias() = ps.A * x_f;
    if (p > 0) x_p.noalias() += ps.B * seq.u.col(t);
    if (!locked) {
      P_p.noalias() = ps.A * P_f * ps.A.transpose();
      P_p += ps.Q;
      symmetrize(P_p);
    }

    obs.clear();
    for (int i = 0; i < n; ++i)
      if (!std::isnan(seq.y(i, t))) obs.push_back(i);
    const int no = static_cast<int>(obs.size());
    if (locked && obs != prev_obs) locked = false;

    innov.setConstant(std::numeric_limits<double>::quiet_NaN());
    for (int i : obs) {
      double pred = ps.C.row(i).dot(x_p);
      if (p > 0) pred += ps.D.row(i).dot(seq.u.col(t));
      innov(i) = seq.y(i, t) - pred;
    }

    if (no == 0) {
      x_f = x_p;
      P_f = P_p;
      locked = false;
      have_prev = false;
    } else if (information) {
      if (!locked) {
        F.setZero();
        double sum_log_r = 0.0;
        for (int i : obs) {
          const double r = ps.R(i, i);
          F.noalias() += ps.C.row(i).transpose() * ps.C.row(i) / r;
          sum_log_r += std::log(r);
        }
        Eigen::MatrixXd M = I + F * P_p;
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(M.transpose());
        double log_det_m = 0.0;
        double sign = 1.0;
        const auto& lu_diag = lu.matrixLU().diagonal();
        for (int k = 0; k < m; ++k) {
          log_det_m += std::log(std::abs(lu_diag(k)));
          if (lu_diag(k) < 0) sign = -sign;
        }
        sign *= lu.permutationP().determinant();
        if (!(sign > 0) || !std::isfinite(log_det_m)) {
          throw NumericalError("innovation covariance is not positive definite at step " + std::to_string(t + 1));
        }
        W = lu.solve(P_p).transpose();
        logdet = log_det_m + sum_log_r;
        if (opt.joseph) {
          Eigen::MatrixXd IWF = I - W * F;
          P_f = IWF * P_p * IWF.transpose() + W * F * W.transpose();
        } else {
          P_f = P_p - W * F * P_p;
        }
        symmetrize(P_f);
      }
      h.setZero();
      double q = 0.0;
      for (int i : obs) {
        const double r = ps.R(i, i);
        h.noalias() += ps.C.row(i).transpose() * (innov(i) / r);
        q += innov(i) * innov(i) / r;
      }
      const Eigen::VectorXd Wh = W * h;
      x_f = x_p + Wh;
      total += no * kLog2Pi + logdet + q - h.dot(Wh);
      if (details) {
        Eigen::MatrixXd Co_d(no, m), Ro(no, no);
        Ro.setZero();
        for (int k = 0; k < no; ++k) {
          Co_d.row(k) = ps.C.row(obs[static_cast<std::size_t>(k)]);
          Ro(k, k) = ps.R(obs[static_cast<std::size_t>(k)], obs[static_cast<std::size_t>(k)]);
        }
        Eigen::MatrixXd S = Co_d * P_p * Co_d.transpose() + Ro;
        symmetrize(S);
        out->innovation_cov.push_back(S);
        out->gain.push_back(W * Co_d.transpose() * Ro.diagonal().cwiseInverse().asDiagonal());
      }
    } else {
      if (!locked) {
        Co.resize(no, m);
        Eigen::MatrixXd Ro(no, no);
        for (int a = 0; a < no; ++a) {
          Co.row(a) = ps.C.row(obs[static_cast<std::size_t>(a)]);
          for (int b = 0; b < no; ++b) Ro(a, b) = ps.R(obs[static_cast<std::size_t>(a)], obs[static_cast<std::size_t>(b)]);
        }
        Eigen::MatrixXd PCt = P_p * Co.transpose();
        Eigen::MatrixXd S = Co * PCt + Ro;
        symmetrize(S);
        s_llt.compute(S);
        if (s_llt.info() != Eigen::Success || !std::isfinite(S.sum())) {
          const double jitter = 1e-10 * S.trace() / no;
          S.diagonal().array() += jitter;
          s_llt.compute(S);
          if (!(jitter > 0) || s_llt.info() != Eigen::Success) {
            throw NumericalError("singular innovation covariance at step " + std::to_string(t + 1));
          }
          if (out) out->jittered_steps.push_back(t);
        }
        K = s_llt.solve(PCt.transpose()).transpose();
        if (opt.joseph) {
          Eigen::MatrixXd IKC = I - K * Co;
          P_f = IKC * P_p * IKC.transpose() + K * Ro * K.transpose();
        } else {
          P_f = P_p - K * PCt.transpose();
        }
        symmetrize(P_f);
        logdet = 2.0 * s_llt.matrixLLT().diagonal().array().log().sum();
        if (details) out->innovation_cov.push_back(S);
      } else if (details) {
        out->innovation_cov.push_back(s_llt.reconstructedMatrix());
      }
      Eigen::VectorXd v(no);
      for (int a = 0; a < no; ++a) v(a) = innov(obs[static_cast<std::size_t>(a)]);
      const Eigen::VectorXd z = s_llt.matrixL().solve(v);
      x_f = x_p + K * v;
      total += no * kLog2Pi + logdet + z.squaredNorm();
      if (details) out->gain.push_back(K);
    }

    if (opt.steady_state && !locked && no > 0) {
      if (have_prev && obs == prev_obs) {
        const double scale = 1.0 + P_p.cwiseAbs().maxCoeff();
        if ((P_p - P_p_prev).cwiseAbs().maxCoeff() <= 1e-14 * scale) locked = true;
      }
      P_p_prev = P_p;
      have_prev = true;
    }
    prev_obs = obs;
    observed_total += no;

    if (out) {
      out->predicted_mean.col(t) = x_p;
      out->predicted_cov.middleCols(static_cast<Eigen::Index>(t) * m, m) = P_p;
      out->filtered_mean.col(t) = x_f;
      out->filtered_cov.middleCols(static_cast<Eigen::Index>(t) * m, m) = P_f;
      out->innovation.col(t) = innov;
      if (details) out->observed.push_back(obs);
    }
  }
  if (!std::isfinite(total)) throw NumericalError("filter produced a non-finite likelihood");
  if (out) {
    out->minus2ll = total;
    out->observed_entries = observed_total;
  }
  return total;
}

}  // namespace

FilterOutput kalman_filter(const ParamSet& params, const Sequence& seq, const FilterOptions& options) {
  FilterOutput out;
  run_filter(params, seq, options, &out);
  return out;
}

double minus_two_log_likelihood(const ParamSet& params, const Sequence& seq, const FilterOptions& options) {
  return run_filter(params, seq, options, nullptr);
}

double minus_two_log_likelihood(const ParamSet& params, const SequenceSet& data, const FilterOptions& options) {
  double total = 0.0;
  for (const auto& seq : data) total += run_filter(params, seq, options, nullptr);
  return total;
}

// ---------------------------------------------------------------------------

namespace {

/// Solves X = P^{-1} G for symmetric PSD P, falling back to the pseudo-inverse.
Eigen::MatrixXd spd_solve(const Eigen::MatrixXd& P, const Eigen::MatrixXd& G, bool& used_pinv) {
  Eigen::LLT<Eigen::MatrixXd> llt(P);
  if (llt.info() == Eigen::Success && llt.rcond() > 1e-12) {
    used_pinv = false;
    return llt.solve(G);
  }
  used_pinv = true;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P);
  const Eigen::VectorXd& lambda = es.eigenvalues();
  const double cutoff = 1e-12 * std::max(lambda.cwiseAbs().maxCoeff(), 1e-300);
  Eigen::VectorXd inv(lambda.size());
  for (Eigen::Index k = 0; k < lambda.size(); ++k) inv(k) = lambda(k) > cutoff ? 1.0 / lambda(k) : 0.0;
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose() * G;
}

}  // namespace

SmootherOutput rts_smoother(const ParamSet& params, const FilterOutput& f) {
  const int m = f.latents();
  const int T = f.steps();
  if (m != params.A.rows()) throw DataError("smoother: filter output does not match the parameters");
  SmootherOutput s;
  s.mean.resize(m, T);
  s.cov.resize(m, static_cast<Eigen::Index>(m) * T);
  s.lag_cov.resize(m, static_cast<Eigen::Index>(m) * T);
  if (T == 0) {
    s.initial_mean = f.initial_mean;
    s.initial_cov = f.initial_cov;
    return s;
  }
  auto block = [m](Eigen::MatrixXd& mat, int t) { return mat.middleCols(static_cast<Eigen::Index>(t) * m, m); };

  s.mean.col(T - 1) = f.filtered_mean.col(T - 1);
  block(s.cov, T - 1) = f.P_filt(T - 1);

  Eigen::MatrixXd J(m, m), Ps(m, m), Pf(m, m), Pp_next(m, m);
  Eigen::MatrixXd last_Pf, last_Pp;
  bool last_pinv = false;
  // k runs over the step preceding k + 1; k = -1 is the prior x_0.
  for (int k = T - 2; k >= -1; --k) {
    Pf = k >= 0 ? Eigen::MatrixXd(f.P_filt(k)) : f.initial_cov;
    const Eigen::VectorXd xf = k >= 0 ? Eigen::VectorXd(f.filtered_mean.col(k)) : f.initial_mean;
    Pp_next = f.P_pred(k + 1);
    // Once the filter has locked onto its steady state the covariances repeat
    // exactly, and so does the gain.
    if (last_Pf.size() == 0 || Pf != last_Pf || Pp_next != last_Pp) {
      J = spd_solve(Pp_next, params.A * Pf, last_pinv).transpose();
      last_Pf = Pf;
      last_Pp = Pp_next;
    }
    if (last_pinv) s.pseudo_inverse_steps.push_back(k + 1);
    const Eigen::VectorXd xs = xf + J * (s.mean.col(k + 1) - f.predicted_mean.col(k + 1));
    Ps = Pf + J * (block(s.cov, k + 1) - Pp_next) * J.transpose();
    symmetrize(Ps);
    block(s.lag_cov, k + 1) = block(s.cov, k + 1) * J.transpose();
    if (!xs.allFinite() || !Ps.allFinite()) {
      throw NumericalError("smoother produced non-finite values at step " + std::to_string(k + 1));
    }
    if (k >= 0) {
      s.mean.col(k) = xs;
      block(s.cov, k) = Ps;
    } else {
      s.initial_mean = xs;
      s.initial_cov = Ps;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& s, const char* name) {
  if (s.size() == 0) return s;
  if (!s.allFinite()) throw NumericalError(std::string(name) + " has non-finite entries");
  Eigen::MatrixXd sym = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  Eigen::VectorXd lambda = es.eigenvalues();
  const double top = std::max(lambda.cwiseAbs().maxCoeff(), 0.0);
  if (lambda.minCoeff() < -1e-9 * std::max(1.0, top)) {
    throw NumericalError(std::string(name) + " is not positive semi-definite");
  }
  for (Eigen::Index k = 0; k < lambda.size(); ++k) lambda(k) = lambda(k) < 1e-12 * top ? 0.0 : std::sqrt(lambda(k));
  return es.eigenvectors() * lambda.asDiagonal() * es.eigenvectors().transpose();
}

SimulationOutput simulate(const ParamSet& params, const Eigen::MatrixXd& u, int steps, std::uint64_t seed) {
  if (steps < 1) throw DataError("simulate: need at least one step");
  const int m = params.latents();
  const int n = params.observations();
  const int p = params.inputs();
  if (p > 0 && (u.rows() != p || u.cols() < steps)) {
    throw DataError("simulate: input matrix must be " + std::to_string(p) + "x" + std::to_string(steps));
  }
  const Eigen::MatrixXd Lq = psd_factor(params.Q, "Q");
  const Eigen::MatrixXd Lr = psd_factor(params.R, "R");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  SimulationOutput out;
  out.x.resize(m, steps);
  out.y.resize(n, steps);
  Eigen::VectorXd x = params.x0, zq(m), zr(n);
  for (int t = 0; t < steps; ++t) {
    for (int k = 0; k < m; ++k) zq(k) = normal(rng);
    for (int k = 0; k < n; ++k) zr(k) = normal(rng);
    Eigen::VectorXd next = params.A * x + Lq * zq;
    if (p > 0) next += params.B * u.col(t);
    x = next;
    out.x.col(t) = x;
    Eigen::VectorXd y = params.C * x + Lr * zr;
    if (p > 0) y += params.D * u.col(t);
    out.y.col(t) = y;
  }
  return out;
}

double spectral_radius(const Eigen::MatrixXd& A) {
  if (A.size() == 0) return 0.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

Eigen::MatrixXd stationary_covariance(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q) {
  const Eigen::Index m = A.rows();
  const double rho = spectral_radius(A);
  if (!(rho < 1.0)) {
    throw NumericalError("transition matrix is not stable (spectral radius " + std::to_string(rho) + ")");
  }
  // vec(Sigma) = (I - A (x) A)^{-1} vec(Q), column-major vec.
  Eigen::MatrixXd kron(m * m, m * m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) kron.block(i * m, j * m, m, m) = A(i, j) * A;
  Eigen::MatrixXd system = Eigen::MatrixXd::Identity(m * m, m * m) - kron;
  Eigen::VectorXd vecq = Eigen::Map<const Eigen::VectorXd>(Q.data(), m * m);
  Eigen::VectorXd vecs = system.partialPivLu().solve(vecq);
  Eigen::MatrixXd sigma = Eigen::Map<Eigen::MatrixXd>(vecs.data(), m, m);
  symmetrize(sigma);
  return sigma;
}

}  // namespace lvssm
