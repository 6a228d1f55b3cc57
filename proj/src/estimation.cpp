#include "lvssm/estimation.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <set>

#include <json.hpp>

#include "lvssm/error.hpp"
#include "lvssm/optimize.hpp"

namespace lvssm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kVarianceFloor = 1e-8;
constexpr double kCorrelationLimit = 1.0 - 1e-12;

}  // namespace

// ---------------------------------------------------------------------------
// Data preparation

long FitData::time_steps() const {
  long total = 0;
  for (const auto& s : sequences) total += s.steps();
  return total;
}

long FitData::observed_entries() const {
  long total = 0;
  for (const auto& s : sequences) total += (s.y.array() == s.y.array()).count();
  return total;
}

std::uint64_t fingerprint(const SequenceSet& sequences) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix_bytes = [&h](const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& s : sequences) {
    const std::int64_t shape[4] = {s.y.rows(), s.y.cols(), s.u.rows(), s.u.cols()};
    mix_bytes(shape, sizeof(shape));
    for (Eigen::Index k = 0; k < s.y.size(); ++k) {
      double v = s.y.data()[k];
      if (std::isnan(v)) v = kNaN;  // one canonical NaN bit pattern
      mix_bytes(&v, sizeof(v));
    }
    mix_bytes(s.u.data(), sizeof(double) * static_cast<std::size_t>(s.u.size()));
  }
  return h;
}

FitData make_fit_data(const RestructuredSeries& series, const ModelSpec& spec) {
  FitData data;
  for (const auto& phase : series.phases) {
    Sequence seq;
    const auto T = static_cast<Eigen::Index>(phase.rows());
    seq.y.resize(spec.n(), T);
    seq.u.resize(spec.p(), T);
    for (int i = 0; i < spec.n(); ++i) {
      const auto& name = spec.observations[static_cast<std::size_t>(i)];
      if (!phase.has_column(name)) throw DataError("data has no observation column '" + name + "'");
      const auto& col = phase.column(name);
      for (Eigen::Index t = 0; t < T; ++t) seq.y(i, t) = col[static_cast<std::size_t>(t)];
    }
    for (int k = 0; k < spec.p(); ++k) {
      const auto& name = spec.inputs[static_cast<std::size_t>(k)];
      if (!phase.has_column(name)) throw DataError("data has no input column '" + name + "'");
      const auto& col = phase.column(name);
      for (Eigen::Index t = 0; t < T; ++t) {
        const double v = col[static_cast<std::size_t>(t)];
        if (!std::isfinite(v)) {
          throw DataError("input '" + name + "' is missing at t=" + format_number(phase.timestamps()[static_cast<std::size_t>(t)]));
        }
        seq.u(k, t) = v;
      }
    }
    data.sequences.push_back(std::move(seq));
  }
  data.fingerprint = fingerprint(data.sequences);
  return data;
}

FitData make_fit_data(const TimeSeriesTable& table, const ModelSpec& spec, int stride) {
  TimeSeriesTable work = table;
  StandardizationRecord record;
  if (spec.standardize) {
    auto [standardized, rec] = standardize(table, spec.observations);
    work = std::move(standardized);
    record = std::move(rec);
    // Inputs are centred but keep their units: with no intercept in the model,
    // a latent level driven by an input mean would otherwise bias the input
    // effects once the observations are demeaned.
    std::vector<std::vector<double>> cols;
    for (std::size_t c = 0; c < work.cols(); ++c) {
      cols.push_back(work.column(c));
      const std::string& name = work.names()[c];
      if (std::find(spec.inputs.begin(), spec.inputs.end(), name) == spec.inputs.end()) continue;
      double sum = 0.0;
      long count = 0;
      for (double v : cols.back())
        if (!std::isnan(v)) sum += v, ++count;
      const double mean = count > 0 ? sum / static_cast<double>(count) : 0.0;
      for (double& v : cols.back())
        if (!std::isnan(v)) v -= mean;
      record.stats[name] = ColumnStats{mean, 1.0};
    }
    work = TimeSeriesTable(work.timestamps(), work.names(), std::move(cols));
  }
  FitData data = stride == 1 ? make_fit_data(RestructuredSeries{{work}, 1}, spec)
                             : make_fit_data(lag_restructure(work, stride), spec);
  data.standardization = std::move(record);
  return data;
}

void check_data(const ModelSpec& spec, const FitData& data) {
  if (data.sequences.empty()) throw DataError("no data sequences");
  for (int i = 0; i < spec.n(); ++i) {
    long count = 0;
    double first = kNaN;
    bool varies = false;
    for (const auto& s : data.sequences) {
      if (s.y.rows() != spec.n()) throw DataError("data does not match the spec's observations");
      for (Eigen::Index t = 0; t < s.y.cols(); ++t) {
        const double v = s.y(i, t);
        if (std::isnan(v)) continue;
        if (count == 0) first = v;
        if (v != first) varies = true;
        ++count;
      }
    }
    const auto& name = spec.observations[static_cast<std::size_t>(i)];
    if (count < 2) throw DataError("observation '" + name + "' has fewer than two values");
    if (!varies) throw DataError("observation '" + name + "' is constant");
  }
}

// ---------------------------------------------------------------------------
// Optimizer coordinates: log variances, bounded correlations, raw otherwise.

namespace {

struct Transform {
  const ModelSpec* spec;
  const ParamLayout* layout;

  double diag_value(const ParamSet& ps, MatrixId id, int i) const {
    switch (id) {
      case MatrixId::Q: return ps.Q(i, i);
      case MatrixId::R: return ps.R(i, i);
      case MatrixId::P0: return ps.P0(i, i);
      default: return 1.0;
    }
  }

  Eigen::VectorXd to_unconstrained(const Eigen::VectorXd& v) const {
    ParamSet ps;
    unpack_into(v, *spec, *layout, ps);
    Eigen::VectorXd u(v.size());
    for (std::size_t k = 0; k < layout->size(); ++k) {
      const auto idx = static_cast<Eigen::Index>(k);
      switch (layout->kinds[k]) {
        case ParamKind::Plain: u(idx) = v(idx); break;
        case ParamKind::Variance: u(idx) = std::log(std::max(v(idx), 1e-12)); break;
        case ParamKind::Covariance: {
          const auto& ref = layout->positions[k][0];
          const double s = std::sqrt(diag_value(ps, ref.matrix, ref.row) * diag_value(ps, ref.matrix, ref.col));
          const double rho = s > 0 ? std::clamp(v(idx) / s, -kCorrelationLimit, kCorrelationLimit) : 0.0;
          u(idx) = std::atanh(rho);
          break;
        }
      }
    }
    return u;
  }

  Eigen::VectorXd to_natural(const Eigen::VectorXd& u) const {
    Eigen::VectorXd v(u.size());
    bool any_cov = false;
    for (std::size_t k = 0; k < layout->size(); ++k) {
      const auto idx = static_cast<Eigen::Index>(k);
      switch (layout->kinds[k]) {
        case ParamKind::Plain: v(idx) = u(idx); break;
        case ParamKind::Variance: v(idx) = std::exp(u(idx)); break;
        case ParamKind::Covariance:
          v(idx) = 0.0;
          any_cov = true;
          break;
      }
    }
    if (any_cov) {
      ParamSet ps;
      unpack_into(v, *spec, *layout, ps);
      for (std::size_t k = 0; k < layout->size(); ++k) {
        if (layout->kinds[k] != ParamKind::Covariance) continue;
        const auto& ref = layout->positions[k][0];
        const double s = std::sqrt(diag_value(ps, ref.matrix, ref.row) * diag_value(ps, ref.matrix, ref.col));
        v(static_cast<Eigen::Index>(k)) = std::tanh(u(static_cast<Eigen::Index>(k))) * s;
      }
    }
    return v;
  }
};

int group_of(MatrixId id) {
  switch (id) {
    case MatrixId::A:
    case MatrixId::B: return 0;
    case MatrixId::C:
    case MatrixId::D: return 1;
    case MatrixId::Q: return 2;
    case MatrixId::R: return 3;
    case MatrixId::x0: return 4;
    case MatrixId::P0: return 5;
  }
  return -1;
}

bool is_pd(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return true;
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  return llt.info() == Eigen::Success && llt.rcond() > 1e-12;
}

double nan_mean(const std::vector<double>& v) {
  double s = 0.0;
  long n = 0;
  for (double x : v)
    if (!std::isnan(x)) {
      s += x;
      ++n;
    }
  return n ? s / static_cast<double>(n) : kNaN;
}

double nan_var(const std::vector<double>& v) {
  const double mu = nan_mean(v);
  double s = 0.0;
  long n = 0;
  for (double x : v)
    if (!std::isnan(x)) {
      s += (x - mu) * (x - mu);
      ++n;
    }
  return n > 1 ? s / static_cast<double>(n - 1) : kNaN;
}

}  // namespace

// ---------------------------------------------------------------------------
// Starting values

ParamSet initial_params(const ModelSpec& spec, const FitData& data) {
  const ParamLayout layout = ParamLayout::from_spec(spec);
  const int n = spec.n();
  const int m = spec.m();

  // Observation rows concatenated across phases.
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(n));
  for (const auto& s : data.sequences)
    for (int i = 0; i < n; ++i)
      for (Eigen::Index t = 0; t < s.y.cols(); ++t) rows[static_cast<std::size_t>(i)].push_back(s.y(i, t));
  const std::size_t total = rows.empty() ? 0 : rows[0].size();
  std::vector<double> mean(static_cast<std::size_t>(n)), var(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    mean[static_cast<std::size_t>(i)] = nan_mean(rows[static_cast<std::size_t>(i)]);
    var[static_cast<std::size_t>(i)] = nan_var(rows[static_cast<std::size_t>(i)]);
  }

  // Loading column j: regress each indicator on the first principal component
  // of latent j's standardized indicators (missing entries count as the mean).
  Eigen::MatrixXd loading = Eigen::MatrixXd::Zero(n, m);
  for (int j = 0; j < m; ++j) {
    std::vector<int> ind;
    for (int i = 0; i < n; ++i) {
      const Entry& e = spec.C(i, j);
      if (!std::holds_alternative<Fixed>(e) && var[static_cast<std::size_t>(i)] > 0) ind.push_back(i);
    }
    if (ind.empty() || total < 2) continue;
    Eigen::MatrixXd z(static_cast<Eigen::Index>(ind.size()), static_cast<Eigen::Index>(total));
    for (std::size_t a = 0; a < ind.size(); ++a) {
      const auto i = static_cast<std::size_t>(ind[a]);
      const double sd = std::sqrt(var[i]);
      for (std::size_t t = 0; t < total; ++t) {
        const double v = rows[i][t];
        z(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(t)) = std::isnan(v) ? 0.0 : (v - mean[i]) / sd;
      }
    }
    Eigen::MatrixXd cov = z * z.transpose() / static_cast<double>(total);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    Eigen::VectorXd w = es.eigenvectors().col(es.eigenvectors().cols() - 1);
    if (w.sum() < 0) w = -w;
    Eigen::VectorXd score = z.transpose() * w;
    const double score_sd = std::sqrt(score.squaredNorm() / static_cast<double>(total));
    if (!(score_sd > 0)) continue;
    score /= score_sd;
    for (int i : ind) {
      double sxy = 0.0, sxx = 0.0, sx = 0.0, sy = 0.0;
      long cnt = 0;
      for (std::size_t t = 0; t < total; ++t) {
        const double y = rows[static_cast<std::size_t>(i)][t];
        if (std::isnan(y)) continue;
        const double x = score(static_cast<Eigen::Index>(t));
        sx += x;
        sy += y;
        sxy += x * y;
        sxx += x * x;
        ++cnt;
      }
      if (cnt < 2) continue;
      const double c = static_cast<double>(cnt);
      const double denom = sxx - sx * sx / c;
      if (denom > 0) loading(i, j) = (sxy - sx * sy / c) / denom;
    }
  }

  Eigen::VectorXd values(static_cast<Eigen::Index>(layout.size()));
  for (std::size_t k = 0; k < layout.size(); ++k) {
    const auto& ref = layout.positions[k][0];
    double v = 0.0;
    switch (ref.matrix) {
      case MatrixId::C: v = loading(ref.row, ref.col); break;
      case MatrixId::A: v = ref.row == ref.col ? 0.5 : 0.0; break;
      case MatrixId::Q:
      case MatrixId::P0: v = ref.row == ref.col ? 1.0 : 0.0; break;
      case MatrixId::R: {
        if (ref.row != ref.col) break;
        double s = 0.0;
        int cnt = 0;
        for (const auto& pos : layout.positions[k]) {
          const double vr = var[static_cast<std::size_t>(pos.row)];
          if (std::isfinite(vr)) {
            s += vr;
            ++cnt;
          }
        }
        v = cnt ? std::max(0.5 * s / cnt, kVarianceFloor) : 1.0;
        break;
      }
      default: v = 0.0;
    }
    values(static_cast<Eigen::Index>(k)) = v;
  }
  ParamSet ps;
  unpack_into(values, spec, layout, ps);
  return ps;
}

// ---------------------------------------------------------------------------
// EM

bool em_applicable(const ModelSpec& spec, const ParamSet& params, std::string* reason) {
  auto fail = [reason](std::string why) {
    if (reason) *reason = std::move(why);
    return false;
  };
  const ParamLayout layout = ParamLayout::from_spec(spec);
  for (std::size_t k = 0; k < layout.size(); ++k) {
    const int g = group_of(layout.positions[k][0].matrix);
    for (const auto& ref : layout.positions[k]) {
      if (group_of(ref.matrix) != g) return fail("label '" + layout.labels[k] + "' spans parameter groups");
    }
    if (g == 5) return fail("P0 has free entries");
  }
  for (int c = 0; c < spec.R.cols(); ++c) {
    for (int r = 0; r < spec.R.rows(); ++r) {
      const Entry& e = spec.R(r, c);
      if (r != c) {
        const auto* f = std::get_if<Fixed>(&e);
        if (!f || f->value != 0.0) return fail("R is not diagonal");
      }
    }
  }
  for (Eigen::Index i = 0; i < params.R.rows(); ++i)
    if (!(params.R(i, i) > 0)) return fail("R has a non-positive diagonal entry");
  if (!is_pd(params.Q)) return fail("Q is not positive definite");
  bool x0_free = false;
  for (int r = 0; r < spec.x0.rows(); ++r)
    if (!std::holds_alternative<Fixed>(spec.x0(r, 0))) x0_free = true;
  if (x0_free && !is_pd(params.P0)) return fail("x0 is free but P0 is not positive definite");
  return true;
}

namespace {

struct SufficientStats {
  int m = 0, n = 0, p = 0;
  double N = 0.0;           // transitions
  Eigen::MatrixXd Sxx;      // sum E[x_t x_t']
  Eigen::MatrixXd Sxz;      // sum E[x_t z_t'], z_t = (x_{t-1}, u_t)
  Eigen::MatrixXd Szz;      // sum E[z_t z_t']
  std::vector<Eigen::MatrixXd> Sww;  // per row: sum over observed t of E[w w'], w_t = (x_t, u_t)
  std::vector<Eigen::VectorXd> Syw;  // per row: sum y_it E[w_t]
  std::vector<double> Syy;
  std::vector<double> count;
  std::vector<Eigen::VectorXd> x0_mean;  // smoothed x_0 per sequence
  std::vector<Eigen::MatrixXd> x0_cov;
};

SufficientStats collect_stats(const ParamSet& ps, const FitData& data) {
  SufficientStats st;
  st.m = ps.latents();
  st.n = ps.observations();
  st.p = ps.inputs();
  const int m = st.m, n = st.n, p = st.p;
  const int q = m + p;
  st.Sxx = Eigen::MatrixXd::Zero(m, m);
  st.Sxz = Eigen::MatrixXd::Zero(m, q);
  st.Szz = Eigen::MatrixXd::Zero(q, q);
  st.Sww.assign(static_cast<std::size_t>(n), Eigen::MatrixXd::Zero(q, q));
  st.Syw.assign(static_cast<std::size_t>(n), Eigen::VectorXd::Zero(q));
  st.Syy.assign(static_cast<std::size_t>(n), 0.0);
  st.count.assign(static_cast<std::size_t>(n), 0.0);

  Eigen::MatrixXd Ezz(q, q), Eww(q, q);
  Eigen::VectorXd Ew(q);
  for (const auto& seq : data.sequences) {
    const FilterOutput f = kalman_filter(ps, seq);
    const SmootherOutput s = rts_smoother(ps, f);
    st.x0_mean.push_back(s.initial_mean);
    st.x0_cov.push_back(s.initial_cov);
    Eigen::VectorXd x_prev = s.initial_mean;
    Eigen::MatrixXd Exx_prev = s.initial_cov + x_prev * x_prev.transpose();
    for (int t = 0; t < seq.steps(); ++t) {
      const Eigen::VectorXd xt = s.mean.col(t);
      const Eigen::MatrixXd Exx = s.P(t) + xt * xt.transpose();
      const Eigen::MatrixXd Exx_lag = s.P_lag(t) + xt * x_prev.transpose();

      Ezz.topLeftCorner(m, m) = Exx_prev;
      Eww.topLeftCorner(m, m) = Exx;
      Ew.head(m) = xt;
      if (p > 0) {
        const Eigen::VectorXd ut = seq.u.col(t);
        Ezz.topRightCorner(m, p) = x_prev * ut.transpose();
        Ezz.bottomLeftCorner(p, m) = ut * x_prev.transpose();
        Ezz.bottomRightCorner(p, p) = ut * ut.transpose();
        Eww.topRightCorner(m, p) = xt * ut.transpose();
        Eww.bottomLeftCorner(p, m) = ut * xt.transpose();
        Eww.bottomRightCorner(p, p) = ut * ut.transpose();
        Ew.tail(p) = ut;
        st.Sxz.rightCols(p) += xt * ut.transpose();
      }
      st.Sxx += Exx;
      st.Sxz.leftCols(m) += Exx_lag;
      st.Szz += Ezz;
      st.N += 1.0;
      for (int i = 0; i < n; ++i) {
        const double y = seq.y(i, t);
        if (std::isnan(y)) continue;
        const auto ii = static_cast<std::size_t>(i);
        st.Sww[ii] += Eww;
        st.Syw[ii] += y * Ew;
        st.Syy[ii] += y * y;
        st.count[ii] += 1.0;
      }
      x_prev = xt;
      Exx_prev = Exx;
    }
  }
  return st;
}

/// Maximizes -1/2 v'Hv + g'v over v = f + D theta. Labels whose curvature is
/// zero (no information in the data) keep their current value.
Eigen::VectorXd constrained_gls(const Eigen::MatrixXd& H, const Eigen::VectorXd& g, const Eigen::VectorXd& f,
                                const Eigen::MatrixXd& D, const Eigen::VectorXd& current) {
  const Eigen::Index k = D.cols();
  Eigen::MatrixXd A = D.transpose() * H * D;
  Eigen::VectorXd b = D.transpose() * (g - H * f);
  const double scale = k > 0 ? A.diagonal().cwiseAbs().maxCoeff() : 0.0;
  std::vector<Eigen::Index> active, held;
  for (Eigen::Index j = 0; j < k; ++j) (A(j, j) > 1e-14 * scale && scale > 0 ? active : held).push_back(j);
  Eigen::VectorXd theta = current;
  if (active.empty()) return theta;
  Eigen::MatrixXd Aa(active.size(), active.size());
  Eigen::VectorXd ba(active.size());
  for (std::size_t a = 0; a < active.size(); ++a) {
    ba(static_cast<Eigen::Index>(a)) = b(active[a]);
    for (Eigen::Index h : held) ba(static_cast<Eigen::Index>(a)) -= A(active[a], h) * current(h);
    for (std::size_t c = 0; c < active.size(); ++c) Aa(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c)) = A(active[a], active[c]);
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(Aa);
  Eigen::VectorXd sol;
  if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
    sol = ldlt.solve(ba);
  } else {
    sol = Aa.completeOrthogonalDecomposition().solve(ba);
  }
  if (!sol.allFinite()) return theta;
  for (std::size_t a = 0; a < active.size(); ++a) theta(active[a]) = sol(static_cast<Eigen::Index>(a));
  return theta;
}

/// Labels of one parameter group and their coordinates in the vectorized block.
struct GroupSystem {
  std::vector<std::size_t> labels;  // indices into the layout
  Eigen::VectorXd f;                // fixed part of vec(block)
  Eigen::MatrixXd D;                // vec(block) = f + D theta
};

GroupSystem group_system(const ModelSpec& spec, const ParamLayout& layout, int group, int rows,
                         const std::function<Eigen::Index(MatrixId, int, int)>& vec_index, Eigen::Index dim) {
  GroupSystem gs;
  gs.f = Eigen::VectorXd::Zero(dim);
  for (MatrixId id : kAllMatrices) {
    if (group_of(id) != group) continue;
    const auto& cm = spec.matrix(id);
    for (int c = 0; c < cm.cols(); ++c)
      for (int r = 0; r < cm.rows(); ++r)
        if (const auto* fx = std::get_if<Fixed>(&cm(r, c))) gs.f(vec_index(id, r, c)) = fx->value;
  }
  for (std::size_t k = 0; k < layout.size(); ++k)
    if (group_of(layout.positions[k][0].matrix) == group) gs.labels.push_back(k);
  gs.D = Eigen::MatrixXd::Zero(dim, static_cast<Eigen::Index>(gs.labels.size()));
  for (std::size_t a = 0; a < gs.labels.size(); ++a)
    for (const auto& ref : layout.positions[gs.labels[a]])
      gs.D(vec_index(ref.matrix, ref.row, ref.col), static_cast<Eigen::Index>(a)) += 1.0;
  (void)rows;
  return gs;
}

Eigen::VectorXd gather(const Eigen::VectorXd& values, const std::vector<std::size_t>& labels) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(labels.size()));
  for (std::size_t a = 0; a < labels.size(); ++a) out(static_cast<Eigen::Index>(a)) = values(static_cast<Eigen::Index>(labels[a]));
  return out;
}

void scatter(Eigen::VectorXd& values, const std::vector<std::size_t>& labels, const Eigen::VectorXd& theta) {
  for (std::size_t a = 0; a < labels.size(); ++a) values(static_cast<Eigen::Index>(labels[a])) = theta(static_cast<Eigen::Index>(a));
}

/// Objective of the latent covariance step: log|Q| + tr(Q^{-1} S).
double q_objective(const Eigen::MatrixXd& Q, const Eigen::MatrixXd& S) {
  Eigen::LLT<Eigen::MatrixXd> llt(Q);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return logdet + llt.solve(S).trace();
}

}  // namespace

PackedParams em_step(const ModelSpec& spec, const PackedParams& current, const FitData& data) {
  const ParamLayout layout = ParamLayout::from_spec(spec);
  if (layout.size() == 0) return current;
  ParamSet ps = unpack(current, spec);
  std::string reason;
  if (!em_applicable(spec, ps, &reason)) throw ConfigError("EM does not apply to this spec: " + reason);

  const SufficientStats st = collect_stats(ps, data);
  const int m = st.m, n = st.n, p = st.p, q = m + p;
  Eigen::VectorXd values = current.values;

  // Transition block Phi = [A B] given Q.
  {
    auto idx = [m](MatrixId id, int r, int c) -> Eigen::Index {
      return static_cast<Eigen::Index>(id == MatrixId::A ? c : m + c) * m + r;
    };
    GroupSystem gs = group_system(spec, layout, 0, m, idx, static_cast<Eigen::Index>(m) * q);
    if (!gs.labels.empty()) {
      const Eigen::MatrixXd Qinv = ps.Q.llt().solve(Eigen::MatrixXd::Identity(m, m));
      Eigen::MatrixXd H(m * q, m * q);
      for (int a = 0; a < q; ++a)
        for (int b = 0; b < q; ++b) H.block(a * m, b * m, m, m) = st.Szz(a, b) * Qinv;
      const Eigen::MatrixXd G = Qinv * st.Sxz;
      const Eigen::VectorXd g = Eigen::Map<const Eigen::VectorXd>(G.data(), G.size());
      scatter(values, gs.labels, constrained_gls(H, g, gs.f, gs.D, gather(values, gs.labels)));
      unpack_into(values, spec, layout, ps);
    }
  }

  // Latent noise Q given the new Phi.
  {
    std::vector<std::size_t> qlabels;
    for (std::size_t k = 0; k < layout.size(); ++k)
      if (layout.positions[k][0].matrix == MatrixId::Q) qlabels.push_back(k);
    if (!qlabels.empty()) {
      Eigen::MatrixXd Phi(m, q);
      Phi.leftCols(m) = ps.A;
      if (p > 0) Phi.rightCols(p) = ps.B;
      Eigen::MatrixXd S = (st.Sxx - Phi * st.Sxz.transpose() - st.Sxz * Phi.transpose() +
                           Phi * st.Szz * Phi.transpose()) / st.N;
      S = 0.5 * (S + S.transpose()).eval();

      bool all_free = true, diagonal = true;
      for (int c = 0; c < m; ++c) {
        for (int r = 0; r < m; ++r) {
          const Entry& e = spec.Q(r, c);
          if (std::holds_alternative<Fixed>(e)) all_free = false;
          if (r != c) {
            const auto* fx = std::get_if<Fixed>(&e);
            if (!fx || fx->value != 0.0) diagonal = false;
          }
        }
      }
      // A fully free Q with one label per symmetric pair maximizes at S itself.
      if (all_free) {
        std::set<std::string> seen;
        for (int c = 0; c < m; ++c)
          for (int r = c; r < m; ++r)
            if (const auto* fr = std::get_if<Free>(&spec.Q(r, c))) seen.insert(fr->label);
        all_free = seen.size() == static_cast<std::size_t>(m * (m + 1) / 2) &&
                   qlabels.size() == static_cast<std::size_t>(m * (m + 1) / 2);
      }
      Eigen::VectorXd proposal = values;
      if (all_free) {
        for (std::size_t k : qlabels) {
          const auto& ref = layout.positions[k][0];
          proposal(static_cast<Eigen::Index>(k)) = S(ref.row, ref.col);
        }
      } else if (diagonal) {
        for (std::size_t k : qlabels) {
          double sum = 0.0;
          for (const auto& ref : layout.positions[k]) sum += S(ref.row, ref.row);
          proposal(static_cast<Eigen::Index>(k)) =
              std::max(sum / static_cast<double>(layout.positions[k].size()), kVarianceFloor);
        }
      } else {
        // Constrained structure: numeric maximization over the Q labels only.
        Transform tr{&spec, &layout};
        const Eigen::VectorXd u_all = tr.to_unconstrained(values);
        auto objective = [&](const Eigen::VectorXd& uq) {
          Eigen::VectorXd u = u_all;
          scatter(u, qlabels, uq);
          ParamSet trial;
          unpack_into(tr.to_natural(u), spec, layout, trial);
          return q_objective(trial.Q, S);
        };
        BfgsOptions bo;
        bo.grad_tol = 1e-10;
        bo.f_tol = 1e-14;
        bo.max_iter = 200;
        const BfgsResult r = bfgs_minimize(objective, gather(u_all, qlabels), bo);
        Eigen::VectorXd u = u_all;
        scatter(u, qlabels, r.x);
        proposal = values;
        const Eigen::VectorXd natural = tr.to_natural(u);
        for (std::size_t k : qlabels) proposal(static_cast<Eigen::Index>(k)) = natural(static_cast<Eigen::Index>(k));
      }
      ParamSet trial;
      unpack_into(proposal, spec, layout, trial);
      if (q_objective(trial.Q, S) <= q_objective(ps.Q, S)) {
        values = proposal;
        ps = trial;
      }
    }
  }

  // Observation block Psi = [C D] given R (diagonal).
  {
    auto idx = [n, m](MatrixId id, int r, int c) -> Eigen::Index {
      return static_cast<Eigen::Index>(id == MatrixId::C ? c : m + c) * n + r;
    };
    GroupSystem gs = group_system(spec, layout, 1, n, idx, static_cast<Eigen::Index>(n) * q);
    if (!gs.labels.empty()) {
      Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n * q, n * q);
      Eigen::VectorXd g = Eigen::VectorXd::Zero(n * q);
      for (int i = 0; i < n; ++i) {
        const auto ii = static_cast<std::size_t>(i);
        const double w = 1.0 / ps.R(i, i);
        for (int a = 0; a < q; ++a) {
          g(a * n + i) = st.Syw[ii](a) * w;
          for (int b = 0; b < q; ++b) H(a * n + i, b * n + i) = st.Sww[ii](a, b) * w;
        }
      }
      scatter(values, gs.labels, constrained_gls(H, g, gs.f, gs.D, gather(values, gs.labels)));
      unpack_into(values, spec, layout, ps);
    }
  }

  // Observation noise R given the new Psi: pooled residual variance per label.
  {
    Eigen::MatrixXd Psi(n, q);
    Psi.leftCols(m) = ps.C;
    if (p > 0) Psi.rightCols(p) = ps.D;
    for (std::size_t k = 0; k < layout.size(); ++k) {
      if (layout.positions[k][0].matrix != MatrixId::R) continue;
      double num = 0.0, den = 0.0;
      for (const auto& ref : layout.positions[k]) {
        const auto ii = static_cast<std::size_t>(ref.row);
        const Eigen::VectorXd psi = Psi.row(ref.row).transpose();
        num += st.Syy[ii] - 2.0 * psi.dot(st.Syw[ii]) + psi.dot(st.Sww[ii] * psi);
        den += st.count[ii];
      }
      if (den > 0) values(static_cast<Eigen::Index>(k)) = std::max(num / den, kVarianceFloor);
    }
    unpack_into(values, spec, layout, ps);
  }

  // Initial mean given the (fixed) P0.
  {
    auto idx = [](MatrixId, int r, int) -> Eigen::Index { return r; };
    GroupSystem gs = group_system(spec, layout, 4, m, idx, m);
    if (!gs.labels.empty()) {
      const Eigen::MatrixXd P0inv = ps.P0.llt().solve(Eigen::MatrixXd::Identity(m, m));
      const double K = static_cast<double>(st.x0_mean.size());
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(m);
      for (const auto& x : st.x0_mean) sum += x;
      scatter(values, gs.labels,
              constrained_gls(K * P0inv, P0inv * sum, gs.f, gs.D, gather(values, gs.labels)));
    }
  }

  PackedParams out = current;
  out.values = values;
  return out;
}

// ---------------------------------------------------------------------------
// Fitting

bool trace_non_increasing(const std::vector<double>& trace, double tol) {
  for (std::size_t k = 1; k < trace.size(); ++k)
    if (trace[k] > trace[k - 1] + tol) return false;
  return true;
}

namespace {

std::mutex observer_mutex;
FitObserver fit_observer;

void notify(const FitResult& r) {
  FitObserver observer;
  {
    std::lock_guard<std::mutex> lock(observer_mutex);
    observer = fit_observer;
  }
  if (observer) observer(r);
}

}  // namespace

FitObserver set_fit_observer(FitObserver observer) {
  std::lock_guard<std::mutex> lock(observer_mutex);
  std::swap(observer, fit_observer);
  return observer;
}

Eigen::VectorXd minus2ll_gradient(const ModelSpec& spec, const ParamSet& ps, const FitData& data) {
  std::string reason;
  if (!em_applicable(spec, ps, &reason)) throw ConfigError("analytic gradient does not apply: " + reason);
  const ParamLayout layout = ParamLayout::from_spec(spec);
  const SufficientStats st = collect_stats(ps, data);
  const int m = st.m, n = st.n, p = st.p, q = m + p;

  // Derivatives of the expected complete-data log-likelihood with every
  // matrix entry treated as a separate variable.
  Eigen::MatrixXd Phi(m, q);
  Phi.leftCols(m) = ps.A;
  if (p > 0) Phi.rightCols(p) = ps.B;
  const Eigen::MatrixXd Qinv = ps.Q.llt().solve(Eigen::MatrixXd::Identity(m, m));
  const Eigen::MatrixXd gPhi = Qinv * (st.Sxz - Phi * st.Szz);
  const Eigen::MatrixXd W =
      st.Sxx - Phi * st.Sxz.transpose() - st.Sxz * Phi.transpose() + Phi * st.Szz * Phi.transpose();
  const Eigen::MatrixXd gQ = 0.5 * (Qinv * W * Qinv - st.N * Qinv);

  Eigen::MatrixXd gPsi(n, q);
  Eigen::VectorXd gR(n);
  for (int i = 0; i < n; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    Eigen::VectorXd psi(q);
    psi.head(m) = ps.C.row(i).transpose();
    if (p > 0) psi.tail(p) = ps.D.row(i).transpose();
    const double r = ps.R(i, i);
    gPsi.row(i) = ((st.Syw[ii] - st.Sww[ii] * psi) / r).transpose();
    const double e = st.Syy[ii] - 2.0 * psi.dot(st.Syw[ii]) + psi.dot(st.Sww[ii] * psi);
    gR(i) = 0.5 * (e / (r * r) - st.count[ii] / r);
  }
  Eigen::VectorXd gx0 = Eigen::VectorXd::Zero(m);
  bool x0_free = false;
  for (const auto& kind : layout.positions)
    if (kind[0].matrix == MatrixId::x0) x0_free = true;
  if (x0_free) {
    const Eigen::MatrixXd P0inv = ps.P0.llt().solve(Eigen::MatrixXd::Identity(m, m));
    for (const auto& x : st.x0_mean) gx0 += P0inv * (x - ps.x0);
  }

  Eigen::VectorXd grad(static_cast<Eigen::Index>(layout.size()));
  for (std::size_t k = 0; k < layout.size(); ++k) {
    double g = 0.0;
    for (const auto& ref : layout.positions[k]) {
      switch (ref.matrix) {
        case MatrixId::A: g += gPhi(ref.row, ref.col); break;
        case MatrixId::B: g += gPhi(ref.row, m + ref.col); break;
        case MatrixId::C: g += gPsi(ref.row, ref.col); break;
        case MatrixId::D: g += gPsi(ref.row, m + ref.col); break;
        case MatrixId::Q: g += gQ(ref.row, ref.col); break;
        case MatrixId::R: g += ref.row == ref.col ? gR(ref.row) : 0.0; break;
        case MatrixId::x0: g += gx0(ref.row); break;
        case MatrixId::P0: break;
      }
    }
    grad(static_cast<Eigen::Index>(k)) = -2.0 * g;
  }
  return grad;
}

namespace {

/// d natural / d unconstrained; identity columns for plain labels.
Eigen::MatrixXd transform_jacobian(const Transform& tr, const Eigen::VectorXd& u) {
  const Eigen::Index k = u.size();
  Eigen::MatrixXd J = Eigen::MatrixXd::Identity(k, k);
  Eigen::VectorXd probe = u;
  for (Eigen::Index j = 0; j < k; ++j) {
    if (tr.layout->kinds[static_cast<std::size_t>(j)] == ParamKind::Plain) continue;
    const double h = 1e-6 * std::max(1.0, std::abs(u(j)));
    probe(j) = u(j) + h;
    const Eigen::VectorXd up = tr.to_natural(probe);
    probe(j) = u(j) - h;
    const Eigen::VectorXd down = tr.to_natural(probe);
    probe(j) = u(j);
    J.col(j) = (up - down) / (2.0 * h);
  }
  return J;
}

FitResult fit_from(const ModelSpec& spec, const ParamLayout& layout, const FitData& data,
                   const PackedParams& start, const FitOptions& opt) {
  FitResult res;
  res.model = spec.name;
  res.data_fingerprint = data.fingerprint;
  res.observed_entries = data.observed_entries();
  res.estimates = start;

  ParamSet ps;
  unpack_into(start.values, spec, layout, ps);
  double f = minus_two_log_likelihood(ps, data.sequences);
  res.trace.push_back(f);
  res.minus2ll = f;
  if (opt.max_iter <= 0) {
    res.method = "none";
    res.message = "no iterations requested";
    return res;
  }

  std::string reason;
  const bool em_ok = em_applicable(spec, ps, &reason);
  const bool use_em = em_ok && opt.em;
  if (em_ok && !opt.em) reason = "EM disabled";
  bool em_converged = false;
  if (use_em) {
    res.method = opt.refine ? "em+bfgs" : "em";
    for (int it = 0; it < opt.max_iter; ++it) {
      PackedParams next = em_step(spec, res.estimates, data);
      unpack_into(next.values, spec, layout, ps);
      const double f_next = minus_two_log_likelihood(ps, data.sequences);
      res.estimates = std::move(next);
      res.trace.push_back(f_next);
      res.em_iterations = it + 1;
      const double change = f - f_next;
      f = f_next;
      if (std::abs(change) < opt.tol) {
        em_converged = true;
        break;
      }
    }
    res.message = em_converged ? "EM converged" : "EM iteration limit reached";
  } else {
    res.method = "bfgs";
    res.message = "direct likelihood maximization (" + reason + ")";
  }
  res.minus2ll = f;
  res.converged = em_converged;

  if (!use_em || opt.refine) {
    const Transform tr{&spec, &layout};
    ParamSet work;
    auto objective = [&](const Eigen::VectorXd& u) {
      unpack_into(tr.to_natural(u), spec, layout, work);
      return minus_two_log_likelihood(work, data.sequences);
    };
    BfgsOptions bo;
    bo.max_iter = opt.max_iter;
    bo.f_tol = opt.tol;
    bo.initial_inverse_hessian = opt.inverse_hessian;
    auto gradient = [&](const Eigen::VectorXd& u) -> Eigen::VectorXd {
      if (em_ok) {
        ParamSet trial;
        unpack_into(tr.to_natural(u), spec, layout, trial);
        if (em_applicable(spec, trial)) {
          try {
            return transform_jacobian(tr, u).transpose() * minus2ll_gradient(spec, trial, data);
          } catch (const NumericalError&) {
          }
        }
      }
      return numeric_gradient(objective, u, bo.rel_step);
    };
    const Eigen::VectorXd u0 = tr.to_unconstrained(res.estimates.values);
    const BfgsResult r = bfgs_minimize(objective, gradient, u0, bo);
    // The transform round trip can move the start by rounding; keep the EM
    // point unless the quasi-Newton pass actually improved on it.
    if (r.f < f) {
      res.estimates.values = tr.to_natural(r.x);
      for (double v : r.trace)
        if (v < res.trace.back()) res.trace.push_back(v);
      res.minus2ll = r.f;
    }
    res.refine_iterations = r.iterations;
    res.inverse_hessian = r.inverse_hessian;
    res.converged = r.converged || em_converged;
    res.message += "; " + r.message;
  }
  res.iterations = res.em_iterations + res.refine_iterations;
  return res;
}

}  // namespace

FitResult fit(const ModelSpec& spec, const FitData& data, const FitOptions& opt) {
  const auto violations = validate_spec(spec);
  if (!violations.empty()) throw ConfigError("invalid model spec: " + violations.front());
  check_data(spec, data);
  const ParamLayout layout = ParamLayout::from_spec(spec);
  PackedParams start = opt.initial ? *opt.initial : pack(initial_params(spec, data), spec);
  if (start.labels != layout.labels) throw ConfigError("initial parameters do not match the spec's labels");

  FitResult best = fit_from(spec, layout, data, start, opt);
  notify(best);
  if (opt.starts > 1 && opt.max_iter > 0) {
    const Transform tr{&spec, &layout};
    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> normal(0.0, opt.start_jitter);
    const Eigen::VectorXd u0 = tr.to_unconstrained(start.values);
    for (int s = 1; s < opt.starts; ++s) {
      Eigen::VectorXd u = u0;
      for (Eigen::Index k = 0; k < u.size(); ++k) u(k) += normal(rng);
      PackedParams jittered = start;
      jittered.values = tr.to_natural(u);
      try {
        FitResult r = fit_from(spec, layout, data, jittered, opt);
        notify(r);
        if (r.minus2ll < best.minus2ll) best = std::move(r);
      } catch (const NumericalError&) {
        // A restart that leaves the valid region is simply discarded.
      }
    }
  }

  const auto k = static_cast<Eigen::Index>(layout.size());
  best.se = Eigen::VectorXd::Constant(k, kNaN);
  best.ci_low = Eigen::VectorXd::Constant(k, kNaN);
  best.ci_high = Eigen::VectorXd::Constant(k, kNaN);
  if (opt.standard_errors && opt.max_iter > 0) {
    const StandardErrors se = standard_errors(spec, best, data);
    best.se = se.se;
    best.ci_low = se.low;
    best.ci_high = se.high;
  }
  return best;
}

StandardErrors standard_errors(const ModelSpec& spec, const FitResult& fit, const FitData& data) {
  const ParamLayout layout = ParamLayout::from_spec(spec);
  const Eigen::VectorXd theta = fit.estimates.values;
  const Eigen::Index k = theta.size();
  StandardErrors out;
  out.se = Eigen::VectorXd::Constant(k, kNaN);
  out.low = Eigen::VectorXd::Constant(k, kNaN);
  out.high = Eigen::VectorXd::Constant(k, kNaN);
  if (k == 0) return out;

  ParamSet work;
  auto half_m2ll = [&](const Eigen::VectorXd& v) {
    unpack_into(v, spec, layout, work);
    return 0.5 * minus_two_log_likelihood(work, data.sequences);
  };
  auto safe = [&](const Eigen::VectorXd& v) { return safe_eval(half_m2ll, v); };
  Eigen::VectorXd h(k);
  for (Eigen::Index i = 0; i < k; ++i) h(i) = std::max(1e-4, 1e-4 * std::abs(theta(i)));
  Eigen::MatrixXd H;
  unpack_into(theta, spec, layout, work);
  if (em_applicable(spec, work)) {
    // Central differences of the analytic score: 2k smoother passes instead
    // of 2k^2 likelihood evaluations.
    try {
      H.resize(k, k);
      Eigen::VectorXd probe = theta;
      for (Eigen::Index j = 0; j < k; ++j) {
        probe(j) = theta(j) + h(j);
        unpack_into(probe, spec, layout, work);
        const Eigen::VectorXd up = minus2ll_gradient(spec, work, data);
        probe(j) = theta(j) - h(j);
        unpack_into(probe, spec, layout, work);
        const Eigen::VectorXd down = minus2ll_gradient(spec, work, data);
        probe(j) = theta(j);
        H.col(j) = 0.25 * (up - down) / h(j);
      }
      H = 0.5 * (H + H.transpose()).eval();
    } catch (const Error&) {
      H.resize(0, 0);
    }
  }
  if (H.size() == 0) H = numeric_hessian(safe, theta, h);

  std::vector<Eigen::Index> active;
  for (Eigen::Index i = 0; i < k; ++i) {
    if (H.row(i).allFinite()) {
      active.push_back(i);
    } else {
      out.flagged.push_back(layout.labels[static_cast<std::size_t>(i)]);
    }
  }
  // Drop the label dominating the weakest direction until the rest is positive definite.
  while (!active.empty()) {
    const auto a = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd Ha(a, a);
    for (Eigen::Index r = 0; r < a; ++r)
      for (Eigen::Index c = 0; c < a; ++c) Ha(r, c) = H(active[static_cast<std::size_t>(r)], active[static_cast<std::size_t>(c)]);
    Ha = 0.5 * (Ha + Ha.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Ha);
    const double top = es.eigenvalues().maxCoeff();
    if (top > 0 && es.eigenvalues().minCoeff() > 1e-10 * top) {
      const Eigen::MatrixXd cov = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
                                  es.eigenvectors().transpose();
      for (Eigen::Index r = 0; r < a; ++r) {
        const Eigen::Index i = active[static_cast<std::size_t>(r)];
        const double se = std::sqrt(cov(r, r));
        if (!(se > 0) || !std::isfinite(se)) {
          out.flagged.push_back(layout.labels[static_cast<std::size_t>(i)]);
          continue;
        }
        out.se(i) = se;
        out.low(i) = theta(i) - 1.96 * se;
        out.high(i) = theta(i) + 1.96 * se;
      }
      break;
    }
    Eigen::Index worst = 0;
    es.eigenvectors().col(0).cwiseAbs().maxCoeff(&worst);
    out.flagged.push_back(layout.labels[static_cast<std::size_t>(active[static_cast<std::size_t>(worst)])]);
    active.erase(active.begin() + worst);
  }
  return out;
}

ComparisonResult compare_models(const FitResult& base, const FitResult& alt) {
  if (base.data_fingerprint != alt.data_fingerprint) {
    throw DataError("compare: the two fits were made on different data");
  }
  ComparisonResult c;
  c.base_model = base.model;
  c.alternative_model = alt.model;
  c.base_minus2ll = base.minus2ll;
  c.alternative_minus2ll = alt.minus2ll;
  c.delta = base.minus2ll - alt.minus2ll;
  c.preferred = alt.minus2ll < base.minus2ll ? alt.model : base.model;
  c.base_parameters = base.free_parameters();
  c.alternative_parameters = alt.free_parameters();
  return c;
}

std::optional<PackedParams> embed(const ModelSpec& from, const PackedParams& estimates, const ModelSpec& to) {
  ParamSet ps = unpack(estimates, from);
  // Keep covariance labels strictly inside the correlation bounds so the
  // start is usable by both EM and the bounded transform.
  const ParamLayout layout = ParamLayout::from_spec(to);
  for (std::size_t k = 0; k < layout.size(); ++k) {
    if (layout.kinds[k] != ParamKind::Covariance) continue;
    for (const auto& ref : layout.positions[k]) {
      Eigen::MatrixXd* mat = ref.matrix == MatrixId::Q ? &ps.Q : ref.matrix == MatrixId::R ? &ps.R : &ps.P0;
      const double s = std::sqrt((*mat)(ref.row, ref.row) * (*mat)(ref.col, ref.col));
      (*mat)(ref.row, ref.col) = std::clamp((*mat)(ref.row, ref.col), -0.95 * s, 0.95 * s);
    }
  }
  try {
    return pack(ps, to);
  } catch (const DataError&) {
    return std::nullopt;
  }
}

std::pair<FitResult, FitResult> fit_nested_pair(const ModelSpec& base, const ModelSpec& alt, const FitData& data,
                                                const FitOptions& options) {
  FitResult base_fit = fit(base, data, options);
  FitResult alt_fit = fit(alt, data, options);
  if (alt_fit.minus2ll > base_fit.minus2ll && options.max_iter > 0) {
    if (auto start = embed(base, base_fit.estimates, alt)) {
      FitOptions o = options;
      o.initial = *start;
      o.starts = 1;
      FitResult second = fit(alt, data, o);
      if (second.minus2ll < alt_fit.minus2ll) alt_fit = std::move(second);
    }
  }
  return {std::move(base_fit), std::move(alt_fit)};
}

// ---------------------------------------------------------------------------
// Reports

std::string package_matrix_name(MatrixId id) {
  switch (id) {
    case MatrixId::C: return "Z";
    case MatrixId::A: return "B";
    case MatrixId::B: return "C";
    case MatrixId::D: return "D";
    case MatrixId::Q: return "Q";
    case MatrixId::R: return "R";
    case MatrixId::x0: return "x0";
    case MatrixId::P0: return "V0";
  }
  return "?";
}

std::vector<std::pair<std::string, std::string>> notation_bridge() {
  std::vector<std::pair<std::string, std::string>> out;
  for (MatrixId id : kAllMatrices) out.emplace_back(package_matrix_name(id), std::string(matrix_name(id)));
  return out;
}

namespace {

nlohmann::ordered_json number_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string fit_to_json(const FitResult& fit, const ModelSpec& spec) {
  using nlohmann::ordered_json;
  const ParamLayout layout = ParamLayout::from_spec(spec);
  ordered_json j;
  j["model"] = fit.model;
  j["method"] = fit.method;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["em_iterations"] = fit.em_iterations;
  j["refine_iterations"] = fit.refine_iterations;
  j["minus2ll"] = number_or_null(fit.minus2ll);
  j["free_parameters"] = fit.free_parameters();
  j["observed_entries"] = fit.observed_entries;
  j["data_fingerprint"] = hex64(fit.data_fingerprint);
  j["message"] = fit.message;
  ordered_json params = ordered_json::array();
  for (std::size_t k = 0; k < fit.estimates.labels.size(); ++k) {
    const auto idx = static_cast<Eigen::Index>(k);
    const std::string& label = fit.estimates.labels[k];
    ordered_json row;
    row["label"] = label;
    if (auto pos = layout.find(label)) {
      const auto& ref = layout.positions[*pos][0];
      row["package_name"] = package_matrix_name(ref.matrix) + "." + label;
      row["matrix"] = std::string(matrix_name(ref.matrix));
      row["row"] = ref.row;
      row["col"] = ref.col;
    }
    row["estimate"] = number_or_null(fit.estimates.values(idx));
    row["se"] = idx < fit.se.size() ? number_or_null(fit.se(idx)) : nullptr;
    row["low_ci"] = idx < fit.ci_low.size() ? number_or_null(fit.ci_low(idx)) : nullptr;
    row["up_ci"] = idx < fit.ci_high.size() ? number_or_null(fit.ci_high(idx)) : nullptr;
    params.push_back(std::move(row));
  }
  j["parameters"] = std::move(params);
  ordered_json bridge = ordered_json::array();
  for (const auto& [pkg, model] : notation_bridge()) bridge.push_back({{"package", pkg}, {"model", model}});
  j["notation"] = std::move(bridge);
  ordered_json trace = ordered_json::array();
  for (double v : fit.trace) trace.push_back(number_or_null(v));
  j["trace"] = std::move(trace);
  return j.dump(2) + "\n";
}

std::string comparison_to_json(const ComparisonResult& c) {
  nlohmann::ordered_json j;
  j["base_model"] = c.base_model;
  j["alternative_model"] = c.alternative_model;
  j["base_minus2ll"] = number_or_null(c.base_minus2ll);
  j["alternative_minus2ll"] = number_or_null(c.alternative_minus2ll);
  j["delta_ll"] = number_or_null(c.delta);
  j["preferred"] = c.preferred;
  j["base_parameters"] = c.base_parameters;
  j["alternative_parameters"] = c.alternative_parameters;
  return j.dump(2) + "\n";
}

}  // namespace lvssm
