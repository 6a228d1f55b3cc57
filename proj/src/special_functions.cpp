#include "lvssm/special_functions.hpp"

#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>

#include "lvssm/error.hpp"

namespace lvssm {

namespace {

// Continued fraction for I_x(a, b) (modified Lentz), valid for x < (a+1)/(a+b+2).
double beta_continued_fraction(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 100000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) return h;
  }
  throw NumericalError("incomplete beta: continued fraction did not converge");
}

}  // namespace

double log_beta(double a, double b) {
  return boost::math::lgamma(a) + boost::math::lgamma(b) - boost::math::lgamma(a + b);
}

double log_regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0) || !(b > 0)) throw NumericalError("incomplete beta: shape parameters must be positive");
  if (x <= 0.0) return -std::numeric_limits<double>::infinity();
  if (x >= 1.0) return 0.0;
  const double front = a * std::log(x) + b * std::log1p(-x) - log_beta(a, b);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front + std::log(beta_continued_fraction(a, b, x)) - std::log(a);
  }
  const double complement = std::exp(front + std::log(beta_continued_fraction(b, a, 1.0 - x)) - std::log(b));
  return std::log1p(-complement);
}

double log_power_ratio_integral(double a, double c, double W, double B, double upper) {
  if (!(W > 0) || !(upper > 0) || B < 0) throw NumericalError("power ratio integral: invalid arguments");
  const double t0 = B * upper / (W + B * upper);
  if (t0 < 1e-300 || B == 0.0) {
    // B -> 0 limit: integral of w^a W^-c.
    return (a + 1.0) * std::log(upper) - std::log(a + 1.0) - c * std::log(W);
  }
  // Substituting t = B w / (W + B w) gives a Beta(a+1, c-a-1) kernel.
  const double alpha = a + 1.0, beta = c - a - 1.0;
  if (!(beta > 0)) throw NumericalError("power ratio integral: divergent exponent");
  return (a + 1.0 - c) * std::log(W) - (a + 1.0) * std::log(B) + log_beta(alpha, beta) +
         log_regularized_incomplete_beta(alpha, beta, t0);
}

}  // namespace lvssm
