#pragma once

namespace lvssm {

double log_beta(double a, double b);

/// log of the regularized incomplete beta function I_x(a, b), evaluated in
/// log space so that tails far below DBL_MIN stay finite.
double log_regularized_incomplete_beta(double a, double b, double x);

/// log of  integral_0^upper  w^a (W + B w)^(-c) dw  for W > 0, B >= 0, upper > 0.
/// With B > 0 the Beta substitution needs c > a + 1; other exponents throw
/// NumericalError.
double log_power_ratio_integral(double a, double c, double W, double B, double upper);

}  // namespace lvssm
