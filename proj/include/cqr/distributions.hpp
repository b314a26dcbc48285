#pragma once

namespace cqr {

/// Regularized upper incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a).
double gamma_q(double a, double x);

/// P(chi2_k > x).
double chi2_sf(double x, int k);

/// Upper-tail critical value: the x with chi2_sf(x, k) = upper_tail.
double chi2_critical(double upper_tail, int k);

double normal_cdf(double x);

/// Inverse standard normal CDF.
double normal_quantile(double p);

}  // namespace cqr
