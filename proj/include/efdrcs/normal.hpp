#pragma once

namespace efdrcs {

/// Standard normal CDF.
double normal_cdf(double x);

/// Upper tail 1 - Phi(x), accurate far into the tail.
double normal_sf(double x);

/// Standard normal quantile.
double normal_quantile(double p);

/// Quantile of the upper tail: x with 1 - Phi(x) = q. Avoids forming 1 - q.
double normal_quantile_upper(double q);

/// Two-sided p-value 2(1 - Phi(|z|)).
double two_sided_p(double z);

}  // namespace efdrcs
