#pragma once

namespace qfuse {

/// Standard normal CDF.
double normal_cdf(double x);

/// Inverse standard normal CDF on (0,1). Rational initial guess refined by
/// one Halley step against normal_cdf; absolute error is far below 1e-9
/// across [1e-6, 1-1e-6].
double probit(double p);

}  // namespace qfuse
