#pragma once

namespace bimark::stats {

/// Standard normal CDF.
double normal_cdf(double z);
/// 1 - Phi(z), evaluated as erfc(z / sqrt 2) / 2 so the far tail keeps full
/// relative precision (z = 20 gives ~2.8e-89, not 0).
double normal_upper_tail(double z);
/// Phi^-1(p) for p in (0, 1).
double normal_quantile(double p);

}  // namespace bimark::stats
