#pragma once

#include <vector>

namespace lmminfer {

double normal_cdf(double x);
double normal_ccdf(double x);      // 1 - Phi(x) without cancellation
double normal_quantile(double p);

struct KsResult {
  double statistic = 0.0;   // sup |F_n - F|
  double p_value = 1.0;
};

// One-sample Kolmogorov-Smirnov test against U(0, 1). The p-value uses the
// limiting Kolmogorov distribution with the Stephens small-sample correction.
KsResult ks_uniform(std::vector<double> samples);

// Survival function of the Kolmogorov distribution, P(K > x).
double kolmogorov_sf(double x);

}  // namespace lmminfer
