#include "lmminfer/normal.hpp"

#include "lmminfer/errors.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>

namespace lmminfer {

namespace {
const boost::math::normal_distribution<double> kStd(0.0, 1.0);
}

double normal_cdf(double x) {
  if (std::isnan(x)) throw Error(ErrorCode::InvalidArgument, "normal_cdf of NaN");
  if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
  return boost::math::cdf(kStd, x);
}

double normal_ccdf(double x) {
  if (std::isnan(x)) throw Error(ErrorCode::InvalidArgument, "normal_ccdf of NaN");
  if (std::isinf(x)) return x > 0 ? 0.0 : 1.0;
  return boost::math::cdf(boost::math::complement(kStd, x));
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::InvalidArgument, "normal_quantile needs p in (0, 1)");
  return boost::math::quantile(kStd, p);
}

double kolmogorov_sf(double x) {
  if (x <= 0.0) return 1.0;
  if (x < 0.27) return 1.0;
  if (x < 1.0) {
    // Theta-function form converges fast for small x.
    const double pi = 3.14159265358979323846;
    const double c = std::sqrt(2.0 * pi) / x;
    double s = 0.0;
    for (int k = 1; k <= 20; ++k) {
      const double a = (2 * k - 1) * pi / (2.0 * x);
      s += std::exp(-0.5 * a * a);
    }
    return std::clamp(1.0 - c * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    s += (k % 2 ? 1.0 : -1.0) * term;
    if (term < 1e-17) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

KsResult ks_uniform(std::vector<double> samples) {
  if (samples.empty()) throw Error(ErrorCode::InvalidArgument, "KS test needs at least one sample");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double u = std::clamp(samples[i], 0.0, 1.0);
    d = std::max(d, (static_cast<double>(i) + 1.0) / n - u);
    d = std::max(d, u - static_cast<double>(i) / n);
  }
  const double sn = std::sqrt(n);
  return {d, kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)};
}

}  // namespace lmminfer
