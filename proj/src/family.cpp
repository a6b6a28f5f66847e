#include "lmminfer/family.hpp"

#include "lmminfer/errors.hpp"

#include <cmath>
#include <string>

namespace lmminfer {

ExponentialFamily ExponentialFamily::parse(std::string_view s) {
  if (s == "gaussian") return ExponentialFamily(Name::Gaussian);
  if (s == "logit" || s == "binomial" || s == "bernoulli") return ExponentialFamily(Name::BernoulliLogit);
  if (s == "poisson") return ExponentialFamily(Name::PoissonLog);
  throw Error(ErrorCode::InvalidArgument, "unknown family '" + std::string(s) + "'");
}

std::string_view ExponentialFamily::label() const {
  switch (name_) {
    case Name::Gaussian: return "gaussian";
    case Name::BernoulliLogit: return "logit";
    case Name::PoissonLog: return "poisson";
  }
  return "unknown";
}

double ExponentialFamily::mean(double eta) const {
  switch (name_) {
    case Name::Gaussian: return eta;
    case Name::BernoulliLogit:
      return eta >= 0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
    case Name::PoissonLog: return std::exp(eta);
  }
  return eta;
}

double ExponentialFamily::variance(double eta) const {
  switch (name_) {
    case Name::Gaussian: return 1.0;
    case Name::BernoulliLogit: {
      const double mu = mean(eta);
      return mu * (1.0 - mu);
    }
    case Name::PoissonLog: return std::exp(eta);
  }
  return 1.0;
}

Eigen::VectorXd ExponentialFamily::mean(const Eigen::VectorXd& eta) const {
  return eta.unaryExpr([this](double e) { return mean(e); });
}

Eigen::VectorXd ExponentialFamily::variance(const Eigen::VectorXd& eta) const {
  return eta.unaryExpr([this](double e) { return variance(e); });
}

void ExponentialFamily::check_response(const Eigen::VectorXd& y) const {
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double v = y(i);
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "non-finite response");
    if (name_ == Name::BernoulliLogit && v != 0.0 && v != 1.0) {
      throw Error(ErrorCode::InvalidArgument, "logit family needs 0/1 responses");
    }
    if (name_ == Name::PoissonLog && (v < 0.0 || v != std::floor(v))) {
      throw Error(ErrorCode::InvalidArgument, "poisson family needs non-negative integer responses");
    }
  }
}

}  // namespace lmminfer
