#pragma once

#include <Eigen/Dense>

#include <string_view>

namespace lmminfer {

// Canonical-link exponential family; only the mean b'(eta) and variance
// b''(eta) functions enter the estimators and the test.
class ExponentialFamily {
 public:
  enum class Name { Gaussian, BernoulliLogit, PoissonLog };

  explicit ExponentialFamily(Name name = Name::Gaussian) : name_(name) {}

  static ExponentialFamily parse(std::string_view s);

  Name name() const { return name_; }
  std::string_view label() const;

  double mean(double eta) const;
  double variance(double eta) const;
  Eigen::VectorXd mean(const Eigen::VectorXd& eta) const;
  Eigen::VectorXd variance(const Eigen::VectorXd& eta) const;

  // Throws InvalidArgument for responses outside the family's support.
  void check_response(const Eigen::VectorXd& y) const;

 private:
  Name name_;
};

}  // namespace lmminfer
