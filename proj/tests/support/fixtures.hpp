#pragma once

#include "lmminfer/model.hpp"

#include <random>
#include <vector>

namespace fixture {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline MatrixXd gaussian(std::mt19937_64& rng, int rows, int cols) {
  std::normal_distribution<double> g;
  MatrixXd m(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) m(i, j) = g(rng);
  }
  return m;
}

// Grouped dataset with Gaussian entries; W is drawn independently of X.
inline lmminfer::GroupedDataset random_grouped(std::mt19937_64& rng, const std::vector<int>& sizes, int k, int q) {
  lmminfer::GroupedDataset d;
  int n = 0;
  for (int s : sizes) n += s;
  d.groups = sizes;
  d.q = q;
  d.X = gaussian(rng, n, k);
  d.Z = gaussian(rng, n, 1);
  d.y = gaussian(rng, n, 1).col(0);
  for (int s : sizes) d.W.push_back(gaussian(rng, s, q));
  return d;
}

inline MatrixXd random_psd(std::mt19937_64& rng, int q, double ridge = 0.0) {
  const MatrixXd a = gaussian(rng, q, q);
  return a * a.transpose() + ridge * MatrixXd::Identity(q, q);
}

}  // namespace fixture
