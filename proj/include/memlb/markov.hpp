#pragma once

#include <Eigen/Dense>

#include "memlb/errors.hpp"

namespace memlb {

// Stationary row vector of a finite row-stochastic matrix via
// Grassmann-Taksar-Heyman state reduction. Subtraction-free, so it stays
// accurate when some transition probabilities are tiny. Requires that every
// state k > 0 can reach a lower-numbered state (true for the memory chains,
// where the occupancy always drops by one with positive probability).
inline Eigen::VectorXd stationary_distribution(Eigen::MatrixXd P) {
  const Eigen::Index n = P.rows();
  if (P.cols() != n || n == 0) throw InvalidParameter("stationary_distribution: matrix must be square and non-empty");

  for (Eigen::Index k = n - 1; k > 0; --k) {
    const double s = P.row(k).head(k).sum();
    if (!(s > 0)) throw DomainError("stationary_distribution: state cannot reach lower states");
    P.col(k).head(k) /= s;
    P.topLeftCorner(k, k).noalias() += P.col(k).head(k) * P.row(k).head(k);
  }

  Eigen::VectorXd x(n);
  x(0) = 1.0;
  for (Eigen::Index k = 1; k < n; ++k) x(k) = x.head(k).dot(P.col(k).head(k));
  return x / x.sum();
}

}  // namespace memlb
