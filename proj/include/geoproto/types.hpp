#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace geoproto {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using IndexList = std::vector<Index>;

/// Class ids are 1-based everywhere a user can see them.
using ClassId = int;

/// x^n for integer n >= 0 by repeated squaring; negative bases stay exact in sign.
inline double ipow(double x, int n) {
  double result = 1.0;
  double base = x;
  unsigned e = static_cast<unsigned>(n);
  while (e != 0) {
    if (e & 1U) result *= base;
    base *= base;
    e >>= 1U;
  }
  return result;
}

}  // namespace geoproto
