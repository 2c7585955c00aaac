#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "convctl/errors.hpp"

namespace convctl {

struct SymmetricEigen3 {
  Eigen::Vector3d values;   ///< descending
  Eigen::Matrix3d vectors;  ///< columns match `values`
};

/// Cyclic Jacobi rotations on a symmetric 3x3 matrix.
inline SymmetricEigen3 symmetric_eigen(const Eigen::Matrix3d& input, int max_sweeps = 30) {
  Eigen::Matrix3d a = 0.5 * (input + input.transpose());
  if (!a.allFinite()) throw NumericalError("symmetric_eigen: non-finite input");
  Eigen::Matrix3d v = Eigen::Matrix3d::Identity();
  const double scale = a.squaredNorm();

  bool converged = scale == 0.0;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    const double off = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
    if (off <= 1e-34 * scale) {
      converged = true;
      break;
    }
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        Eigen::Matrix3d g = Eigen::Matrix3d::Identity();
        g(p, p) = c;
        g(q, q) = c;
        g(p, q) = s;
        g(q, p) = -s;
        a = g.transpose() * a * g;
        a(p, q) = a(q, p) = 0.0;
        v = v * g;
      }
    }
  }
  if (!converged) {
    const double off = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
    // a final sweep budget miss is only fatal when the residual is not round-off
    if (off > 1e-28 * std::max(scale, 1e-300))
      throw NumericalError("symmetric_eigen: Jacobi sweeps did not converge", std::sqrt(off));
  }

  std::array<int, 3> idx{0, 1, 2};
  std::sort(idx.begin(), idx.end(), [&](int i, int j) { return a(i, i) > a(j, j); });
  SymmetricEigen3 out;
  for (int k = 0; k < 3; ++k) {
    out.values(k) = a(idx[k], idx[k]);
    out.vectors.col(k) = v.col(idx[k]);
  }
  return out;
}

}  // namespace convctl
