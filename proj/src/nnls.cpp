#include "relugf/nnls.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace relugf {

namespace {

// Least squares restricted to the passive columns; other entries are zero.
Eigen::VectorXd solve_passive(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                              const std::vector<bool>& passive) {
  std::vector<Eigen::Index> cols;
  for (Eigen::Index j = 0; j < A.cols(); ++j) {
    if (passive[j]) cols.push_back(j);
  }
  Eigen::MatrixXd sub(A.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) sub.col(c) = A.col(cols[c]);
  const Eigen::VectorXd z = sub.completeOrthogonalDecomposition().solve(b);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(A.cols());
  for (std::size_t c = 0; c < cols.size(); ++c) out[cols[c]] = z[c];
  return out;
}

}  // namespace

NNLSResult nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, int max_iterations,
                double tol) {
  const Eigen::Index m = A.cols();
  if (max_iterations <= 0) max_iterations = static_cast<int>(3 * m + 30);
  if (tol <= 0.0) {
    tol = 10.0 * std::numeric_limits<double>::epsilon() * std::max<double>(1.0, m) *
          std::max(1.0, A.cwiseAbs().maxCoeff()) * std::max(1.0, b.cwiseAbs().maxCoeff());
  }
  NNLSResult res;
  res.x = Eigen::VectorXd::Zero(m);
  std::vector<bool> passive(m, false);
  Eigen::VectorXd grad = A.transpose() * (b - A * res.x);

  for (;;) {
    // Most promising inactive coordinate.
    Eigen::Index best = -1;
    double best_val = tol;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (!passive[j] && grad[j] > best_val) {
        best_val = grad[j];
        best = j;
      }
    }
    if (best < 0) break;
    if (res.iterations >= max_iterations) {
      res.converged = false;
      break;
    }
    ++res.iterations;
    passive[best] = true;

    for (;;) {
      Eigen::VectorXd z = solve_passive(A, b, passive);
      bool feasible = true;
      for (Eigen::Index j = 0; j < m; ++j) {
        if (passive[j] && z[j] <= 0.0) feasible = false;
      }
      if (feasible) {
        res.x = z;
        break;
      }
      // Step towards z until the first passive coordinate hits zero.
      double alpha = 1.0;
      for (Eigen::Index j = 0; j < m; ++j) {
        if (passive[j] && z[j] <= 0.0) {
          const double denom = res.x[j] - z[j];
          if (denom > 0.0) alpha = std::min(alpha, res.x[j] / denom);
        }
      }
      res.x += alpha * (z - res.x);
      for (Eigen::Index j = 0; j < m; ++j) {
        if (passive[j] && res.x[j] <= tol) {
          passive[j] = false;
          res.x[j] = 0.0;
        }
      }
    }
    grad = A.transpose() * (b - A * res.x);
  }
  res.residual_norm = (A * res.x - b).norm();
  return res;
}

}  // namespace relugf
