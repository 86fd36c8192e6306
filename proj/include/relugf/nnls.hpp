#pragma once

#include <Eigen/Dense>

namespace relugf {

struct NNLSResult {
  Eigen::VectorXd x;
  double residual_norm = 0.0;  // |A x - b|
  int iterations = 0;
  bool converged = true;
};

/// min |A x - b| subject to x >= 0 (Lawson-Hanson active-set method).
NNLSResult nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, int max_iterations = 0,
                double tol = 0.0);

}  // namespace relugf
