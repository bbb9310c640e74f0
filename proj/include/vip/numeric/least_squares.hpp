#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace vip::numeric {

struct LsqResult {
  Eigen::VectorXd params;
  Eigen::MatrixXd covariance;
  double chi2 = 0.0;
  int iterations = 0;
};

/// Minimises sum(((y - A p) / sigma)^2). Throws FitError(singular) when the
/// weighted design matrix is rank deficient.
LsqResult weighted_linear_lsq(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& sigma);

/// Model evaluated at all points: fills `value` (n) and `jacobian` (n x p).
using ModelFn = std::function<void(const Eigen::VectorXd& params, Eigen::VectorXd& value,
                                   Eigen::MatrixXd& jacobian)>;

struct LmOptions {
  int max_iterations = 200;
  double relative_tolerance = 1e-10;
};

/// Levenberg-Marquardt on weighted residuals (y - f(p)) / sigma. Throws
/// FitError(no_convergence) after `max_iterations` without meeting the
/// tolerance, FitError(singular) if the final curvature matrix cannot be
/// inverted.
LsqResult levenberg_marquardt(const ModelFn& model, const Eigen::VectorXd& start,
                              const Eigen::VectorXd& y, const Eigen::VectorXd& sigma,
                              const LmOptions& options = {});

/// Standard normal CDF and density.
double normal_cdf(double z);
double normal_pdf(double z);

}  // namespace vip::numeric
