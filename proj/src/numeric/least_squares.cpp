#include "vip/numeric/least_squares.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "vip/model/errors.hpp"

namespace vip::numeric {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

namespace {

Eigen::MatrixXd invert_spd(const Eigen::MatrixXd& m) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
  const double scale = m.diagonal().cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || !(scale > 0.0) ||
      (ldlt.vectorD().array() <= 1e-13 * scale).any())
    throw FitError(FitError::Kind::singular, "singular normal equations");
  return ldlt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
}

}  // namespace

LsqResult weighted_linear_lsq(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& sigma) {
  const Eigen::VectorXd w = sigma.cwiseInverse();
  const Eigen::MatrixXd a = w.asDiagonal() * design;
  const Eigen::VectorXd b = w.cwiseProduct(y);
  if (a.rows() < a.cols())
    throw FitError(FitError::Kind::singular, "fewer points than parameters");
  // Column-pivoted QR for the solution, the normal matrix for covariance.
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() < a.cols()) throw FitError(FitError::Kind::singular, "rank-deficient design");
  LsqResult out;
  out.params = qr.solve(b);
  out.covariance = invert_spd(a.transpose() * a);
  out.chi2 = (a * out.params - b).squaredNorm();
  out.iterations = 1;
  return out;
}

LsqResult levenberg_marquardt(const ModelFn& model, const Eigen::VectorXd& start,
                              const Eigen::VectorXd& y, const Eigen::VectorXd& sigma,
                              const LmOptions& options) {
  const Eigen::Index n = y.size(), p = start.size();
  if (n < p) throw FitError(FitError::Kind::singular, "fewer points than parameters");
  const Eigen::VectorXd w = sigma.cwiseInverse();

  Eigen::VectorXd params = start, value(n), trial_value(n);
  Eigen::MatrixXd jac(n, p), trial_jac(n, p);
  model(params, value, jac);
  double chi2 = (y - value).cwiseProduct(w).squaredNorm();
  double lambda = 1e-3;

  for (int it = 1; it <= options.max_iterations; ++it) {
    const Eigen::MatrixXd wj = w.asDiagonal() * jac;
    const Eigen::VectorXd wr = (y - value).cwiseProduct(w);
    const Eigen::MatrixXd jtj = wj.transpose() * wj;
    const Eigen::VectorXd grad = wj.transpose() * wr;

    bool improved = false;
    for (int inner = 0; inner < 30 && !improved; ++inner) {
      Eigen::MatrixXd damped = jtj;
      damped.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
      const Eigen::VectorXd step = damped.ldlt().solve(grad);
      if (!step.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      const Eigen::VectorXd trial = params + step;
      model(trial, trial_value, trial_jac);
      const double trial_chi2 = (y - trial_value).cwiseProduct(w).squaredNorm();
      if (std::isfinite(trial_chi2) && trial_chi2 <= chi2) {
        const double change = chi2 - trial_chi2;
        const bool small_step =
            (step.array().abs() <= options.relative_tolerance * (params.array().abs() + 1e-12))
                .all();
        params = trial;
        value = trial_value;
        jac = trial_jac;
        improved = true;
        lambda = std::max(lambda * 0.3, 1e-12);
        if (change <= options.relative_tolerance * (chi2 + 1e-12) || small_step) {
          chi2 = trial_chi2;
          const Eigen::MatrixXd fj = w.asDiagonal() * jac;
          LsqResult out;
          out.params = params;
          out.covariance = invert_spd(fj.transpose() * fj);
          out.chi2 = chi2;
          out.iterations = it;
          return out;
        }
        chi2 = trial_chi2;
      } else {
        lambda *= 10.0;
      }
    }
    if (!improved) {
      // No descent direction left: we are at the minimum to working precision.
      const Eigen::MatrixXd fj = w.asDiagonal() * jac;
      LsqResult out;
      out.params = params;
      out.covariance = invert_spd(fj.transpose() * fj);
      out.chi2 = chi2;
      out.iterations = it;
      return out;
    }
  }
  std::ostringstream msg;
  msg << "no convergence after " << options.max_iterations << " iterations (chi2=" << chi2
      << ", lambda=" << lambda << ")";
  throw FitError(FitError::Kind::no_convergence, msg.str());
}

}  // namespace vip::numeric
