// Model estimation from historical return panels: sample covariance,
// quasi-Newton (BFGS) minimization with finite-difference gradients, the
// covariance-coefficient fit, expected-return estimation and the risk
// aversion implied by an investment target.

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mgopt/common.hpp"
#include "mgopt/mgarch.hpp"

namespace mgopt::estimation {

/// A panel of simple returns, one row per period.
struct ReturnPanel {
  std::vector<std::string> dates;  ///< optional, same length as rows when present
  Mat returns;                     ///< L x n

  Eigen::Index length() const { return returns.rows(); }
  Eigen::Index dim() const { return returns.cols(); }
  void validate() const;
};

/// Sample covariance with divisor L: (1/L) sum_t (R_t - Rbar)(R_t - Rbar)^T.
Mat sample_initial_covariance(const ReturnPanel& panel);

struct QuasiNewtonOptions {
  int max_iter = 200;
  double grad_tol = 1e-8;
  double fd_step = 1e-6;  ///< relative central-difference step
};

struct QuasiNewtonReport {
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
  std::vector<double> loss_trace;  ///< objective at each accepted iterate
};

/// BFGS with central-difference gradients and an Armijo backtracking line
/// search that first tries the quadratic-interpolation step (exact for
/// quadratic objectives). Stops when the gradient norm falls below grad_tol
/// or after max_iter iterations.
std::pair<Vec, QuasiNewtonReport> quasi_newton_minimize(
    const std::function<double(const Vec&)>& objective, const Vec& x0,
    const QuasiNewtonOptions& opts = {});

enum class MgarchLoss {
  kPathSmoothness,  ///< sum of squared Frobenius covariance increments
  kGaussianQml,     ///< negative Gaussian quasi-log-likelihood
};

struct FitOptions {
  QuasiNewtonOptions optimizer{.max_iter = 150, .grad_tol = 1e-6};
  std::optional<Vec> mu;  ///< shock centre; sample mean when unset
  double init_diag_a = 0.3;
  double init_diag_b = 0.3;
};

struct FitReport {
  mgarch::ModelParams params;
  std::vector<double> loss_trace;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
  MgarchLoss loss_kind = MgarchLoss::kPathSmoothness;
};

/// Fit A, B (free) and C (lower-triangular, diagonal kept positive so C C^T
/// stays full rank at every iterate) by minimizing the chosen loss along the
/// covariance sequence filtered from the panel. Non-convergence is reported
/// in the result, not thrown.
FitReport fit_mgarch(const ReturnPanel& panel, const Mat& sigma0,
                     MgarchLoss loss, const FitOptions& opts = {});

enum class MuMethod { kSampleMean, kEigenPortfolio };

/// Expected-return estimate. The eigen-portfolio variant projects the sample
/// mean onto the span of the top-k eigenvectors of the sample correlation
/// matrix and rescales to preserve the cross-sectional mean.
Vec estimate_mu(const ReturnPanel& panel, MuMethod method, int top_k = 1);

/// Risk aversion calibrated so that roughly w0 of capital ends up invested:
/// gamma = (1/w0) * sum_i (sigma_bar^{-1} mu)_i.
double compute_gamma(const Mat& sigma_bar, const Vec& mu, double w0);

}  // namespace mgopt::estimation
