#include "mgopt/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mgopt::estimation {

namespace {

constexpr double kDiagFloor = 1e-6;

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double softplus_inverse(double y) {
  if (y > 30.0) return y;
  return std::log(std::expm1(std::max(y, 1e-300)));
}

struct CoefficientCodec {
  int n;

  int size() const { return 2 * n * n + n * (n + 1) / 2; }

  Vec encode(const Mat& a, const Mat& b, const Mat& c) const {
    Vec x(size());
    int k = 0;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) x[k++] = a(i, j);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) x[k++] = b(i, j);
    for (int j = 0; j < n; ++j)
      for (int i = j; i < n; ++i) {
        x[k++] = (i == j) ? softplus_inverse(c(i, j) - kDiagFloor) : c(i, j);
      }
    return x;
  }

  void decode(const Vec& x, Mat& a, Mat& b, Mat& c) const {
    a.resize(n, n);
    b.resize(n, n);
    c = Mat::Zero(n, n);
    int k = 0;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) a(i, j) = x[k++];
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) b(i, j) = x[k++];
    for (int j = 0; j < n; ++j)
      for (int i = j; i < n; ++i) {
        c(i, j) = (i == j) ? kDiagFloor + softplus(x[k++]) : x[k++];
      }
  }
};

}  // namespace

void ReturnPanel::validate() const {
  if (returns.rows() < dim() + 1) {
    throw DataError("ReturnPanel: need at least n+1 rows, got " +
                    std::to_string(returns.rows()));
  }
  if (!returns.allFinite()) {
    throw DataError("ReturnPanel: returns contain NaN or infinity");
  }
  if (!dates.empty() && static_cast<Eigen::Index>(dates.size()) != length()) {
    throw DataError("ReturnPanel: dates/returns length mismatch");
  }
}

Mat sample_initial_covariance(const ReturnPanel& panel) {
  const auto l = panel.length();
  if (l < 2) throw DataError("sample_initial_covariance: need at least 2 rows");
  const Vec mean = panel.returns.colwise().mean();
  const Mat centered = panel.returns.rowwise() - mean.transpose();
  return symmetrized(centered.transpose() * centered / static_cast<double>(l));
}

std::pair<Vec, QuasiNewtonReport> quasi_newton_minimize(
    const std::function<double(const Vec&)>& objective, const Vec& x0,
    const QuasiNewtonOptions& opts) {
  const auto n = x0.size();
  QuasiNewtonReport report;

  auto eval = [&](const Vec& x) { return objective(x); };
  auto gradient = [&](const Vec& x) {
    Vec g(n);
    Vec xp = x;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double h = opts.fd_step * std::max(1.0, std::abs(x[i]));
      const double xi = x[i];
      xp[i] = xi + h;
      const double fp = eval(xp);
      xp[i] = xi - h;
      const double fm = eval(xp);
      xp[i] = xi;
      g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
  };

  Vec x = x0;
  double fx = eval(x);
  if (!std::isfinite(fx)) {
    throw NumericalError("quasi_newton_minimize: objective not finite at x0");
  }
  report.loss_trace.push_back(fx);

  Vec g = gradient(x);
  Mat h_inv = Mat::Identity(n, n);
  bool first_update = true;

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    report.gradient_norm = g.norm();
    if (report.gradient_norm < opts.grad_tol) {
      report.converged = true;
      report.iterations = iter;
      return {x, report};
    }

    Vec d = -(h_inv * g);
    double slope = g.dot(d);
    if (slope >= 0.0) {  // reset on a non-descent direction
      h_inv.setIdentity();
      d = -g;
      slope = g.dot(d);
    }

    // Line search: quadratic interpolation through (0, f), (0, f'), (1, f1)
    // gives the exact minimizer for quadratic objectives; fall back to
    // Armijo backtracking from there.
    constexpr double kArmijo = 1e-4;
    const double f1 = eval(x + d);
    double alpha = 1.0;
    const double curvature = f1 - fx - slope;
    if (std::isfinite(f1) && curvature > 0.0) {
      const double interpolated = -slope / (2.0 * curvature);
      if (interpolated > 1e-12 && interpolated < 1e6) alpha = interpolated;
    }

    double f_alpha = (alpha == 1.0) ? f1 : eval(x + alpha * d);
    int halvings = 0;
    while (!(std::isfinite(f_alpha) && f_alpha <= fx + kArmijo * alpha * slope)) {
      alpha *= 0.5;
      if (++halvings > 60) {
        if (!std::isfinite(f_alpha)) {
          throw NumericalError(
              "quasi_newton_minimize: objective stayed non-finite along the "
              "search direction");
        }
        // No decrease possible at machine scale: return the best point found.
        report.iterations = iter;
        report.converged = report.gradient_norm < opts.grad_tol;
        return {x, report};
      }
      f_alpha = eval(x + alpha * d);
    }

    const Vec step = alpha * d;
    const Vec x_new = x + step;
    const Vec g_new = gradient(x_new);
    const Vec y = g_new - g;
    const double sy = step.dot(y);
    if (sy > 1e-12 * step.norm() * y.norm()) {
      if (first_update) {
        h_inv *= sy / y.squaredNorm();
        first_update = false;
      }
      const double rho = 1.0 / sy;
      const Mat outer = step * y.transpose();
      h_inv = (Mat::Identity(n, n) - rho * outer) * h_inv *
                  (Mat::Identity(n, n) - rho * outer.transpose()) +
              rho * step * step.transpose();
    }
    x = x_new;
    fx = f_alpha;
    g = g_new;
    report.loss_trace.push_back(fx);
    report.iterations = iter + 1;
  }
  report.gradient_norm = g.norm();
  report.converged = report.gradient_norm < opts.grad_tol;
  return {x, report};
}

FitReport fit_mgarch(const ReturnPanel& panel, const Mat& sigma0,
                     MgarchLoss loss, const FitOptions& opts) {
  panel.validate();
  const int n = static_cast<int>(panel.dim());
  require(sigma0.rows() == n && sigma0.cols() == n,
          "fit_mgarch: sigma0 dimension mismatch");

  const Vec mu = opts.mu.value_or(Vec(panel.returns.colwise().mean()));
  const auto l = panel.length();
  std::vector<Vec> shocks;
  shocks.reserve(l - 1);
  for (Eigen::Index t = 1; t < l; ++t) {
    shocks.push_back(panel.returns.row(t).transpose() - mu);
  }

  const CoefficientCodec codec{n};
  const double steps = static_cast<double>(shocks.size());
  // Keeps gradients O(1) regardless of the covariance scale.
  const double smoothness_scale = std::max(sigma0.squaredNorm(), 1e-30);

  auto filtered_loss = [&](const Vec& x) -> double {
    Mat a, b, c;
    codec.decode(x, a, b, c);
    const Mat cct = c * c.transpose();
    Mat sigma = sigma0;
    double total = 0.0;
    for (const Vec& z : shocks) {
      if (loss == MgarchLoss::kGaussianQml) {
        Eigen::LLT<Mat> llt(sigma);
        if (llt.info() != Eigen::Success) {
          return std::numeric_limits<double>::infinity();
        }
        const Mat& lmat = llt.matrixLLT();
        double log_det = 0.0;
        for (int i = 0; i < n; ++i) log_det += 2.0 * std::log(lmat(i, i));
        total += log_det + z.dot(llt.solve(z));
      }
      const Vec bz = b * z;
      const Mat next =
          symmetrized(cct + a * sigma * a.transpose() + bz * bz.transpose());
      if (loss == MgarchLoss::kPathSmoothness) {
        total += (next - sigma).squaredNorm() / smoothness_scale;
      }
      sigma = next;
    }
    return total / steps;
  };

  // Start from diagonal loadings and a baseline consistent with sigma0.
  const double residual_weight =
      std::max(0.05, 1.0 - opts.init_diag_a * opts.init_diag_a -
                         opts.init_diag_b * opts.init_diag_b);
  Mat c0;
  try {
    c0 = psd_factor(residual_weight * sigma0 +
                    1e-8 * std::max(1.0, sigma0.norm()) * Mat::Identity(n, n));
  } catch (const NumericalError&) {
    c0 = 1e-3 * Mat::Identity(n, n);
  }
  // Keep the encode/decode round trip exact: strictly positive diagonal.
  for (int i = 0; i < n; ++i) c0(i, i) = std::max(c0(i, i), 2 * kDiagFloor);
  const Vec x0 = codec.encode(opts.init_diag_a * Mat::Identity(n, n),
                              opts.init_diag_b * Mat::Identity(n, n), c0);

  FitReport report;
  report.loss_kind = loss;
  Vec solution = x0;
  try {
    auto [x_star, qn] = quasi_newton_minimize(filtered_loss, x0, opts.optimizer);
    solution = x_star;
    report.converged = qn.converged;
    report.iterations = qn.iterations;
    report.gradient_norm = qn.gradient_norm;
    report.loss_trace = std::move(qn.loss_trace);
  } catch (const NumericalError&) {
    report.converged = false;
  }

  Mat a, b, c;
  codec.decode(solution, a, b, c);
  report.params.mu = mu;
  report.params.a = a;
  report.params.b = b;
  report.params.c = c;
  report.params.sigma0 = sigma0;
  report.params.s0 = Vec::Ones(n);
  return report;
}

Vec estimate_mu(const ReturnPanel& panel, MuMethod method, int top_k) {
  panel.validate();
  const Vec mean = panel.returns.colwise().mean();
  if (method == MuMethod::kSampleMean) return mean;

  const int n = static_cast<int>(panel.dim());
  top_k = std::clamp(top_k, 1, n);
  const Mat cov = sample_initial_covariance(panel);
  if (cov.trace() < 1e-18) return mean;  // no dispersion to project with
  Vec stddev = cov.diagonal().cwiseSqrt();
  for (int i = 0; i < n; ++i) stddev[i] = std::max(stddev[i], 1e-12);
  const Mat corr = stddev.cwiseInverse().asDiagonal() * cov *
                   stddev.cwiseInverse().asDiagonal();

  // Project the standardized mean onto the leading correlation eigenvectors,
  // then map back to return units. Eigenvalues ascend, so the leading
  // eigenvectors are the trailing columns.
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrized(corr));
  const Vec standardized = mean.cwiseQuotient(stddev);
  Vec projected = Vec::Zero(n);
  for (int k = 0; k < top_k; ++k) {
    const Vec v = es.eigenvectors().col(n - 1 - k);
    projected += v.dot(standardized) * v;
  }
  projected = projected.cwiseProduct(stddev);
  const double target = mean.mean();
  const double got = projected.mean();
  if (std::abs(got) > 1e-14 * (1.0 + std::abs(target))) {
    projected *= target / got;
  }
  return projected;
}

double compute_gamma(const Mat& sigma_bar, const Vec& mu, double w0) {
  require(w0 > 0.0, "compute_gamma: w0 must be positive");
  require(sigma_bar.rows() == mu.size() && sigma_bar.cols() == mu.size(),
          "compute_gamma: dimension mismatch");
  Eigen::FullPivLU<Mat> lu(sigma_bar);
  if (!lu.isInvertible()) {
    throw NumericalError("compute_gamma: sigma_bar is singular");
  }
  return lu.solve(mu).sum() / w0;
}

}  // namespace mgopt::estimation
