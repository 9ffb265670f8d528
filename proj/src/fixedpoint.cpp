#include "mgopt/fixedpoint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mgopt::fixedpoint {

namespace {

// I + (gamma/(eps q)) P Psi^{-1}
Mat costate_system_matrix(const mgarch::MarketState& state, const LQConfig& cfg) {
  const auto n = state.dim();
  const double scale = cfg.gamma / (cfg.epsilon * state.q);
  return Mat::Identity(n, n) +
         scale * state.p * state.s.cwiseInverse().asDiagonal();
}

std::vector<Eigen::PartialPivLU<Mat>> factor_all(const mgarch::ScenarioTree& tree,
                                                 const LQConfig& cfg) {
  std::vector<Eigen::PartialPivLU<Mat>> solvers(tree.num_nodes());
  for (int v = 1; v < tree.num_nodes(); ++v) {
    solvers[v].compute(costate_system_matrix(tree.nodes[v].state, cfg));
    if (!(solvers[v].rcond() > 1e-12)) {
      throw NumericalError(
          "fixedpoint: costate system is ill-conditioned (rcond " +
          std::to_string(solvers[v].rcond()) + ") at node " + std::to_string(v));
    }
  }
  return solvers;
}

std::vector<Vec> forward_pass(const mgarch::ScenarioTree& tree,
                              const std::vector<Vec>& lambda,
                              const LQConfig& cfg) {
  std::vector<Vec> x(tree.num_nodes());
  x[0] = cfg.x0;
  for (int v = 1; v < tree.num_nodes(); ++v) {
    x[v] = forward_state_step(x[tree.nodes[v].parent], lambda[v],
                              tree.nodes[v].state, cfg);
  }
  return x;
}

// Expected costate change per depth (probability-weighted), depths 1..T.
Vec depth_error_profile(const mgarch::ScenarioTree& tree,
                        const std::vector<Vec>& a, const std::vector<Vec>& b) {
  Vec profile = Vec::Zero(tree.depth);
  for (int d = 1; d <= tree.depth; ++d) {
    double acc = 0.0;
    for (int v = tree.depth_begin[d]; v < tree.depth_begin[d + 1]; ++v) {
      acc += tree.nodes[v].prob * (a[v] - b[v]).norm();
    }
    profile[d - 1] = acc;
  }
  return profile;
}

}  // namespace

void LQConfig::validate(Eigen::Index n) const {
  require(delta >= 0.0 && delta < 1.0, "LQConfig: delta must be in [0, 1)");
  require(epsilon > 0.0, "LQConfig: epsilon must be positive");
  require(gamma > 0.0, "LQConfig: gamma must be positive");
  require(horizon >= 1, "LQConfig: horizon must be >= 1");
  require(x0.size() == n, "LQConfig: x0 dimension mismatch");
}

Vec forward_state_step(const Vec& x_prev, const Vec& lambda_t,
                       const mgarch::MarketState& state, const LQConfig& cfg) {
  return x_prev - state.psi_inv(lambda_t) / (cfg.epsilon * state.q);
}

Vec backward_costate_step(const Vec& expected_lambda_next, const Vec& x_prev,
                          const mgarch::MarketState& state, const Vec& mu,
                          const LQConfig& cfg) {
  Eigen::PartialPivLU<Mat> lu(costate_system_matrix(state, cfg));
  if (!(lu.rcond() > 1e-12)) {
    throw NumericalError("backward_costate_step: system matrix rcond " +
                         std::to_string(lu.rcond()));
  }
  const Vec rhs = cfg.delta * expected_lambda_next - state.psi(mu) +
                  cfg.gamma * (state.p * x_prev);
  return lu.solve(rhs);
}

std::pair<std::vector<Vec>, InnerReport> inner_fixed_point(
    const mgarch::ScenarioTree& tree, const std::vector<Vec>& x_field,
    const LQConfig& cfg, double tol, int max_iter,
    const std::vector<Vec>* initial_lambda) {
  const auto n = tree.mu.size();
  cfg.validate(n);
  const auto solvers = factor_all(tree, cfg);

  std::vector<Vec> lambda(tree.num_nodes(), Vec::Zero(n));
  if (initial_lambda) lambda = *initial_lambda;

  // Constant part of each node's right-hand side.
  std::vector<Vec> base(tree.num_nodes());
  for (int v = 1; v < tree.num_nodes(); ++v) {
    const auto& st = tree.nodes[v].state;
    base[v] =
        -st.psi(tree.mu) + cfg.gamma * (st.p * x_field[tree.nodes[v].parent]);
  }

  InnerReport report;
  std::vector<Vec> next(tree.num_nodes(), Vec::Zero(n));
  for (int it = 0; it < max_iter; ++it) {
    double change = 0.0;
    for (int v = 1; v < tree.num_nodes(); ++v) {
      Vec rhs = base[v];
      if (!tree.is_leaf(v)) {
        rhs += cfg.delta * tree.child_mean(v, lambda);
      }
      next[v] = solvers[v].solve(rhs);
      change = std::max(change, (next[v] - lambda[v]).lpNorm<Eigen::Infinity>());
    }
    std::swap(lambda, next);
    ++report.iterations;
    report.sup_changes.push_back(change);
    if (change < tol) {
      report.converged = true;
      return {lambda, report};
    }
  }
  const double damping = measure_damping(tree, cfg);
  throw ModelInstabilityError(
      "inner_fixed_point: no convergence in " + std::to_string(max_iter) +
      " sweeps; measured damping " + std::to_string(damping) +
      (damping < 1.0 ? " (< 1, raise max_iter)" : " (>= 1, contraction fails)"));
}

std::pair<CostateTrajectory, SolveDiagnostics> solve_two_step(
    const mgarch::ScenarioTree& tree, const LQConfig& cfg,
    const SolveOptions& opts) {
  const auto n = tree.mu.size();
  cfg.validate(n);
  require(tree.depth == cfg.horizon,
          "solve_two_step: tree depth must equal the decision horizon");

  SolveDiagnostics diag;
  diag.damping = measure_damping(tree, cfg);
  if (diag.damping >= 1.0 && !opts.skip_damping_check) {
    throw ModelInstabilityError(
        "solve_two_step: measured damping " + std::to_string(diag.damping) +
        " >= 1; the inner iteration is not a certified contraction "
        "(set skip_damping_check to proceed anyway)");
  }

  std::vector<Vec> lambda(tree.num_nodes(), Vec::Zero(n));
  if (opts.initial_lambda) {
    require(static_cast<int>(opts.initial_lambda->size()) == tree.num_nodes(),
            "solve_two_step: initial_lambda size mismatch");
    lambda = *opts.initial_lambda;
  }

  CostateTrajectory traj;
  for (int k = 1; k <= opts.max_outer; ++k) {
    const std::vector<Vec> x_field = forward_pass(tree, lambda, cfg);
    auto [lambda_new, inner] = inner_fixed_point(
        tree, x_field, cfg, opts.inner_tol, opts.max_inner, &lambda);
    diag.inner_iterations_total += inner.iterations;

    const Vec profile = depth_error_profile(tree, lambda_new, lambda);
    diag.error_profiles.push_back(profile);
    diag.outer_errors.push_back(profile.maxCoeff());
    lambda = std::move(lambda_new);
    traj.iterations = k;

    if (diag.outer_errors.back() < opts.outer_tol) {
      diag.hit_tolerance = true;
      diag.stop_reason = "tolerance";
      break;
    }
  }
  if (!diag.hit_tolerance) diag.stop_reason = "max-iterations";

  traj.lambda = std::move(lambda);
  traj.x = forward_pass(tree, traj.lambda, cfg);
  return {std::move(traj), std::move(diag)};
}

double measure_damping(std::span<const mgarch::MarketState> states,
                       const LQConfig& cfg) {
  double sup = 0.0;
  for (const auto& st : states) {
    // ||M^{-1}|| = 1 / sigma_min(M)
    Eigen::JacobiSVD<Mat> svd(costate_system_matrix(st, cfg));
    const double smallest = svd.singularValues().minCoeff();
    if (smallest <= 0.0) return std::numeric_limits<double>::infinity();
    sup = std::max(sup, cfg.delta / smallest);
  }
  return sup;
}

double measure_damping(const mgarch::ScenarioTree& tree, const LQConfig& cfg) {
  double sup = 0.0;
  for (int v = 1; v < tree.num_nodes(); ++v) {
    const mgarch::MarketState& st = tree.nodes[v].state;
    sup = std::max(
        sup,
        measure_damping(std::span<const mgarch::MarketState>(&st, 1), cfg));
  }
  return sup;
}

double measure_damping(const mgarch::MarketPath& path, const LQConfig& cfg) {
  return measure_damping(
      std::span<const mgarch::MarketState>(path.states.data() + 1,
                                           path.states.size() - 1),
      cfg);
}

BoundConstants BoundConstants::make(double chi, double h_inf, double s_floor,
                                    double c, double gamma, double delta,
                                    double epsilon) {
  require(chi >= 1.0, "BoundConstants: chi must be >= 1");
  require(h_inf > 0.0 && s_floor > 0.0 && s_floor <= h_inf,
          "BoundConstants: need 0 < s_floor <= h_inf");
  require(c > 0.0, "BoundConstants: covariance floor must be positive");
  require(gamma > 0.0, "BoundConstants: gamma must be positive");
  BoundConstants k;
  k.chi = chi;
  k.h_inf = h_inf;
  k.s_floor = s_floor;
  k.c = c;
  k.gamma = gamma;
  k.delta = delta;
  k.kappa = chi * h_inf / (gamma * s_floor * s_floor * c);
  k.omega = chi * h_inf / s_floor;
  // The damping bound only applies under the small-cost hypothesis.
  k.delta_eps = (epsilon * k.kappa < 1.0)
                    ? delta * inverse_norm_bound(k, epsilon)
                    : std::numeric_limits<double>::quiet_NaN();
  return k;
}

double inverse_norm_bound(const BoundConstants& consts, double epsilon) {
  const double ek = epsilon * consts.kappa;
  if (!(ek < 1.0)) {
    throw std::invalid_argument(
        "inverse_norm_bound: hypothesis epsilon * chi * h_inf < gamma * "
        "s_floor^2 * c fails (epsilon * kappa = " +
        std::to_string(ek) + " >= 1)");
  }
  return ek / (1.0 - ek * ek);
}

CertificateReport convergence_certificate(const mgarch::ScenarioTree& tree,
                                          const LQConfig& cfg,
                                          const BoundConstants& consts,
                                          int k_max, double decay_tol) {
  require(k_max >= cfg.horizon + 1,
          "convergence_certificate: k_max must exceed the horizon");

  // Pilot round to learn the costate scale, so the inner tolerance can be
  // set tight enough that roundoff rather than the inner loop determines
  // the error floor of the recorded sequence.
  SolveOptions pilot;
  pilot.outer_tol = 0.0;
  pilot.max_outer = 1;
  double lambda_scale = 0.0;
  {
    auto [first, unused] = solve_two_step(tree, cfg, pilot);
    for (int v = 1; v < tree.num_nodes(); ++v) {
      lambda_scale =
          std::max(lambda_scale, first.lambda[v].lpNorm<Eigen::Infinity>());
    }
  }

  SolveOptions opts;
  opts.outer_tol = 0.0;  // run all rounds to record the full trace
  opts.max_outer = k_max + 1;
  opts.inner_tol = std::max(1e-15 * lambda_scale, 1e-300);
  opts.max_inner = 100000;
  auto [traj, diag] = solve_two_step(tree, cfg, opts);

  // The very first recorded change measures distance from the arbitrary
  // initialization, not between iterates; the certificate sequence E(k)
  // starts at the first iterate-to-iterate change.
  CertificateReport report;
  report.damping = diag.damping;
  report.decay_tolerance = decay_tol;
  report.errors.assign(diag.outer_errors.begin() + 1, diag.outer_errors.end());
  report.errors_l2.reserve(report.errors.size());
  for (std::size_t i = 1; i < diag.error_profiles.size(); ++i) {
    report.errors_l2.push_back(diag.error_profiles[i].norm());
  }

  const double t = static_cast<double>(cfg.horizon);
  const double scale_sup = report.errors.front();
  const double scale_l2 = report.errors_l2.front();
  const double growth = consts.omega / (1.0 - report.damping);

  report.passed = true;
  report.explicit_bounds.assign(report.errors.size(), 0.0);
  double envelope = std::sqrt(t);  // coefficient at k = 1
  for (int k = 2; k <= static_cast<int>(report.errors.size()); ++k) {
    envelope *= growth * t / static_cast<double>(k - 1);
    bool ok = true;
    if (k >= cfg.horizon) {
      // past the transient the recorded error must have collapsed
      report.explicit_bounds[k - 1] = decay_tol * scale_sup;
      ok = report.errors[k - 1] <= decay_tol * scale_sup;
    } else {
      // transient envelope (growth * T)^{k-1} sqrt(T) / (k-1)!, checked on
      // the depthwise 2-norm, which is the quantity it bounds
      report.explicit_bounds[k - 1] = envelope * scale_l2;
      ok = report.errors_l2[k - 1] <= envelope * scale_l2 * (1.0 + 1e-9);
    }
    if (!ok && report.passed) {
      report.passed = false;
      report.first_failure_k = k;
    }
  }
  return report;
}

double tree_objective(const mgarch::ScenarioTree& tree,
                      const std::vector<Vec>& x_field, const LQConfig& cfg) {
  require(static_cast<int>(x_field.size()) == tree.num_nodes(),
          "tree_objective: field size mismatch");
  double value = 0.0;
  for (int d = 1; d <= tree.depth; ++d) {
    const double discount = std::pow(cfg.delta, d);
    for (int v = tree.depth_begin[d]; v < tree.depth_begin[d + 1]; ++v) {
      const auto& node = tree.nodes[v];
      const auto& st = node.state;
      const Vec& x = x_field[v];
      const Vec a = x - x_field[node.parent];
      const double gain = tree.mu.dot(st.psi(x));
      const double cost = 0.5 * cfg.epsilon * st.q * a.dot(st.psi(a));
      const double risk = 0.5 * cfg.gamma * x.dot(st.p * x);
      value += node.prob * discount * (gain - cost - risk);
    }
  }
  return value;
}

double costate_residual(const mgarch::ScenarioTree& tree,
                        const CostateTrajectory& traj, const LQConfig& cfg) {
  double worst = 0.0;
  for (int v = 1; v < tree.num_nodes(); ++v) {
    const auto& st = tree.nodes[v].state;
    Vec rhs = -st.psi(tree.mu) + cfg.gamma * (st.p * traj.x[v]);
    if (!tree.is_leaf(v)) {
      rhs += cfg.delta * tree.child_mean(v, traj.lambda);
    }
    worst = std::max(worst, (traj.lambda[v] - rhs).lpNorm<Eigen::Infinity>());
  }
  return worst;
}

}  // namespace mgopt::fixedpoint
