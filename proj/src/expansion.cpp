#include "mgopt/expansion.hpp"

#include <cmath>

namespace mgopt::expansion {

namespace {

// The expansion operator's forward matrix:
//   stabilized: eps I + (gamma/q) P Psi^{-1}
//   naive:              (gamma/q) P Psi^{-1}
Mat operator_matrix(const mgarch::MarketState& st, const LQConfig& cfg,
                    Variant variant) {
  const auto n = st.dim();
  Mat m = (cfg.gamma / st.q) * st.p * st.s.cwiseInverse().asDiagonal();
  if (variant == Variant::kStabilized) m += cfg.epsilon * Mat::Identity(n, n);
  return m;
}

Eigen::PartialPivLU<Mat> operator_factor(const mgarch::MarketState& st,
                                         const LQConfig& cfg, Variant variant) {
  Eigen::PartialPivLU<Mat> lu(operator_matrix(st, cfg, variant));
  if (!(lu.rcond() > 1e-14)) {
    throw NumericalError("expansion: operator matrix rcond " +
                         std::to_string(lu.rcond()));
  }
  return lu;
}

Vec drift_gap(const mgarch::MarketState& st, const Vec& mu, const LQConfig& cfg,
              const Vec& x_prev) {
  return st.psi(mu) - cfg.gamma * (st.p * x_prev);
}

}  // namespace

Vec base_costate(const Vec& x_prev, const mgarch::MarketState& state,
                 const Vec& mu, const LQConfig& cfg, Variant variant) {
  return operator_factor(state, cfg, variant)
      .solve(Vec(-drift_gap(state, mu, cfg, x_prev)));
}

Vec correction_costate_oracle(const mgarch::ScenarioTree& tree, int node,
                              const Vec& x_prev, const LQConfig& cfg,
                              Variant variant) {
  const auto& nd = tree.nodes[node];
  const auto n = tree.mu.size();
  if (nd.state.t >= tree.depth) return Vec::Zero(n);
  require(!tree.is_leaf(node),
          "correction_costate_oracle: interior node has no children");

  const auto& st = nd.state;
  auto lu = operator_factor(st, cfg, variant);
  const Vec lambda0 = lu.solve(Vec(-drift_gap(st, tree.mu, cfg, x_prev)));

  // Child base terms are affine in this node's post-trade holdings:
  //   E[base'] = u + w x,   x = x_tilde - (eps/q) Psi^{-1} lambda1,
  // which closes a linear system for lambda1.
  Vec u = Vec::Zero(n);
  Mat w = Mat::Zero(n, n);
  const int begin = tree.children_begin(node);
  for (int c = begin; c < begin + tree.branching; ++c) {
    const auto& cst = tree.nodes[c].state;
    auto clu = operator_factor(cst, cfg, variant);
    u -= clu.solve(Vec(cst.psi(tree.mu)));
    w += clu.solve(Mat(cfg.gamma * cst.p));
  }
  u /= tree.branching;
  w /= tree.branching;

  const Vec x_tilde = x_prev - st.psi_inv(lambda0) / st.q;
  Vec rhs = cfg.delta * lu.solve(Vec(u + w * x_tilde));
  if (variant == Variant::kNaive) {
    // extra cost-compensation term of the naive split
    rhs += lu.solve(Vec(lu.solve(Vec(drift_gap(st, tree.mu, cfg, x_prev)))));
  }
  const Mat coupling =
      Mat::Identity(n, n) +
      cfg.delta * cfg.epsilon / st.q *
          lu.solve(Mat(w * st.s.cwiseInverse().asDiagonal()));
  return coupling.partialPivLu().solve(rhs);
}

Vec correction_from_estimate(const Vec& estimate,
                             const mgarch::MarketState& state,
                             const LQConfig& cfg, Variant variant) {
  return cfg.delta * operator_factor(state, cfg, variant).solve(estimate);
}

Vec expansion_state_step(const Vec& x_prev, const Vec& lambda0,
                         const Vec& lambda1, const mgarch::MarketState& state,
                         const LQConfig& cfg) {
  return x_prev - state.psi_inv(lambda0 + cfg.epsilon * lambda1) / state.q;
}

Vec myopic_step(const Vec& x_prev, const mgarch::MarketState& state,
                const Vec& mu, const LQConfig& cfg,
                DriftConvention convention) {
  const auto n = state.dim();
  const Mat m = Mat::Identity(n, n) +
                (cfg.gamma / (cfg.epsilon * state.q)) * state.p *
                    state.s.cwiseInverse().asDiagonal();
  Eigen::PartialPivLU<Mat> lu(m);
  if (!(lu.rcond() > 1e-14)) {
    throw NumericalError("myopic_step: system matrix rcond " +
                         std::to_string(lu.rcond()));
  }
  const Vec drift =
      convention == DriftConvention::kDollar ? Vec(state.psi(mu)) : mu;
  const Vec gap = drift - cfg.gamma * (state.p * x_prev);
  return x_prev + state.psi_inv(lu.solve(gap)) / (cfg.epsilon * state.q);
}

ExpansionField expand_on_tree(const mgarch::ScenarioTree& tree,
                              const LQConfig& cfg, Variant variant) {
  const auto n = tree.mu.size();
  cfg.validate(n);
  ExpansionField field;
  field.lambda0.assign(tree.num_nodes(), Vec::Zero(n));
  field.lambda1.assign(tree.num_nodes(), Vec::Zero(n));
  field.x.assign(tree.num_nodes(), Vec::Zero(n));
  field.x[0] = cfg.x0;
  for (int v = 1; v < tree.num_nodes(); ++v) {
    const Vec& x_prev = field.x[tree.nodes[v].parent];
    field.lambda0[v] =
        base_costate(x_prev, tree.nodes[v].state, tree.mu, cfg, variant);
    field.lambda1[v] = correction_costate_oracle(tree, v, x_prev, cfg, variant);
    field.x[v] = expansion_state_step(x_prev, field.lambda0[v],
                                      field.lambda1[v], tree.nodes[v].state, cfg);
  }
  return field;
}

ErrorScan expansion_error_scan(const mgarch::ScenarioTree& tree,
                               const LQConfig& cfg,
                               const std::vector<double>& eps_grid,
                               Variant variant) {
  require(!eps_grid.empty(), "expansion_error_scan: empty grid");
  ErrorScan scan;
  for (double eps : eps_grid) {
    LQConfig cfg_eps = cfg;
    cfg_eps.epsilon = eps;

    ErrorScanRow row;
    row.epsilon = eps;
    row.damping = fixedpoint::measure_damping(tree, cfg_eps);
    if (row.damping >= 1.0) {
      throw ModelInstabilityError("expansion_error_scan: measured damping " +
                                  std::to_string(row.damping) +
                                  " >= 1 at epsilon " + std::to_string(eps));
    }

    // Solve the fixed point tightly enough that the solver floor sits far
    // below the truncation error being measured.
    fixedpoint::SolveOptions pilot;
    pilot.outer_tol = 0.0;
    pilot.max_outer = 1;
    double lambda_scale = 1e-300;
    {
      auto [first, unused] = fixedpoint::solve_two_step(tree, cfg_eps, pilot);
      for (int v = 1; v < tree.num_nodes(); ++v) {
        lambda_scale =
            std::max(lambda_scale, first.lambda[v].lpNorm<Eigen::Infinity>());
      }
    }
    fixedpoint::SolveOptions opts;
    opts.inner_tol = 1e-15 * lambda_scale;
    opts.outer_tol = 1e-13 * lambda_scale;
    opts.max_outer = 2000;
    opts.max_inner = 100000;
    auto [traj, diag] = fixedpoint::solve_two_step(tree, cfg_eps, opts);

    const ExpansionField field = expand_on_tree(tree, cfg_eps, variant);

    Vec profile = Vec::Zero(tree.depth);
    for (int d = 1; d <= tree.depth; ++d) {
      double acc = 0.0;
      for (int v = tree.depth_begin[d]; v < tree.depth_begin[d + 1]; ++v) {
        const Vec solved_tilde = traj.lambda[v] / eps;
        acc +=
            tree.nodes[v].prob *
            (field.lambda0[v] + eps * field.lambda1[v] - solved_tilde).norm();
      }
      profile[d - 1] = acc;
    }
    row.error = profile.maxCoeff();
    scan.rows.push_back(row);
  }

  // log-log regression slope over rows with a usable error value
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  for (const auto& row : scan.rows) {
    if (!(row.error > 0.0)) continue;
    const double lx = std::log(row.epsilon);
    const double ly = std::log(row.error);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++count;
  }
  if (count >= 2) {
    scan.slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
  }
  return scan;
}

}  // namespace mgopt::expansion
