#include <doctest.h>

#include <cmath>

#include "mgopt/fixedpoint.hpp"
#include "mgopt/mgarch.hpp"

using namespace mgopt;
using namespace mgopt::fixedpoint;
using mgarch::MarketState;
using mgarch::ModelParams;
using mgarch::PriceFunction;
using mgarch::ScenarioTree;

namespace {

ModelParams scalar_params(double mu, double a, double b, double c, double sig0,
                          double s0) {
  ModelParams p;
  p.mu = Vec::Constant(1, mu);
  p.a = Mat::Constant(1, 1, a);
  p.b = Mat::Constant(1, 1, b);
  p.c = Mat::Constant(1, 1, c);
  p.sigma0 = Mat::Constant(1, 1, sig0);
  p.s0 = Vec::Constant(1, s0);
  return p;
}

ModelParams pair_params() {
  ModelParams p;
  p.mu = Vec(2);
  p.mu << 0.01, 0.006;
  p.a = Mat(2, 2);
  p.a << 0.4, 0.05, -0.03, 0.35;
  p.b = Mat(2, 2);
  p.b << 0.3, 0.02, 0.01, 0.33;
  p.c = Mat(2, 2);
  p.c << 0.10, 0.0, 0.02, 0.09;
  p.sigma0 = Mat(2, 2);
  p.sigma0 << 0.025, 0.006, 0.006, 0.018;
  p.s0 = Vec(2);
  p.s0 << 1.0, 1.1;
  return p;
}

MarketState state_from(const Vec& s, const Mat& sigma, double q_cap = 1e6) {
  return MarketState::make(1, s, sigma, q_cap);
}

// Independent tree objective evaluated with plain loops over a holdings field.
double loop_objective(const ScenarioTree& tree, const std::vector<Vec>& x,
                      const LQConfig& cfg) {
  double v = 0.0;
  for (int node = 1; node < tree.num_nodes(); ++node) {
    const auto& nd = tree.nodes[node];
    const int t = nd.state.t;
    double gain = 0.0, cost = 0.0, risk = 0.0;
    const Vec a = x[node] - x[nd.parent];
    for (int i = 0; i < nd.state.dim(); ++i) {
      gain += tree.mu[i] * nd.state.s[i] * x[node][i];
      cost += 0.5 * cfg.epsilon * nd.state.q * a[i] * nd.state.s[i] * a[i];
      for (int j = 0; j < nd.state.dim(); ++j) {
        risk += 0.5 * cfg.gamma * x[node][i] * nd.state.p(i, j) * x[node][j];
      }
    }
    v += nd.prob * std::pow(cfg.delta, t) * (gain - cost - risk);
  }
  return v;
}

// Maximizes the (concave quadratic) tree objective over all branch-contingent
// trades by reconstructing the exact quadratic from objective evaluations and
// solving the stationarity system densely.
std::pair<double, std::vector<Vec>> direct_policy_optimum(
    const ScenarioTree& tree, const LQConfig& cfg) {
  const int n = static_cast<int>(tree.mu.size());
  const int unknowns = (tree.num_nodes() - 1) * n;

  auto field_from = [&](const Vec& u) {
    std::vector<Vec> x(tree.num_nodes());
    x[0] = cfg.x0;
    for (int v = 1; v < tree.num_nodes(); ++v) {
      x[v] = x[tree.nodes[v].parent] + u.segment((v - 1) * n, n);
    }
    return x;
  };
  auto value = [&](const Vec& u) { return loop_objective(tree, field_from(u), cfg); };

  // V(u) = V(0) + g'u - 1/2 u'Q u; central/second differences are exact for
  // quadratics up to roundoff.
  const double f0 = value(Vec::Zero(unknowns));
  Vec g(unknowns);
  Mat q(unknowns, unknowns);
  const double h = 1.0;
  for (int i = 0; i < unknowns; ++i) {
    Vec e = Vec::Zero(unknowns);
    e[i] = h;
    const double fp = value(e);
    const double fm = value(-e);
    g[i] = (fp - fm) / (2.0 * h);
    q(i, i) = -(fp - 2.0 * f0 + fm) / (h * h);
  }
  for (int i = 0; i < unknowns; ++i) {
    for (int j = i + 1; j < unknowns; ++j) {
      Vec e = Vec::Zero(unknowns);
      e[i] = h;
      e[j] = h;
      const double fpp = value(e);
      e[j] = -h;
      const double fpm = value(e);
      e[i] = -h;
      const double fmm = value(e);
      e[j] = h;
      const double fmp = value(e);
      q(i, j) = q(j, i) = -(fpp - fpm - fmp + fmm) / (4.0 * h * h);
    }
  }
  const Vec u_star = q.ldlt().solve(g);
  return {value(u_star), field_from(u_star)};
}

}  // namespace

TEST_CASE("forward_state_step") {
  LQConfig cfg{.delta = 0.0, .epsilon = 0.01, .gamma = 1.0, .horizon = 1,
               .x0 = Vec::Zero(1)};
  MarketState st = state_from(Vec::Ones(1), Mat::Constant(1, 1, 0.04));

  // no trade when the costate vanishes
  Vec x(1);
  x << 0.7;
  CHECK((forward_state_step(x, Vec::Zero(1), st, cfg) - x).norm() == 0.0);

  // scalar arithmetic: x - lambda / (eps q s)
  CHECK(forward_state_step(Vec::Zero(1), Vec::Constant(1, 0.01), st, cfg)[0] ==
        doctest::Approx(-1.0).epsilon(1e-14));

  // dense case against the elementwise formula
  LQConfig cfg2{.delta = 0.5, .epsilon = 0.02, .gamma = 2.0, .horizon = 1,
                .x0 = Vec::Zero(2)};
  Vec s(2);
  s << 1.5, 0.8;
  Mat sigma(2, 2);
  sigma << 0.04, 0.01, 0.01, 0.03;
  MarketState st2 = state_from(s, sigma);
  Vec xp(2), lam(2);
  xp << 0.3, -0.2;
  lam << 0.004, -0.006;
  const Vec got = forward_state_step(xp, lam, st2, cfg2);
  for (int i = 0; i < 2; ++i) {
    CHECK(got[i] == doctest::Approx(xp[i] - lam[i] / (0.02 * st2.q * s[i]))
                        .epsilon(1e-13));
  }
}

TEST_CASE("backward_costate_step scalar and aim-portfolio cases") {
  // scalar: (1 + gamma p / (eps q s))^{-1} (delta E - s mu + gamma p x)
  LQConfig cfg{.delta = 0.9, .epsilon = 0.01, .gamma = 1.0, .horizon = 1,
               .x0 = Vec::Zero(1)};
  MarketState st = state_from(Vec::Ones(1), Mat::Constant(1, 1, 0.04));
  const Vec lam = backward_costate_step(Vec::Zero(1), Vec::Zero(1), st,
                                        Vec::Constant(1, 0.01), cfg);
  CHECK(lam[0] == doctest::Approx(-0.01 / 5.0).epsilon(1e-13));

  // the costate vanishes at the aim portfolio when delta = 0
  LQConfig myopic{.delta = 0.0, .epsilon = 0.01, .gamma = 2.5, .horizon = 1,
                  .x0 = Vec::Zero(2)};
  Vec s(2);
  s << 1.2, 0.9;
  Mat sigma(2, 2);
  sigma << 0.05, 0.01, 0.01, 0.04;
  MarketState st2 = state_from(s, sigma);
  const Vec mu = Vec::Constant(2, 0.008);
  const Vec aim = st2.p.partialPivLu().solve(st2.psi(mu)) / myopic.gamma;
  const Vec lam2 = backward_costate_step(Vec::Zero(2), aim, st2, mu, myopic);
  CHECK(lam2.cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("backward_costate_step dense case matches a direct dense solve") {
  LQConfig cfg{.delta = 0.85, .epsilon = 0.02, .gamma = 1.7, .horizon = 1,
               .x0 = Vec::Zero(2)};
  Vec s(2);
  s << 1.4, 0.7;
  Mat sigma(2, 2);
  sigma << 0.06, -0.01, -0.01, 0.03;
  MarketState st = state_from(s, sigma);
  Vec mu(2), xp(2), elam(2);
  mu << 0.012, -0.004;
  xp << 0.25, 0.4;
  elam << 0.002, 0.001;

  const Vec got = backward_costate_step(elam, xp, st, mu, cfg);

  const Mat m = Mat::Identity(2, 2) + (cfg.gamma / (cfg.epsilon * st.q)) *
                                          st.p * s.cwiseInverse().asDiagonal();
  const Vec rhs =
      cfg.delta * elam - s.cwiseProduct(mu) + cfg.gamma * (st.p * xp);
  const Vec want = m.inverse() * rhs;
  CHECK((got - want).cwiseAbs().maxCoeff() < 1e-13 * (1.0 + want.norm()));
}

TEST_CASE("inner_fixed_point zero problem and myopic one-sweep convergence") {
  ModelParams p = pair_params();
  p.mu.setZero();
  ScenarioTree tree = mgarch::build_tree(p, PriceFunction::multiplicative(), 3, 2, 9);
  LQConfig cfg{.delta = 0.6, .epsilon = 0.01, .gamma = 1.0, .horizon = 3,
               .x0 = Vec::Zero(2)};

  std::vector<Vec> x_zero(tree.num_nodes(), Vec::Zero(2));
  auto [lambda, report] = inner_fixed_point(tree, x_zero, cfg);
  CHECK(report.iterations == 1);
  for (const Vec& l : lambda) CHECK(l.cwiseAbs().maxCoeff() == 0.0);

  // with delta = 0 the field is exact after one application
  ModelParams p2 = pair_params();
  ScenarioTree tree2 =
      mgarch::build_tree(p2, PriceFunction::multiplicative(), 3, 2, 9);
  LQConfig myopic = cfg;
  myopic.delta = 0.0;
  std::vector<Vec> x_field(tree2.num_nodes(), Vec::Constant(2, 0.1));
  auto [lam2, rep2] = inner_fixed_point(tree2, x_field, myopic);
  REQUIRE(rep2.iterations >= 1);
  if (rep2.iterations > 1) {
    CHECK(rep2.sup_changes[1] == 0.0);  // second sweep changed nothing
  }
}

TEST_CASE("inner_fixed_point matches a hand-unrolled two-period system") {
  // n=1, T=2, M=1: two unknowns lambda_1, lambda_2 with
  //   lambda_2 = m2^{-1} (-s2 mu + g p2 x1)
  //   lambda_1 = m1^{-1} (delta lambda_2 - s1 mu + g p1 x0)
  ModelParams p = scalar_params(0.01, 0.5, 0.3, 0.1, 0.02, 1.0);
  ScenarioTree tree = mgarch::build_tree(p, PriceFunction::multiplicative(), 2, 1, 4);
  REQUIRE(tree.num_nodes() == 3);
  LQConfig cfg{.delta = 0.8, .epsilon = 0.05, .gamma = 1.3, .horizon = 2,
               .x0 = Vec::Constant(1, 0.2)};

  std::vector<Vec> x_field(3);
  x_field[0] = Vec::Constant(1, 0.2);
  x_field[1] = Vec::Constant(1, 0.35);
  x_field[2] = Vec::Constant(1, 0.5);

  auto [lambda, report] = inner_fixed_point(tree, x_field, cfg, 1e-14, 100);

  const auto& s1 = tree.nodes[1].state;
  const auto& s2 = tree.nodes[2].state;
  const double m1 = 1.0 + cfg.gamma * s1.p(0, 0) / (cfg.epsilon * s1.q * s1.s[0]);
  const double m2 = 1.0 + cfg.gamma * s2.p(0, 0) / (cfg.epsilon * s2.q * s2.s[0]);
  const double lam2 =
      (-s2.s[0] * 0.01 + cfg.gamma * s2.p(0, 0) * x_field[1][0]) / m2;
  const double lam1 =
      (cfg.delta * lam2 - s1.s[0] * 0.01 + cfg.gamma * s1.p(0, 0) * x_field[0][0]) /
      m1;
  CHECK(lambda[1][0] == doctest::Approx(lam1).epsilon(1e-12));
  CHECK(lambda[2][0] == doctest::Approx(lam2).epsilon(1e-12));
}

TEST_CASE("solve_two_step stationary start stays put") {
  // With delta = 0, M = 1 and x0 at the aim portfolio of the first state the
  // solution never trades and the costate vanishes there.
  ModelParams p = scalar_params(0.01, 0.0, 0.0, 0.1, 0.01, 1.0);
  // A = B = 0 and multiplicative prices with zero shocks: every tree state
  // has sigma = c^2 and s growing deterministically by (1 + mu).
  ScenarioTree tree = mgarch::build_tree(p, PriceFunction::multiplicative(), 3, 1, 2);
  LQConfig cfg{.delta = 0.0, .epsilon = 0.01, .gamma = 1.0, .horizon = 3,
               .x0 = Vec()};
  // aim portfolio of the depth-1 state: (1/gamma) P^{-1} Psi mu = mu/(gamma s sigma)
  const auto& st1 = tree.nodes[1].state;
  cfg.x0 = Vec::Constant(1, 0.01 / (cfg.gamma * st1.s[0] * st1.sigma(0, 0)));

  auto [traj, diag] = solve_two_step(tree, cfg);
  // stationary at t=1; later states have different aim portfolios, so only
  // the first decision is exactly no-trade
  CHECK(std::abs(traj.x[1][0] - cfg.x0[0]) < 1e-12);
  CHECK(std::abs(traj.lambda[1][0]) < 1e-12);
  CHECK(diag.hit_tolerance);
}

TEST_CASE("solve_two_step matches the dense saddle-point oracle (T=2, M=1)") {
  ModelParams p = scalar_params(0.012, 0.4, 0.25, 0.12, 0.02, 1.0);
  ScenarioTree tree = mgarch::build_tree(p, PriceFunction::multiplicative(), 2, 1, 6);
  LQConfig cfg{.delta = 0.9, .epsilon = 0.02, .gamma = 1.1, .horizon = 2,
               .x0 = Vec::Constant(1, 0.05)};

  SolveOptions opts;
  opts.outer_tol = 1e-13;
  opts.inner_tol = 1e-15;
  auto [traj, diag] = solve_two_step(tree, cfg, opts);

  // Unknowns (x1, x2, l1, l2): the stationarity system is linear.
  //   x1 = x0 - l1/(e q1 s1)            x2 = x1 - l2/(e q2 s2)
  //   l1 = d l2 - s1 mu + g p1 x1       l2 = -s2 mu + g p2 x2
  const auto& s1 = tree.nodes[1].state;
  const auto& s2 = tree.nodes[2].state;
  Mat m = Mat::Zero(4, 4);
  Vec rhs = Vec::Zero(4);
  m(0, 0) = 1.0;
  m(0, 2) = 1.0 / (cfg.epsilon * s1.q * s1.s[0]);
  rhs[0] = cfg.x0[0];
  m(1, 1) = 1.0;
  m(1, 0) = -1.0;
  m(1, 3) = 1.0 / (cfg.epsilon * s2.q * s2.s[0]);
  m(2, 2) = 1.0;
  m(2, 3) = -cfg.delta;
  m(2, 0) = -cfg.gamma * s1.p(0, 0);
  rhs[2] = -s1.s[0] * p.mu[0];
  m(3, 3) = 1.0;
  m(3, 1) = -cfg.gamma * s2.p(0, 0);
  rhs[3] = -s2.s[0] * p.mu[0];
  const Vec sol = m.partialPivLu().solve(rhs);

  CHECK(traj.x[1][0] == doctest::Approx(sol[0]).epsilon(1e-9));
  CHECK(traj.x[2][0] == doctest::Approx(sol[1]).epsilon(1e-9));
  CHECK(traj.lambda[1][0] == doctest::Approx(sol[2]).epsilon(1e-9));
  CHECK(traj.lambda[2][0] == doctest::Approx(sol[3]).epsilon(1e-9));
}

TEST_CASE("solve_two_step attains the direct policy-space optimum (T=3, M=2)") {
  ModelParams p = scalar_params(0.01, 0.45, 0.3, 0.1, 0.02, 1.0);
  ScenarioTree tree = mgarch::build_tree(p, PriceFunction::multiplicative(), 3, 2, 13);
  LQConfig cfg{.delta = 0.85, .epsilon = 0.02, .gamma = 1.0, .horizon = 3,
               .x0 = Vec::Zero(1)};

  SolveOptions opts;
  opts.outer_tol = 1e-12;
  opts.inner_tol = 1e-14;
  opts.max_outer = 400;
  auto [traj, diag] = solve_two_step(tree, cfg, opts);
  const double v_solver = loop_objective(tree, traj.x, cfg);

  auto [v_best, x_best] = direct_policy_optimum(tree, cfg);
  CHECK(v_solver == doctest::Approx(v_best).epsilon(1e-8));
  CHECK(v_solver <= v_best + 1e-12);

  // the two solutions coincide pointwise
  for (int v = 1; v < tree.num_nodes(); ++v) {
    CHECK((traj.x[v] - x_best[v]).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("solve_two_step residuals and uniqueness probe") {
  ModelParams p = pair_params();
  ScenarioTree tree = mgarch::build_tree(p, PriceFunction::multiplicative(), 4, 2, 3);
  LQConfig cfg{.delta = 0.7, .epsilon = 0.02, .gamma = 0.8, .horizon = 4,
               .x0 = Vec::Zero(2)};

  SolveOptions opts;
  opts.outer_tol = 1e-10;
  auto [traj, diag] = solve_two_step(tree, cfg, opts);

  // forward equation holds exactly by construction
  for (int v = 1; v < tree.num_nodes(); ++v) {
    const Vec want = forward_state_step(traj.x[tree.nodes[v].parent],
                                        traj.lambda[v], tree.nodes[v].state, cfg);
    CHECK((traj.x[v] - want).norm() == 0.0);
  }
  // costate equation holds to solver tolerance
  CHECK(costate_residual(tree, traj, cfg) < 1e-7);

  // a different initialization converges to the same fixed point
  SolveOptions opts2 = opts;
  GaussianRng rng(99);
  std::vector<Vec> init(tree.num_nodes(), Vec::Zero(2));
  for (auto& l : init) l = 0.01 * rng.normal_vector(2);
  opts2.initial_lambda = init;
  auto [traj2, diag2] = solve_two_step(tree, cfg, opts2);
  double worst = 0.0;
  for (int v = 1; v < tree.num_nodes(); ++v) {
    worst = std::max(worst, (traj.lambda[v] - traj2.lambda[v]).norm());
  }
  CHECK(worst < 10.0 * opts.outer_tol);
}

TEST_CASE("measure_damping") {
  // scalar: delta / (1 + gamma p / (eps q s))
  LQConfig cfg{.delta = 0.9, .epsilon = 0.1, .gamma = 1.0, .horizon = 1,
               .x0 = Vec::Zero(1)};
  MarketState st = state_from(Vec::Ones(1), Mat::Constant(1, 1, 1.0));
  const MarketState states[] = {st};
  CHECK(measure_damping(states, cfg) == doctest::Approx(0.9 / 11.0).epsilon(1e-12));

  LQConfig myopic = cfg;
  myopic.delta = 0.0;
  CHECK(measure_damping(states, myopic) == 0.0);

  // dense case against an SVD of the explicitly inverted matrix
  LQConfig cfg2{.delta = 0.8, .epsilon = 0.05, .gamma = 1.4, .horizon = 1,
                .x0 = Vec::Zero(2)};
  Vec s(2);
  s << 1.3, 0.6;
  Mat sigma(2, 2);
  sigma << 0.05, 0.012, 0.012, 0.04;
  MarketState st2 = state_from(s, sigma);
  const MarketState states2[] = {st2};
  const double got = measure_damping(states2, cfg2);

  const Mat m = Mat::Identity(2, 2) + (cfg2.gamma / (cfg2.epsilon * st2.q)) *
                                          st2.p * s.cwiseInverse().asDiagonal();
  Eigen::JacobiSVD<Mat> svd(m.inverse());
  CHECK(got ==
        doctest::Approx(cfg2.delta * svd.singularValues()[0]).epsilon(1e-10));

  // permutation equivariance: relabeling the assets leaves the value alone
  Eigen::PermutationMatrix<2> perm;
  perm.indices() << 1, 0;
  const Vec s_p = perm * s;
  const Mat sigma_p = perm * sigma * perm.transpose();
  MarketState st3 = state_from(s_p, sigma_p);
  const MarketState states3[] = {st3};
  CHECK(measure_damping(states3, cfg2) == doctest::Approx(got).epsilon(1e-12));
}

TEST_CASE("bound constants and the inverse-norm bound") {
  BoundConstants consts =
      BoundConstants::make(2.0, 2.0, 0.5, 0.01, 400.0, 0.5, 0.01);
  CHECK(consts.kappa == doctest::Approx(2.0 * 2.0 / (400.0 * 0.25 * 0.01))
                            .epsilon(1e-12));
  CHECK(consts.omega == doctest::Approx(8.0).epsilon(1e-12));

  // kappa = 2, eps = 0.1 -> 0.2 / 0.96
  BoundConstants k2 = consts;
  k2.kappa = 2.0;
  CHECK(inverse_norm_bound(k2, 0.1) ==
        doctest::Approx(0.2 / 0.96).epsilon(1e-12));

  // leading order: bound / eps -> kappa as eps -> 0
  CHECK(inverse_norm_bound(k2, 1e-9) / 1e-9 ==
        doctest::Approx(2.0).epsilon(1e-9));

  // violated hypothesis names the inequality
  CHECK_THROWS_AS(inverse_norm_bound(k2, 0.6), std::invalid_argument);
}

TEST_CASE("measured inverse norms respect the bound on clamped paths") {
  // clamped prices in [0.5, 2], q capped at chi; the measured quantity is
  // delta-free so any delta works
  ModelParams p = pair_params();
  const PriceFunction h = PriceFunction::clamped(0.5, 2.0);
  const double chi = 20.0;
  const double c = p.covariance_floor();
  const double gamma = 3200.0;

  for (double eps : {1e-3, 1e-2, 1e-1}) {
    LQConfig cfg{.delta = 0.5, .epsilon = eps, .gamma = gamma, .horizon = 1,
                 .x0 = Vec::Zero(2)};
    BoundConstants consts = BoundConstants::make(chi, 2.0, 0.5, c, gamma, 0.5, eps);
    const double bound = inverse_norm_bound(consts, eps);
    mgarch::SimulateOptions sopts;
    sopts.q_cap = chi;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      mgarch::MarketPath path = mgarch::simulate_path(p, h, 30, 1000 + seed, sopts);
      const double measured = measure_damping(path, cfg) / cfg.delta;
      CHECK(measured <= bound * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("positive definite sum inverse-norm inequality") {
  // || (A + B)^{-1} || <= min(||A^{-1}||, ||B^{-1}||) for SPD A, B
  GaussianRng rng(7);
  const int n = 4;
  for (int trial = 0; trial < 1000; ++trial) {
    Mat ma(n, n), mb(n, n);
    for (int i = 0; i < n * n; ++i) {
      ma.data()[i] = rng.normal();
      mb.data()[i] = rng.normal();
    }
    const Mat a = ma * ma.transpose() + 0.01 * Mat::Identity(n, n);
    const Mat b = mb * mb.transpose() + 0.01 * Mat::Identity(n, n);
    const double lhs = spectral_norm((a + b).inverse());
    const double rhs = std::min(spectral_norm(a.inverse()),
                                spectral_norm(b.inverse()));
    CHECK(lhs <= rhs * (1.0 + 1e-10));
  }
}

TEST_CASE("convergence certificate on a single-period tree") {
  ModelParams p = scalar_params(0.01, 0.3, 0.2, 0.1, 0.02, 1.0);
  ScenarioTree tree = mgarch::build_tree(p, PriceFunction::clamped(0.5, 2.0), 1, 2,
                                         8, {.q_cap = 10.0});
  LQConfig cfg{.delta = 0.5, .epsilon = 0.01, .gamma = 0.05, .horizon = 1,
               .x0 = Vec::Zero(1)};
  BoundConstants consts = BoundConstants::make(10.0, 2.0, 0.5, 0.01, 0.05,
                                               0.5, 0.01);
  CertificateReport report = convergence_certificate(tree, cfg, consts, 6);
  CHECK(report.passed);
  // one decision period: every iterate-to-iterate change is exactly zero
  for (double e : report.errors) CHECK(e == 0.0);
}

TEST_CASE("convergence certificate decays past the transient (n=2, T=5)") {
  ModelParams p = pair_params();
  ScenarioTree tree = mgarch::build_tree(p, PriceFunction::clamped(0.5, 2.0), 5, 2,
                                         8, {.q_cap = 30.0});
  LQConfig cfg{.delta = 0.5, .epsilon = 0.01, .gamma = 2e-4, .horizon = 5,
               .x0 = Vec::Zero(2)};
  BoundConstants consts = BoundConstants::make(30.0, 2.0, 0.5,
                                               p.covariance_floor(), cfg.gamma,
                                               cfg.delta, cfg.epsilon);
  CertificateReport report = convergence_certificate(tree, cfg, consts, 9);
  CHECK(report.passed);
  REQUIRE(report.errors.size() >= 7);
  for (std::size_t k = 5; k <= report.errors.size(); ++k) {
    CHECK(report.errors[k - 1] <= 1e-10 * report.errors[0]);
  }
}

TEST_CASE("tree objective agrees with the loop evaluator") {
  ModelParams p = pair_params();
  ScenarioTree tree = mgarch::build_tree(p, PriceFunction::multiplicative(), 3, 2, 5);
  LQConfig cfg{.delta = 0.9, .epsilon = 0.01, .gamma = 1.0, .horizon = 3,
               .x0 = Vec::Zero(2)};
  GaussianRng rng(12);
  std::vector<Vec> x(tree.num_nodes());
  x[0] = cfg.x0;
  for (int v = 1; v < tree.num_nodes(); ++v) x[v] = 0.1 * rng.normal_vector(2);
  CHECK(tree_objective(tree, x, cfg) ==
        doctest::Approx(loop_objective(tree, x, cfg)).epsilon(1e-12));
}
