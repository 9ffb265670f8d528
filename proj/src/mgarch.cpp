#include "mgopt/mgarch.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mgopt::mgarch {

double ModelParams::covariance_floor() const {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrized(c * c.transpose()),
                                        Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

void ModelParams::validate() const {
  const auto n = dim();
  require(n > 0, "ModelParams: empty model");
  require(a.rows() == n && a.cols() == n, "ModelParams: A must be n x n");
  require(b.rows() == n && b.cols() == n, "ModelParams: B must be n x n");
  require(c.rows() == n && c.cols() == n, "ModelParams: C must be n x n");
  require(sigma0.rows() == n && sigma0.cols() == n,
          "ModelParams: sigma0 must be n x n");
  require(s0.size() == n, "ModelParams: s0 must have length n");
  require((s0.array() > 0.0).all(), "ModelParams: initial prices must be positive");
  require((sigma0 - sigma0.transpose()).cwiseAbs().maxCoeff() <
              1e-10 * (1.0 + sigma0.cwiseAbs().maxCoeff()),
          "ModelParams: sigma0 must be symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrized(sigma0), Eigen::EigenvaluesOnly);
  require(es.eigenvalues().minCoeff() >= -1e-12 * (1.0 + sigma0.norm()),
          "ModelParams: sigma0 must be positive semidefinite");
  Eigen::JacobiSVD<Mat> svd(c);
  require(svd.singularValues().minCoeff() > 0.0,
          "ModelParams: C must be full rank");
}

PriceFunction PriceFunction::clamped(double floor, double cap) {
  require(floor > 0.0 && cap >= floor,
          "PriceFunction: need 0 < floor <= cap for the clamped variant");
  PriceFunction h;
  h.kind = Kind::kClampedMultiplicative;
  h.floor = floor;
  h.cap = cap;
  return h;
}

double PriceFunction::apply(double s, double r) const {
  const double raw = s * (1.0 + r);
  if (kind == Kind::kMultiplicative) return raw;
  return std::min(cap, std::max(floor, raw));
}

Vec PriceFunction::apply(const Vec& s, const Vec& r) const {
  require(s.size() == r.size(), "PriceFunction: size mismatch");
  Vec out(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) out[i] = apply(s[i], r[i]);
  return out;
}

MarketState MarketState::make(int t, const Vec& s, const Mat& sigma,
                              double q_cap) {
  MarketState st;
  st.t = t;
  st.s = s;
  st.sigma = symmetrized(sigma);
  st.p = dollar_covariance(s, st.sigma);
  st.q = cost_factor(s, st.p, q_cap, &st.degenerate);
  return st;
}

Vec ScenarioTree::child_mean(int v, const std::vector<Vec>& values) const {
  const int begin = nodes[v].first_child;
  require(begin >= 0, "ScenarioTree: node has no children");
  const auto n = values[begin].size();
  Vec acc = Vec::Zero(n);
  for (int c = begin; c < begin + branching; ++c) acc += values[c];
  return acc / branching;
}

Mat step_covariance(const Mat& sigma, const Vec& z, const ModelParams& params) {
  const auto n = params.dim();
  require(sigma.rows() == n && sigma.cols() == n,
          "step_covariance: sigma dimension mismatch");
  require(z.size() == n, "step_covariance: shock dimension mismatch");
  const Vec bz = params.b * z;
  Mat next = params.c * params.c.transpose() +
             params.a * sigma * params.a.transpose() + bz * bz.transpose();
  return symmetrized(next);
}

std::pair<Vec, Vec> sample_return(const Mat& sigma, const Vec& mu,
                                  GaussianRng& rng) {
  require(sigma.rows() == mu.size() && sigma.cols() == mu.size(),
          "sample_return: dimension mismatch");
  const Mat l = psd_factor(sigma);
  const Vec z = l * rng.normal_vector(mu.size());
  return {mu + z, z};
}

Vec compound_prices(const Vec& s, const Vec& r, const PriceFunction& h) {
  require((s.array() > 0.0).all(), "compound_prices: prices must be positive");
  return h.apply(s, r);
}

Mat dollar_covariance(const Vec& s, const Mat& sigma) {
  require(sigma.rows() == s.size() && sigma.cols() == s.size(),
          "dollar_covariance: dimension mismatch");
  return s.asDiagonal() * sigma * s.asDiagonal();
}

double cost_factor(const Vec& s, const Mat& p, double q_cap, bool* degenerate,
                   double eigen_tol) {
  require(p.rows() == s.size() && p.cols() == s.size(),
          "cost_factor: dimension mismatch");
  require((s.array() > 0.0).all(), "cost_factor: prices must be positive");
  const Mat scaled =
      s.cwiseInverse().asDiagonal() * p * s.cwiseInverse().asDiagonal();
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrized(scaled),
                                        Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (lo <= eigen_tol * std::max(1.0, hi)) {
    if (degenerate) *degenerate = true;
    return q_cap;
  }
  if (degenerate) *degenerate = false;
  return std::clamp(hi / lo, 1.0, q_cap);
}

MarketPath simulate_path(const ModelParams& params, const PriceFunction& h,
                         int horizon, std::uint64_t seed,
                         const SimulateOptions& opts) {
  require(horizon >= 1, "simulate_path: horizon must be >= 1");
  params.validate();

  GaussianRng rng(seed);
  MarketPath path;
  path.mu = params.mu;
  path.seed = seed;
  path.states.reserve(horizon + 1);
  path.shocks.reserve(horizon + 1);
  path.states.push_back(MarketState::make(0, params.s0, params.sigma0, opts.q_cap));
  path.shocks.emplace_back();

  for (int t = 1; t <= horizon; ++t) {
    const MarketState& prev = path.states.back();
    auto [r, z] = sample_return(prev.sigma, params.mu, rng);
    const Mat sigma = step_covariance(prev.sigma, z, params);
    const Vec s = compound_prices(prev.s, r, h);
    if (!h.is_clamped() && opts.nonpositive_price_steps &&
        (s.array() <= 0.0).any()) {
      opts.nonpositive_price_steps->push_back(t);
    }
    path.states.push_back(MarketState::make(t, s, sigma, opts.q_cap));
    path.shocks.push_back(z);
  }
  return path;
}

ScenarioTree build_tree(const ModelParams& params, const PriceFunction& h,
                        int depth, int branching, std::uint64_t seed,
                        const TreeOptions& opts) {
  require(depth >= 1, "build_tree: depth must be >= 1");
  require(branching >= 1, "build_tree: branching must be >= 1");
  params.validate();

  std::int64_t total = 1, level = 1;
  for (int d = 0; d < depth; ++d) {
    level *= branching;
    total += level;
    if (total > opts.max_nodes) {
      throw ResourceError("build_tree: " + std::to_string(branching) + "^" +
                          std::to_string(depth) +
                          " nodes exceed the budget of " +
                          std::to_string(opts.max_nodes));
    }
  }

  GaussianRng rng(seed);
  ScenarioTree tree;
  tree.mu = params.mu;
  tree.depth = depth;
  tree.branching = branching;
  tree.nodes.reserve(total);
  tree.depth_begin.assign(depth + 2, 0);

  ScenarioTree::Node root;
  root.state = MarketState::make(0, params.s0, params.sigma0, opts.q_cap);
  root.shock = Vec();
  tree.nodes.push_back(root);
  tree.depth_begin[1] = 1;

  const auto n = params.dim();
  for (int d = 0; d < depth; ++d) {
    const int begin = tree.depth_begin[d];
    const int end = tree.depth_begin[d + 1];
    for (int v = begin; v < end; ++v) {
      tree.nodes[v].first_child = static_cast<int>(tree.nodes.size());
      const MarketState parent = tree.nodes[v].state;  // copy: nodes may realloc
      const Mat l = psd_factor(parent.sigma);

      std::vector<Vec> shocks(branching);
      if (opts.antithetic && branching % 2 == 0) {
        for (int j = 0; j < branching / 2; ++j) {
          shocks[2 * j] = l * rng.normal_vector(n);
          shocks[2 * j + 1] = -shocks[2 * j];
        }
      } else {
        for (int j = 0; j < branching; ++j) shocks[j] = l * rng.normal_vector(n);
      }
      // Recentre so the sibling average is exactly zero.
      Vec mean = Vec::Zero(n);
      for (const Vec& z : shocks) mean += z;
      mean /= branching;
      for (Vec& z : shocks) z -= mean;

      for (int j = 0; j < branching; ++j) {
        ScenarioTree::Node child;
        const Vec r = params.mu + shocks[j];
        const Mat sigma = step_covariance(parent.sigma, shocks[j], params);
        const Vec s = compound_prices(parent.s, r, h);
        child.state = MarketState::make(d + 1, s, sigma, opts.q_cap);
        child.shock = shocks[j];
        child.parent = v;
        child.prob = tree.nodes[v].prob / branching;
        tree.nodes.push_back(std::move(child));
      }
    }
    tree.depth_begin[d + 2] = static_cast<int>(tree.nodes.size());
  }
  return tree;
}

Mat equilibrium_covariance(const ModelParams& params, double tol, int max_iter) {
  params.validate();
  const Mat cct = symmetrized(params.c * params.c.transpose());
  Mat sigma = cct;
  const double scale = std::max(1.0, cct.norm());
  for (int it = 0; it < max_iter; ++it) {
    Mat next = symmetrized(cct + params.a * sigma * params.a.transpose() +
                           params.b * sigma * params.b.transpose());
    const double change = (next - sigma).norm();
    sigma = next;
    if (change < tol * scale && equilibrium_residual(params, sigma) < 1e-10) {
      return sigma;
    }
    if (!sigma.allFinite() || sigma.norm() > 1e100) break;
  }
  throw ModelInstabilityError(
      "equilibrium_covariance: recursion did not contract; the map "
      "Sigma -> A Sigma A^T + B Sigma B^T appears to have spectral radius >= 1");
}

double equilibrium_residual(const ModelParams& params, const Mat& sigma) {
  const Mat res = sigma - params.c * params.c.transpose() -
                  params.a * sigma * params.a.transpose() -
                  params.b * sigma * params.b.transpose();
  return res.norm();
}

}  // namespace mgopt::mgarch
