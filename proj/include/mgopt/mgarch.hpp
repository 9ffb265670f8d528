// Multivariate GARCH(1,1) market model: covariance recursion, price
// compounding, dollar-return covariance, the condition-number trading-cost
// factor, Monte Carlo path simulation and scenario-tree construction.

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mgopt/common.hpp"

namespace mgopt::mgarch {

/// Model coefficients and initial state.
///
/// Return dynamics:   R_{t+1} = mu + Z_{t+1},  Z_{t+1} ~ N(0, Sigma_t)
/// Covariance:        Sigma_{t+1} = C C^T + A Sigma_t A^T + B Z_{t+1} Z_{t+1}^T B^T
struct ModelParams {
  Vec mu;      ///< per-period expected return
  Mat a;       ///< covariance persistence coefficient
  Mat b;       ///< shock response coefficient
  Mat c;       ///< baseline factor; C C^T must be invertible
  Mat sigma0;  ///< initial return covariance (symmetric PSD)
  Vec s0;      ///< initial prices, all positive

  Eigen::Index dim() const { return mu.size(); }

  /// Smallest eigenvalue of C C^T (the uniform covariance floor).
  double covariance_floor() const;

  /// Throws std::invalid_argument on inconsistent dimensions, non-PSD
  /// sigma0, rank-deficient C, or non-positive initial prices.
  void validate() const;
};

/// Price update S_{t+1} = h(S_t, R_{t+1}).
///
/// The multiplicative rule is s*(1+r). The clamped variant additionally
/// confines prices to [floor, cap] so that a uniform positive lower bound
/// and a finite upper bound hold for every input.
struct PriceFunction {
  enum class Kind { kMultiplicative, kClampedMultiplicative };

  Kind kind = Kind::kMultiplicative;
  double floor = 0.0;  ///< lower price bound (clamped variant)
  double cap = 0.0;    ///< upper price bound (clamped variant)

  static PriceFunction multiplicative() { return {}; }
  static PriceFunction clamped(double floor, double cap);

  double apply(double s, double r) const;
  Vec apply(const Vec& s, const Vec& r) const;
  bool is_clamped() const { return kind == Kind::kClampedMultiplicative; }
};

/// Per-step market snapshot.
struct MarketState {
  int t = 0;
  Vec s;       ///< prices
  Mat sigma;   ///< return covariance
  Mat p;       ///< dollar-return covariance diag(s)*sigma*diag(s)
  double q = 1.0;        ///< trading-cost factor, in [1, chi]
  bool degenerate = false;  ///< cost factor hit the cap because sigma was singular

  Eigen::Index dim() const { return s.size(); }
  /// diag(s) applied to a vector (Psi_t v).
  Vec psi(const Vec& v) const { return s.cwiseProduct(v); }
  /// diag(s)^{-1} applied to a vector.
  Vec psi_inv(const Vec& v) const { return v.cwiseQuotient(s); }

  static MarketState make(int t, const Vec& s, const Mat& sigma, double q_cap);
};

/// A simulated trajectory of length T+1 (index 0 holds the initial state)
/// together with the shocks that produced it.
struct MarketPath {
  std::vector<MarketState> states;
  std::vector<Vec> shocks;  ///< shocks[t] drives the step t-1 -> t, shocks[0] is empty
  Vec mu;                   ///< drift of the model that produced the path
  std::uint64_t seed = 0;

  int horizon() const { return static_cast<int>(states.size()) - 1; }
};

/// Finite branching market evolution. Conditional expectations are exact
/// sums over the (uniformly weighted) children of a node.
struct ScenarioTree {
  struct Node {
    MarketState state;
    Vec shock;           ///< shock that produced this node (empty at the root)
    int parent = -1;
    int first_child = -1;  ///< children are contiguous; -1 at leaves
    double prob = 1.0;     ///< unconditional probability of reaching the node
  };

  std::vector<Node> nodes;          ///< breadth-first order, root at index 0
  std::vector<int> depth_begin;     ///< node-index range of each depth d:
                                    ///< [depth_begin[d], depth_begin[d+1])
  Vec mu;                           ///< drift of the generating model
  int depth = 0;
  int branching = 1;

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int children_begin(int v) const { return nodes[v].first_child; }
  bool is_leaf(int v) const { return nodes[v].first_child < 0; }
  /// Uniform average of per-child values at node v.
  Vec child_mean(int v, const std::vector<Vec>& values) const;
};

/// One covariance-recursion step: C C^T + A sigma A^T + B z z^T B^T.
Mat step_covariance(const Mat& sigma, const Vec& z, const ModelParams& params);

/// Draw (r, z) with z ~ N(0, sigma) and r = mu + z.
std::pair<Vec, Vec> sample_return(const Mat& sigma, const Vec& mu,
                                  GaussianRng& rng);

/// Apply the price update elementwise.
Vec compound_prices(const Vec& s, const Vec& r, const PriceFunction& h);

/// diag(s) * sigma * diag(s).
Mat dollar_covariance(const Vec& s, const Mat& sigma);

/// Trading-cost factor: condition number of diag(s)^{-1} p diag(s)^{-1},
/// clamped to [1, q_cap]. When the smallest eigenvalue is below eigen_tol the
/// factor saturates at q_cap and *degenerate (if given) is set.
double cost_factor(const Vec& s, const Mat& p, double q_cap = 1e6,
                   bool* degenerate = nullptr, double eigen_tol = 1e-14);

struct SimulateOptions {
  double q_cap = 1e6;
  /// Prices at or below zero under the multiplicative rule are recorded here
  /// rather than raising.
  std::vector<int>* nonpositive_price_steps = nullptr;
};

/// Simulate a path of horizon T (T+1 states). Deterministic given the seed.
MarketPath simulate_path(const ModelParams& params, const PriceFunction& h,
                         int horizon, std::uint64_t seed,
                         const SimulateOptions& opts = {});

struct TreeOptions {
  double q_cap = 1e6;
  std::int64_t max_nodes = 4'000'000;
  /// Pair shocks antithetically when the branching factor is even.
  bool antithetic = true;
};

/// Build a scenario tree of the given depth and branching factor. Sibling
/// shocks are recentred so their average is exactly zero, which makes the
/// one-step conditional mean of R equal to mu by construction.
ScenarioTree build_tree(const ModelParams& params, const PriceFunction& h,
                        int depth, int branching, std::uint64_t seed,
                        const TreeOptions& opts = {});

/// Solve Sigma = C C^T + A Sigma A^T + B Sigma B^T by fixed-point iteration
/// from C C^T. Throws ModelInstabilityError when the recursion does not
/// contract within max_iter sweeps.
Mat equilibrium_covariance(const ModelParams& params, double tol = 1e-12,
                           int max_iter = 200000);

/// Frobenius-norm residual of the equilibrium equation at sigma.
double equilibrium_residual(const ModelParams& params, const Mat& sigma);

}  // namespace mgopt::mgarch
