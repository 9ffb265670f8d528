// Small-cost expansion of the costate: explicit base term, first-order
// correction (exact on a scenario tree), the induced holdings update, the
// myopic baseline it collapses to, and the truncation-error scan that
// measures the expansion's accuracy order against the fixed-point solver.

#pragma once

#include <vector>

#include "mgopt/common.hpp"
#include "mgopt/fixedpoint.hpp"
#include "mgopt/mgarch.hpp"

namespace mgopt::expansion {

using fixedpoint::LQConfig;

/// Which form of the expansion operator to use.
enum class Variant {
  kStabilized,  ///< (eps I + (gamma/q) P Psi^{-1})^{-1}; keeps the cost scale
                ///< inside the operator
  kNaive,       ///< ((gamma/q) P Psi^{-1})^{-1}; base term goes straight to
                ///< the aim portfolio, corrections compensate for costs
};

/// Drift vector fed to the myopic trade rule.
enum class DriftConvention {
  kDollar,  ///< Psi mu: per-asset dollar drift; makes the myopic rule equal
            ///< the zeroth-order expansion exactly
  kReturn,  ///< mu: plain return drift
};

/// Base (zeroth-order) rescaled costate at a state with entering holdings
/// x_prev.
Vec base_costate(const Vec& x_prev, const mgarch::MarketState& state,
                 const Vec& mu, const LQConfig& cfg, Variant variant);

/// First-order correction at a tree node with entering holdings x_prev:
/// delta * op^{-1} * E[base at the children], with the child base terms
/// evaluated at the holdings this node's own update produces (the two are
/// coupled affinely and solved exactly). Zero at the horizon.
Vec correction_costate_oracle(const mgarch::ScenarioTree& tree, int node,
                              const Vec& x_prev, const LQConfig& cfg,
                              Variant variant);

/// First-order correction from an externally estimated conditional mean of
/// the next-period base term: delta * op^{-1} * estimate.
Vec correction_from_estimate(const Vec& estimate,
                             const mgarch::MarketState& state,
                             const LQConfig& cfg, Variant variant);

/// Holdings update X = x_prev - (1/q) Psi^{-1} (lambda0 + eps * lambda1).
Vec expansion_state_step(const Vec& x_prev, const Vec& lambda0,
                         const Vec& lambda1, const mgarch::MarketState& state,
                         const LQConfig& cfg);

/// Single-period trade rule:
/// X = x_prev + (1/(eps q)) Psi^{-1} (I + Ptilde Psi^{-1})^{-1} (m - gamma P x_prev).
Vec myopic_step(const Vec& x_prev, const mgarch::MarketState& state,
                const Vec& mu, const LQConfig& cfg,
                DriftConvention convention = DriftConvention::kDollar);

/// Expansion policy evaluated on every node of a tree.
struct ExpansionField {
  std::vector<Vec> lambda0;
  std::vector<Vec> lambda1;
  std::vector<Vec> x;
};

ExpansionField expand_on_tree(const mgarch::ScenarioTree& tree,
                              const LQConfig& cfg,
                              Variant variant = Variant::kStabilized);

struct ErrorScanRow {
  double epsilon = 0.0;
  double error = 0.0;    ///< sup over depths of E|| base + eps*corr - solved ||
  double damping = 0.0;  ///< measured damping at this epsilon
};

struct ErrorScan {
  std::vector<ErrorScanRow> rows;
  double slope = 0.0;  ///< least-squares slope of log(error) vs log(eps)
};

/// For each cost scale in the grid, solve the full fixed point on the tree,
/// evaluate the truncated expansion along its own holdings path, and record
/// the sup-over-time expected difference of the rescaled costates. Requires
/// the measured damping to stay below one for every grid entry.
ErrorScan expansion_error_scan(const mgarch::ScenarioTree& tree,
                               const LQConfig& cfg,
                               const std::vector<double>& eps_grid,
                               Variant variant = Variant::kStabilized);

}  // namespace mgopt::expansion
