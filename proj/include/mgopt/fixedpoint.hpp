// The coupled forward (holdings) / backward (costate) optimality system on a
// scenario tree, its two-step fixed-point solver, and the verification
// machinery: damping measurement, the small-cost inverse-norm bound and the
// iteration-decay certificate.
//
// Decisions are taken at depths 1..T; the costate beyond the horizon is
// identically zero (finite-horizon terminal condition). Conditional
// expectations are exact uniform averages over a node's children, which makes
// this module the ground-truth solver that everything faster is tested
// against.

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "mgopt/common.hpp"
#include "mgopt/mgarch.hpp"

namespace mgopt::fixedpoint {

/// Objective parameters of the discounted mean-variance program.
struct LQConfig {
  double delta = 0.0;    ///< discount factor in [0, 1)
  double epsilon = 0.0;  ///< trading-cost scale, > 0
  double gamma = 0.0;    ///< risk aversion, > 0
  int horizon = 0;       ///< number of decision periods T
  Vec x0;                ///< holdings entering period 1

  void validate(Eigen::Index n) const;
};

/// Costate and holdings fields on a scenario tree, one vector per node
/// (index 0 is the root: x equals the initial holdings, lambda is unused).
struct CostateTrajectory {
  std::vector<Vec> lambda;
  std::vector<Vec> x;
  int iterations = 0;  ///< outer two-step rounds performed
};

struct SolveDiagnostics {
  /// Outer error sequence: entry k-1 holds sup over depths of the
  /// probability-weighted mean costate change between rounds k and k-1.
  std::vector<double> outer_errors;
  /// Per-depth expected changes behind each outer_errors entry.
  std::vector<Vec> error_profiles;
  double damping = 0.0;  ///< measured sup of delta * ||(I + Ptilde Psi^-1)^-1||
  int inner_iterations_total = 0;
  bool hit_tolerance = false;
  std::string stop_reason;
};

struct SolveOptions {
  double outer_tol = 1e-8;
  double inner_tol = 1e-10;
  int max_outer = 200;
  int max_inner = 10000;
  bool skip_damping_check = false;  ///< run even when the measured damping is >= 1
  std::optional<std::vector<Vec>> initial_lambda;
};

/// Holdings update: X_t = X_{t-1} - (1/(eps q)) Psi^{-1} lambda_t.
Vec forward_state_step(const Vec& x_prev, const Vec& lambda_t,
                       const mgarch::MarketState& state, const LQConfig& cfg);

/// Costate update: solve (I + Ptilde Psi^{-1}) lambda = delta E[lambda'] -
/// Psi mu + gamma P x_prev, where Ptilde = (gamma/(eps q)) P. Uses a pivoted
/// factorization with a condition guard.
Vec backward_costate_step(const Vec& expected_lambda_next, const Vec& x_prev,
                          const mgarch::MarketState& state, const Vec& mu,
                          const LQConfig& cfg);

struct InnerReport {
  int iterations = 0;               ///< map applications performed
  std::vector<double> sup_changes;  ///< sup-node change after each application
  bool converged = false;
};

/// Inner costate fixed point for a frozen holdings field: repeatedly applies
/// the full-field costate update (conditional expectations taken from the
/// previous sweep) until the sup-node change drops below tol.
std::pair<std::vector<Vec>, InnerReport> inner_fixed_point(
    const mgarch::ScenarioTree& tree, const std::vector<Vec>& x_field,
    const LQConfig& cfg, double tol = 1e-10, int max_iter = 10000,
    const std::vector<Vec>* initial_lambda = nullptr);

/// Alternate the forward holdings pass and the inner costate fixed point
/// until the outer costate change is below tolerance. The returned pair
/// satisfies the forward equation exactly and the costate equation to
/// solver tolerance at every node.
std::pair<CostateTrajectory, SolveDiagnostics> solve_two_step(
    const mgarch::ScenarioTree& tree, const LQConfig& cfg,
    const SolveOptions& opts = {});

/// sup over the given states of delta * ||(I + Ptilde Psi^{-1})^{-1}||
/// (spectral norm). Values below one certify that the inner iteration
/// contracts.
double measure_damping(std::span<const mgarch::MarketState> states,
                       const LQConfig& cfg);
double measure_damping(const mgarch::ScenarioTree& tree, const LQConfig& cfg);
double measure_damping(const mgarch::MarketPath& path, const LQConfig& cfg);

/// Primitive bounds of a clamped-price market and the constants derived
/// from them.
struct BoundConstants {
  double chi = 0.0;      ///< trading-cost factor cap
  double h_inf = 0.0;    ///< price upper bound
  double s_floor = 0.0;  ///< price lower bound
  double c = 0.0;        ///< smallest eigenvalue of C C^T
  double gamma = 0.0;
  double delta = 0.0;
  double kappa = 0.0;      ///< chi h_inf / (gamma s_floor^2 c)
  double omega = 0.0;      ///< chi h_inf / s_floor
  double delta_eps = 0.0;  ///< delta * inverse_norm_bound(epsilon)

  static BoundConstants make(double chi, double h_inf, double s_floor, double c,
                             double gamma, double delta, double epsilon);
};

/// Bound on sup ||(I + Ptilde Psi^{-1})^{-1}||: eps*kappa / (1 - eps^2
/// kappa^2). Requires eps * kappa < 1; throws std::invalid_argument naming
/// the violated inequality otherwise.
double inverse_norm_bound(const BoundConstants& consts, double epsilon);

struct CertificateReport {
  bool passed = false;
  int first_failure_k = -1;  ///< 1-based outer round of the first violation
  std::vector<double> errors;          ///< sup-over-depth expected changes E(k)
  std::vector<double> errors_l2;       ///< 2-norm over depths of the same
  std::vector<double> explicit_bounds; ///< transient bound on errors_l2[k-1]
  double damping = 0.0;
  double decay_tolerance = 0.0;
};

/// Runs the two-step scheme for k_max rounds recording the error sequence,
/// then certifies that (a) every recorded E(k) with k >= T has fallen below
/// decay_tol relative to E(1) and (b) during the transient k < T the 2-norm
/// error respects the explicit factorial-decay envelope
/// (1/(1-damping))^{k-1} Omega^{k-1} T^{k-1/2} / (k-1)! * E(1).
CertificateReport convergence_certificate(const mgarch::ScenarioTree& tree,
                                          const LQConfig& cfg,
                                          const BoundConstants& consts,
                                          int k_max, double decay_tol = 1e-10);

/// Discounted objective of a holdings field on the tree:
/// sum over depths t=1..T and nodes of prob * delta^t *
/// [mu' Psi x - (eps q / 2) a' Psi a - (gamma/2) x' P x].
double tree_objective(const mgarch::ScenarioTree& tree,
                      const std::vector<Vec>& x_field, const LQConfig& cfg);

/// Largest costate-equation residual over nodes:
/// || lambda - (delta E[lambda'] - Psi mu + gamma P x) ||_inf.
double costate_residual(const mgarch::ScenarioTree& tree,
                        const CostateTrajectory& traj, const LQConfig& cfg);

}  // namespace mgopt::fixedpoint
