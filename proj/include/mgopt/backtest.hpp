// Wealth and investment accounting, objective decomposition along realized
// paths, policy evaluation, comparison tables and rolling train/test folds.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mgopt/common.hpp"
#include "mgopt/expansion.hpp"
#include "mgopt/fixedpoint.hpp"
#include "mgopt/mgarch.hpp"
#include "mgopt/neural.hpp"

namespace mgopt::backtest {

using fixedpoint::LQConfig;

struct PortfolioState {
  Vec x;                 ///< holdings in contract units
  double wealth = 0.0;
  double invested = 0.0;
  Vec last_trade;        ///< trade executed in the previous period
};

/// One accounting step:
///   W_t = W_{t-1} + X_{t-1}'(S_t - S_{t-1}) - (eps q_t / 2) a' Psi_t a
///   I_t = I_{t-1} + a_{t-1}' S_{t-1}
///   X_t = X_{t-1} + a
PortfolioState wealth_step(const PortfolioState& prev, const Vec& trade,
                           const mgarch::MarketState& state_prev,
                           const mgarch::MarketState& state_now,
                           const LQConfig& cfg);

/// A trading rule: holdings after trading at the given state.
struct Policy {
  std::string label;
  std::function<Vec(const Vec& x_prev, const mgarch::MarketState& state,
                    const Vec& mu)>
      decide;
};

Policy myopic_policy(const LQConfig& cfg,
                     expansion::DriftConvention convention =
                         expansion::DriftConvention::kDollar);

/// Expansion policy with the correction term dropped (base term only).
Policy expansion_policy(const LQConfig& cfg,
                        expansion::Variant variant =
                            expansion::Variant::kStabilized);

/// Expansion policy whose correction comes from the trained network.
Policy expansion_nn_policy(const LQConfig& cfg, neural::MlpParams theta,
                           expansion::Variant variant =
                               expansion::Variant::kStabilized);

struct StepRecord {
  int t = 0;
  double wealth = 0.0;
  double invested = 0.0;
  double cost = 0.0;  ///< undiscounted per-step transaction cost
  double risk = 0.0;  ///< undiscounted per-step risk penalty
  Vec x;
};

struct BacktestReport {
  std::string policy_label;
  double w0 = 100.0;
  std::vector<StepRecord> steps;  ///< index 0 holds the initial state
  double objective = 0.0;         ///< discounted value of the run
  double total_return = 0.0;      ///< discounted expected-gain component
  double total_cost = 0.0;        ///< discounted transaction-cost component
  double total_risk = 0.0;        ///< discounted risk-penalty component

  double final_wealth() const { return steps.back().wealth; }
};

struct ObjectiveBreakdown {
  double value = 0.0;
  double total_cost = 0.0;
  double total_risk = 0.0;
  double total_return = 0.0;
};

/// Discounted objective of a realized holdings sequence x[0..T] along a path:
/// per step, gain mu' Psi x minus cost (eps q/2) a' Psi a minus risk
/// (gamma/2) x' P x, discounted by delta^t. The identity
/// value = total_return - total_cost - total_risk holds exactly because all
/// four accumulate in the same order.
ObjectiveBreakdown objective_decomposition(const mgarch::MarketPath& path,
                                           const std::vector<Vec>& holdings,
                                           const LQConfig& cfg);

struct BacktestOptions {
  double w0 = 100.0;
};

/// Step the policy along the path applying the accounting each period.
BacktestReport run_backtest(const Policy& policy, const mgarch::MarketPath& path,
                            const LQConfig& cfg,
                            const BacktestOptions& opts = {});

struct ComparisonRow {
  std::string label;
  double final_wealth = 0.0;
  double pct_return = 0.0;  ///< 100 * (W_T / W_0 - 1)
  double objective = 0.0;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
  Mat wealth_ratios;  ///< entry (i, j) = W_T(i) / W_T(j)
};

/// Side-by-side summary of reports produced on the same path and config.
ComparisonTable compare_policies(const std::vector<BacktestReport>& reports);

struct FoldSpec {
  int train_begin = 0;  ///< row ranges, half-open
  int train_end = 0;
  int test_begin = 0;
  int test_end = 0;
};

/// Rolling train/test windows over a list of row indices (typically trading
/// days): fold k trains on [k*stride, k*stride + train_len) and tests on the
/// following test_len rows.
std::vector<FoldSpec> make_folds(int num_rows, int train_len, int test_len,
                                 int stride);

}  // namespace mgopt::backtest
