#include "mgopt/backtest.hpp"

#include <cmath>

namespace mgopt::backtest {

PortfolioState wealth_step(const PortfolioState& prev, const Vec& trade,
                           const mgarch::MarketState& state_prev,
                           const mgarch::MarketState& state_now,
                           const LQConfig& cfg) {
  PortfolioState next;
  const double pnl = prev.x.dot(state_now.s - state_prev.s);
  const double cost = 0.5 * cfg.epsilon * state_now.q *
                      trade.dot(state_now.psi(trade));
  next.wealth = prev.wealth + pnl - cost;
  const double prior_trade_value =
      prev.last_trade.size() > 0 ? prev.last_trade.dot(state_prev.s) : 0.0;
  next.invested = prev.invested + prior_trade_value;
  next.x = prev.x + trade;
  next.last_trade = trade;
  return next;
}

Policy myopic_policy(const LQConfig& cfg,
                     expansion::DriftConvention convention) {
  Policy p;
  p.label = "myopic";
  p.decide = [cfg, convention](const Vec& x_prev,
                               const mgarch::MarketState& state, const Vec& mu) {
    return expansion::myopic_step(x_prev, state, mu, cfg, convention);
  };
  return p;
}

Policy expansion_policy(const LQConfig& cfg, expansion::Variant variant) {
  Policy p;
  p.label = "expansion";
  p.decide = [cfg, variant](const Vec& x_prev, const mgarch::MarketState& state,
                            const Vec& mu) {
    const Vec lambda0 = expansion::base_costate(x_prev, state, mu, cfg, variant);
    return expansion::expansion_state_step(x_prev, lambda0,
                                           Vec::Zero(x_prev.size()), state, cfg);
  };
  return p;
}

Policy expansion_nn_policy(const LQConfig& cfg, neural::MlpParams theta,
                           expansion::Variant variant) {
  theta.validate();
  Policy p;
  p.label = "expansion-nn";
  p.decide = [cfg, variant, theta = std::move(theta)](
                 const Vec& x_prev, const mgarch::MarketState& state,
                 const Vec& mu) {
    const Vec lambda0 = expansion::base_costate(x_prev, state, mu, cfg, variant);
    const Vec estimate =
        neural::forward(theta, neural::make_features(x_prev, state, mu));
    const Vec lambda1 =
        expansion::correction_from_estimate(estimate, state, cfg, variant);
    return expansion::expansion_state_step(x_prev, lambda0, lambda1, state, cfg);
  };
  return p;
}

ObjectiveBreakdown objective_decomposition(const mgarch::MarketPath& path,
                                           const std::vector<Vec>& holdings,
                                           const LQConfig& cfg) {
  require(holdings.size() == path.states.size(),
          "objective_decomposition: holdings/path length mismatch");
  ObjectiveBreakdown out;
  for (int t = 1; t <= path.horizon(); ++t) {
    const auto& st = path.states[t];
    const Vec trade = holdings[t] - holdings[t - 1];
    const double discount = std::pow(cfg.delta, t);
    out.total_return += discount * path.mu.dot(st.psi(holdings[t]));
    out.total_cost +=
        discount * 0.5 * cfg.epsilon * st.q * trade.dot(st.psi(trade));
    out.total_risk +=
        discount * 0.5 * cfg.gamma * holdings[t].dot(st.p * holdings[t]);
  }
  out.value = out.total_return - out.total_cost - out.total_risk;
  return out;
}

BacktestReport run_backtest(const Policy& policy, const mgarch::MarketPath& path,
                            const LQConfig& cfg, const BacktestOptions& opts) {
  const auto n = path.mu.size();
  cfg.validate(n);

  BacktestReport report;
  report.policy_label = policy.label;
  report.w0 = opts.w0;

  PortfolioState state;
  state.x = cfg.x0;
  state.wealth = opts.w0;
  state.last_trade = Vec::Zero(n);

  std::vector<Vec> holdings;
  holdings.reserve(path.states.size());
  holdings.push_back(cfg.x0);
  report.steps.push_back(
      {0, state.wealth, state.invested, 0.0, 0.0, state.x});

  for (int t = 1; t <= path.horizon(); ++t) {
    const auto& now = path.states[t];
    const auto& prev = path.states[t - 1];
    const Vec x_new = policy.decide(state.x, now, path.mu);
    const Vec trade = x_new - state.x;
    state = wealth_step(state, trade, prev, now, cfg);
    holdings.push_back(state.x);

    StepRecord rec;
    rec.t = t;
    rec.wealth = state.wealth;
    rec.invested = state.invested;
    rec.cost = 0.5 * cfg.epsilon * now.q * trade.dot(now.psi(trade));
    rec.risk = 0.5 * cfg.gamma * state.x.dot(now.p * state.x);
    rec.x = state.x;
    report.steps.push_back(std::move(rec));
  }

  const ObjectiveBreakdown breakdown =
      objective_decomposition(path, holdings, cfg);
  report.objective = breakdown.value;
  report.total_return = breakdown.total_return;
  report.total_cost = breakdown.total_cost;
  report.total_risk = breakdown.total_risk;
  return report;
}

ComparisonTable compare_policies(const std::vector<BacktestReport>& reports) {
  require(!reports.empty(), "compare_policies: no reports");
  const auto steps = reports.front().steps.size();
  const double w0 = reports.front().w0;
  for (const auto& r : reports) {
    require(r.steps.size() == steps && r.w0 == w0,
            "compare_policies: reports were not produced on the same run");
  }
  ComparisonTable table;
  table.wealth_ratios.resize(reports.size(), reports.size());
  for (std::size_t i = 0; i < reports.size(); ++i) {
    ComparisonRow row;
    row.label = reports[i].policy_label;
    row.final_wealth = reports[i].final_wealth();
    row.pct_return = 100.0 * (row.final_wealth / w0 - 1.0);
    row.objective = reports[i].objective;
    table.rows.push_back(row);
    for (std::size_t j = 0; j < reports.size(); ++j) {
      table.wealth_ratios(i, j) =
          reports[i].final_wealth() / reports[j].final_wealth();
    }
  }
  return table;
}

std::vector<FoldSpec> make_folds(int num_rows, int train_len, int test_len,
                                 int stride) {
  require(train_len >= 1 && test_len >= 1 && stride >= 1,
          "make_folds: window lengths must be positive");
  const int needed = train_len + test_len;
  if (num_rows < needed) {
    throw DataError("make_folds: need at least " + std::to_string(needed) +
                    " rows, got " + std::to_string(num_rows));
  }
  std::vector<FoldSpec> folds;
  for (int start = 0; start + needed <= num_rows; start += stride) {
    FoldSpec f;
    f.train_begin = start;
    f.train_end = start + train_len;
    f.test_begin = f.train_end;
    f.test_end = f.train_end + test_len;
    folds.push_back(f);
  }
  return folds;
}

}  // namespace mgopt::backtest
