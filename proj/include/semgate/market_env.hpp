#pragma once

// Trading environment: tradability filter, cap- and vote-weighted portfolios, the
// 10-day excess-return reward, and a tranche-rolling backtest.

#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "semgate/date.hpp"
#include "semgate/decision_codec.hpp"

namespace semgate {

struct AssetStatus {
  bool st = false;
  bool halted = false;
  bool limit_hit = false;
  bool newly_listed = false;
};

struct AssetRecord {
  std::string symbol;
  Date date;
  double cap = 0.0;
  AssetStatus status;
  double forward_return_10d = 0.0;

  /// Throws DomainError unless cap > 0 and the forward return is finite.
  void validate() const;
};

struct Holding {
  std::string symbol;
  double weight = 0.0;
  int votes = 1;
};

struct PortfolioSnapshot {
  Date date;
  std::vector<Holding> holdings;  ///< empty means cash
  double benchmark_return_10d = 0.0;

  bool empty() const { return holdings.empty(); }
};

struct BacktestConfig {
  int tranches = 10;
  int holding_days = 10;
  double one_way_cost = 0.0015;
  std::string benchmark = "BENCH";

  /// tranches >= 1, 1 <= holding_days <= tranches, cost in [0, 1).
  void validate() const;
};

/// Drops special-treatment, halted and limit-hit records. Newly listed stocks stay.
std::vector<AssetRecord> filter_universe(std::span<const AssetRecord> records);

/// w_i = Cap_i / sum Cap. An empty selection yields an empty snapshot.
PortfolioSnapshot cap_weights(std::span<const AssetRecord> selected);

/// w_i = V_i Cap_i / sum V Cap. With every V_i = 1 the result equals cap_weights bit for bit.
PortfolioSnapshot vote_weights(std::span<const std::pair<AssetRecord, int>> selected);

/// r = sum w_i (rho_i - rho_bm) - 2 cost. An empty snapshot earns 0 and pays nothing.
double reward_10d(const PortfolioSnapshot& snapshot, const std::map<std::string, double>& returns,
                  double benchmark, double cost);

/// Daily close-to-close returns with caps and status flags, indexed by trading date.
/// The trading calendar is the set of dates present in the table.
class ReturnTable {
 public:
  struct Row {
    double ret = 0.0;
    double cap = 0.0;
    AssetStatus status;
  };

  /// CSV with header: date,symbol,return,cap,st,halted,limit_hit,newly_listed.
  /// Flags accept 0/1/true/false. Throws DomainError with the line number on bad input.
  static ReturnTable from_csv(std::istream& in);
  static ReturnTable load(const std::filesystem::path& path);

  void add(const Date& date, const std::string& symbol, Row row);

  const std::vector<Date>& calendar() const { return calendar_; }
  std::optional<Row> row(const Date& date, const std::string& symbol) const;
  std::optional<double> daily_return(const Date& date, const std::string& symbol) const;

  /// Compounded return over the `horizon` trading days after `date`. Nullopt when the
  /// window runs past the calendar or the symbol is unpriced on one of those days.
  std::optional<double> forward_return(const Date& date, const std::string& symbol, int horizon) const;

  /// Records priced on `date` with a complete forward window of `horizon` days (0 asks for
  /// none); the benchmark symbol is excluded. Throws DomainError if `date` is not a
  /// trading day or the window runs past the calendar.
  std::vector<AssetRecord> records(const Date& date, int horizon, const std::string& benchmark) const;

 private:
  std::vector<Date> calendar_;
  std::map<Date, std::map<std::string, Row>> rows_;
};

/// Long tickers that survive the tradability filter, cap-weighted, with the reward inputs.
struct ScoredPortfolio {
  PortfolioSnapshot snapshot;
  std::map<std::string, double> returns;
  double reward = 0.0;
};

/// Training-phase reward of a single decision on `date`.
ScoredPortfolio score_decision(const TradingDecision& decision, const Date& date, const ReturnTable& table,
                               const BacktestConfig& config);

/// Backtest-phase snapshot: votes are the number of decisions that go long each ticker.
PortfolioSnapshot vote_snapshot(std::span<const TradingDecision> decisions, const Date& date,
                                const ReturnTable& table, const BacktestConfig& config);

struct Metrics {
  double cum_return = 0.0;
  std::optional<double> sharpe;  ///< nullopt when daily returns have no variance
  double max_drawdown = 0.0;     ///< <= 0
};

/// Simple daily returns of `nav`; Sharpe = mean / population std * sqrt(252), zero risk-free.
Metrics metrics(std::span<const double> nav);

struct BacktestResult {
  std::vector<Date> dates;
  std::vector<double> nav;            ///< end-of-day, starting capital 1
  std::vector<double> benchmark_nav;
  double costs_paid = 0.0;
  Metrics portfolio;                  ///< over [1, nav...]
  Metrics benchmark;
};

/// Capital is split into `tranches` equal sleeves. On day d the sleeve d mod tranches is
/// liquidated and re-entered into that day's snapshot; sleeves are liquidated once they
/// have been held `holding_days`. Entries and exits pay one_way_cost on traded notional.
/// Positions entered on day d earn the returns dated after d.
BacktestResult run_backtest(std::span<const PortfolioSnapshot> snapshots, const ReturnTable& table,
                            const BacktestConfig& config);

nlohmann::json to_json(const Metrics& m);
nlohmann::json to_json(const BacktestResult& result);
nlohmann::json to_json(const PortfolioSnapshot& snapshot);

}  // namespace semgate
